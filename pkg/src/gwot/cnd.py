"""CND / CPD certification and concavity witnesses for separable GW losses."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    Coupling,
    DiffPlan,
    as_histogram,
    as_tensor,
    get_loss,
    gw_objective_separable,
)
from .polytope import random_coupling, random_vertex

VERDICTS = ("CND", "CPD", "both", "neither")


class ConcavityError(ValueError):
    """Raised when a routine needs the opposite concavity verdict."""


def centering_matrix(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("centering matrix needs n >= 1")
    return np.eye(n) - np.full((n, n), 1.0 / n)


def _zero_sum_basis(n: int) -> np.ndarray:
    """Orthonormal basis of ``{u : sum(u) = 0}`` as an ``n x (n-1)`` matrix."""
    if n == 1:
        return np.zeros((1, 0))
    # Helmert columns
    V = np.zeros((n, n - 1))
    for k in range(1, n):
        V[:k, k - 1] = 1.0
        V[k, k - 1] = -k
        V[:, k - 1] /= np.sqrt(k * (k + 1))
    return V


@dataclass(frozen=True)
class CndCertificate:
    """Verdict plus eigen-evidence on the zero-sum subspace.

    ``max_eigenvalue``/``max_vector`` maximize ``u^T C u`` over unit zero-sum
    ``u``; ``min_*`` minimize it. ``centered_eigenvalues`` is the full spectrum
    of ``H C H`` (it also carries the trivial zero along ``1``).
    """

    verdict: str
    tol: float
    max_eigenvalue: float
    max_vector: np.ndarray
    min_eigenvalue: float
    min_vector: np.ndarray
    centered_eigenvalues: np.ndarray
    sub_eigenvalues: np.ndarray
    sub_vectors: np.ndarray

    @property
    def is_cnd(self) -> bool:
        return self.verdict in ("CND", "both")

    @property
    def is_cpd(self) -> bool:
        return self.verdict in ("CPD", "both")

    @property
    def extreme_eigenvalue(self) -> float:
        return self.min_eigenvalue if self.verdict == "CPD" else self.max_eigenvalue

    @property
    def witness_vector(self) -> np.ndarray:
        return self.min_vector if self.verdict == "CPD" else self.max_vector


def certify_cnd(C, tol: float | None = None) -> CndCertificate:
    """Classify a symmetric matrix as CND, CPD, both or neither.

    ``C`` is CND iff ``H C H`` is negative semi-definite, ``H`` the centering
    matrix. The default tolerance is ``1e-9 * max(1, max|C|)``.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("certify_cnd needs a square matrix")
    if np.any(np.abs(C - C.T) > 1e-12 * np.maximum(1.0, np.abs(C))):
        raise ValueError("certify_cnd needs a symmetric matrix")
    n = C.shape[0]
    if tol is None:
        tol = 1e-9 * max(1.0, float(np.abs(C).max()) if C.size else 1.0)
    H = centering_matrix(n)
    centered = np.linalg.eigvalsh(H @ C @ H)
    V = _zero_sum_basis(n)
    if n == 1:
        sub_vals = np.zeros(0)
        sub_vecs = np.zeros((1, 0))
        lo = hi = 0.0
        lo_v = hi_v = np.zeros(1)
    else:
        sub_vals, W = np.linalg.eigh(V.T @ C @ V)
        sub_vecs = V @ W
        lo, hi = float(sub_vals[0]), float(sub_vals[-1])
        lo_v, hi_v = sub_vecs[:, 0], sub_vecs[:, -1]
    cnd = centered.max() <= tol
    cpd = centered.min() >= -tol
    verdict = "both" if cnd and cpd else "CND" if cnd else "CPD" if cpd else "neither"
    return CndCertificate(verdict, float(tol), hi, hi_v, lo, lo_v, centered, sub_vals, sub_vecs)


@dataclass(frozen=True)
class ConcavityVerdict:
    concave: bool
    h1_certificate: CndCertificate
    h2_certificate: CndCertificate


def separable_concavity_check(loss, C, Cb, tol: float | None = None) -> ConcavityVerdict:
    """Concave iff ``h1(C)`` and ``h2(Cb)`` are both CND or both CPD."""
    loss = get_loss(loss)
    loss.check_domain(C, Cb)
    c1 = certify_cnd(loss.h1(np.asarray(C, dtype=float)), tol)
    c2 = certify_cnd(loss.h2(np.asarray(Cb, dtype=float)), tol)
    concave = (c1.is_cnd and c2.is_cnd) or (c1.is_cpd and c2.is_cpd)
    return ConcavityVerdict(bool(concave), c1, c2)


@dataclass(frozen=True)
class ConcavityWitness:
    P1: Coupling
    P2: Coupling
    Q: DiffPlan
    midpoint_gap: float
    eigenvalue_product: float


def build_concavity_witness(loss, C, Cb, a, b, tol: float | None = None) -> ConcavityWitness:
    """Two couplings whose midpoint has a strictly lower GW value than their average.

    With ``A = H h1(C) H`` and ``B = H (-h2(Cb)) H`` the quadratic part of the
    midpoint gap along a rank-one direction ``u v^T`` is ``-1/4 mu lambda``
    (eigenvalues of ``A`` and ``B``). Pairs with ``mu * lambda > 0`` are tried,
    largest product first. ``eps`` is half of ``min a_i b_j / |Q_ij|``.
    """
    loss = get_loss(loss)
    a, b = as_histogram(a), as_histogram(b)
    C = np.asarray(C, dtype=float)
    Cb = np.asarray(Cb, dtype=float)
    verdict = separable_concavity_check(loss, C, Cb, tol)
    if verdict.concave:
        raise ConcavityError("loss is concave on this instance; no witness exists")
    ab = np.outer(a.weights, b.weights)
    if np.any(ab <= 0):
        raise ValueError("witness construction needs strictly positive marginals")
    c1 = verdict.h1_certificate
    neg_h2 = certify_cnd(-loss.h2(Cb), tol)
    mus, U = c1.sub_eigenvalues, c1.sub_vectors
    lams, V = neg_h2.sub_eigenvalues, neg_h2.sub_vectors
    prods = np.outer(mus, lams)
    order = np.argsort(-prods, axis=None, kind="stable")
    thresh = c1.tol * neg_h2.tol
    Hn = np.eye(a.weights.size) - 1.0 / a.weights.size
    Hm = np.eye(b.weights.size) - 1.0 / b.weights.size
    for flat in order:
        p, q = np.unravel_index(flat, prods.shape)
        if prods[p, q] <= thresh:
            break
        Q = np.outer(Hn @ U[:, p], Hm @ V[:, q])
        nz = np.abs(Q) > 1e-14
        if not np.any(nz):
            continue
        eps = 0.5 * float(np.min(ab[nz] / np.abs(Q[nz])))
        P1 = Coupling(ab + eps * Q, a, b)
        P2 = Coupling(ab - eps * Q, a, b)
        mid = Coupling(0.5 * (P1.matrix + P2.matrix), a, b)

        def f(P):
            return gw_objective_separable(loss, C, Cb, a.weights, b.weights, P.matrix)

        gap = f(mid) - 0.5 * (f(P1) + f(P2))
        if gap < -1e-12:
            return ConcavityWitness(P1, P2, DiffPlan(P1.matrix - P2.matrix), float(gap), float(prods[p, q]))
    raise ConcavityError("no eigenpair produced a numerically negative midpoint gap")


@dataclass(frozen=True)
class SampleCheckResult:
    refuted: bool
    trials: int
    witness: DiffPlan | None = None
    witness_value: float | None = None
    trial_index: int | None = None
    max_value: float = 0.0

    @property
    def verdict(self) -> str:
        return "refuted" if self.refuted else "not-refuted"


def _sample_coupling(a, b, rng):
    if rng.random() < 0.5:
        return random_vertex(a, b, rng)
    return random_coupling(a, b, rng, n_vertices=int(rng.integers(2, 5)))


def tensor_cnd_sample_check(L, a, b, trials: int = 1000, seed: int = 0,
                            tol: float = 1e-9) -> SampleCheckResult:
    """Try to refute ``<L (x) Q, Q> <= 0`` on random coupling differences.

    A refuter, not a certifier: ``not-refuted`` proves nothing.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    L = as_tensor(L)
    if not L.symmetric:
        raise ValueError("tensor must be symmetric")
    a, b = as_histogram(a), as_histogram(b)
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for t in range(trials):
        Q = _sample_coupling(a, b, rng).matrix - _sample_coupling(a, b, rng).matrix
        val = L.quad(Q)
        worst = max(worst, val)
        if val > tol:
            return SampleCheckResult(True, t + 1, DiffPlan(Q), float(val), t, float(worst))
    return SampleCheckResult(False, trials, max_value=float(worst))
