"""Domain types, GW objective evaluation and the tensor-matrix product."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import xlogy

from . import kernels

MASS_TOL = 1e-9
CLAMP_TOL = 1e-12
SUPPORT_TOL = 1e-12
DENSE_MAX_CELLS = 1024


def _frozen(x, dtype=float) -> np.ndarray:
    arr = np.array(x, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


# -- types --------------------------------------------------------------------

@dataclass(frozen=True)
class Histogram:
    """Nonnegative weights of unit mass."""

    weights: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("histogram weights must be a nonempty vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("histogram weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"histogram mass is {w.sum()!r}, expected 1")
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.weights.size

    def __array__(self, dtype=None, copy=None):
        return self.weights if dtype is None else self.weights.astype(dtype)


@dataclass(frozen=True)
class Coupling:
    """Nonnegative matrix with prescribed row and column marginals."""

    matrix: np.ndarray
    row_marginal: Histogram
    col_marginal: Histogram

    def __post_init__(self):
        P = np.array(self.matrix, dtype=float, copy=True)
        a, b = self.row_marginal.weights, self.col_marginal.weights
        if P.shape != (a.size, b.size):
            raise ValueError(f"coupling shape {P.shape} does not match marginals ({a.size}, {b.size})")
        if not np.all(np.isfinite(P)):
            raise ValueError("coupling has non-finite entries")
        if np.any(P < -CLAMP_TOL):
            raise ValueError(f"coupling entry {P.min()!r} is negative")
        P[P < 0] = 0.0
        if np.max(np.abs(P.sum(axis=1) - a)) > MASS_TOL:
            raise ValueError("coupling row sums do not match the row marginal")
        if np.max(np.abs(P.sum(axis=0) - b)) > MASS_TOL:
            raise ValueError("coupling column sums do not match the column marginal")
        P.flags.writeable = False
        object.__setattr__(self, "matrix", P)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


@dataclass(frozen=True)
class DiffPlan:
    """Difference of two couplings sharing marginals (zero row and column sums)."""

    matrix: np.ndarray

    def __post_init__(self):
        Q = _frozen(self.matrix)
        if Q.ndim != 2:
            raise ValueError("difference plan must be a matrix")
        if Q.size and (np.max(np.abs(Q.sum(axis=1))) > MASS_TOL or np.max(np.abs(Q.sum(axis=0))) > MASS_TOL):
            raise ValueError("difference plan must have zero row and column sums")
        object.__setattr__(self, "matrix", Q)

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


@dataclass(frozen=True)
class CostMatrix:
    matrix: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        C = _frozen(self.matrix)
        if C.ndim != 2:
            raise ValueError("cost must be a matrix")
        if not np.all(np.isfinite(C)):
            raise ValueError("cost has non-finite entries")
        if self.symmetric:
            if C.shape[0] != C.shape[1]:
                raise ValueError("symmetric cost must be square")
            if np.any(np.abs(C - C.T) > 1e-12 * np.maximum(1.0, np.abs(C))):
                raise ValueError("cost matrix is not symmetric")
        object.__setattr__(self, "matrix", C)

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


@dataclass(frozen=True)
class Permutation:
    """Bijection on ``range(n)``; ``sigma[i]`` is the image of ``i``."""

    sigma: tuple

    def __post_init__(self):
        s = tuple(int(x) for x in self.sigma)
        if sorted(s) != list(range(len(s))):
            raise ValueError(f"{s} is not a permutation")
        object.__setattr__(self, "sigma", s)

    def __len__(self) -> int:
        return len(self.sigma)

    def matrix(self) -> np.ndarray:
        """Permutation matrix scaled by ``1/n`` (a coupling of uniform marginals)."""
        n = len(self.sigma)
        P = np.zeros((n, n))
        P[np.arange(n), self.sigma] = 1.0 / n
        return P


@dataclass(frozen=True)
class SeparableLoss:
    """``L(x, y) = f1(x) + f2(y) - h1(x) * h2(y)``, applied elementwise."""

    f1: Callable[[np.ndarray], np.ndarray]
    f2: Callable[[np.ndarray], np.ndarray]
    h1: Callable[[np.ndarray], np.ndarray]
    h2: Callable[[np.ndarray], np.ndarray]
    preset: str = "custom"

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self.f1(x) + self.f2(y) - self.h1(x) * self.h2(y)

    def check_domain(self, C, Cb) -> None:
        if self.preset == "kl":
            if np.any(np.asarray(C) < 0):
                raise ValueError("kl loss needs nonnegative first cost")
            if np.any(np.asarray(Cb) <= 0):
                raise ValueError("kl loss needs strictly positive second cost")


def _half_sq(x):
    return 0.5 * x * x


def _xlogx_minus_x(x):
    return xlogy(x, x) - x


SQUARE_LOSS = SeparableLoss(_half_sq, _half_sq, lambda x: x, lambda y: y, preset="square")
KL_LOSS = SeparableLoss(_xlogx_minus_x, lambda y: y, lambda x: x, np.log, preset="kl")


def get_loss(name: str | SeparableLoss) -> SeparableLoss:
    if isinstance(name, SeparableLoss):
        return name
    presets = {"square": SQUARE_LOSS, "kl": KL_LOSS}
    try:
        return presets[name]
    except KeyError:
        raise ValueError(f"unknown loss preset {name!r}; expected one of {sorted(presets)}") from None


def _symmetric_flag_dense(L: np.ndarray, rng=None) -> bool:
    n, m = L.shape[:2]
    if n * m <= 64:
        return bool(np.all(np.abs(L - L.transpose(2, 3, 0, 1)) <= 1e-12))
    rng = np.random.default_rng(0) if rng is None else rng
    i, k = rng.integers(0, n, size=(2, 10_000))
    j, l = rng.integers(0, m, size=(2, 10_000))
    return bool(np.all(np.abs(L[i, j, k, l] - L[k, l, i, j]) <= 1e-12))


@dataclass(frozen=True, eq=False)
class QuadTensor:
    """Dense four-index cost ``L[i, j, k, l]`` with ``i, k < n`` and ``j, l < m``."""

    entries: np.ndarray
    symmetric: bool | None = None

    def __post_init__(self):
        L = _frozen(self.entries)
        if L.ndim != 4 or L.shape[:2] != L.shape[2:]:
            raise ValueError(f"tensor must have shape (n, m, n, m), got {L.shape}")
        if L.shape[0] * L.shape[1] > DENSE_MAX_CELLS:
            raise ValueError(f"dense tensor limited to n*m <= {DENSE_MAX_CELLS}; use the separable path")
        object.__setattr__(self, "entries", L)
        flag = _symmetric_flag_dense(L)
        if self.symmetric and not flag:
            raise ValueError("tensor flagged symmetric but L[i,j,k,l] != L[k,l,i,j]")
        object.__setattr__(self, "symmetric", flag)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape[:2]

    def apply(self, P) -> np.ndarray:
        return tensor_apply(self, P)

    def quad(self, P) -> float:
        P = np.asarray(P, dtype=float)
        return float(np.sum(self.apply(P) * P))

    def symmetrized(self) -> "QuadTensor":
        if self.symmetric:
            return self
        L = self.entries
        return QuadTensor(0.5 * (L + L.transpose(2, 3, 0, 1)))


@dataclass(frozen=True, eq=False)
class SeparableTensor:
    """Implicit tensor ``L[i,j,k,l] = loss(C[i,k], Cb[j,l])`` applied in O(nm(n+m)).

    ``apply`` works on any ``n x m`` matrix (not only couplings), using its own
    row and column sums, so it is linear.
    """

    loss: SeparableLoss
    C: np.ndarray
    Cb: np.ndarray

    def __post_init__(self):
        C = _frozen(np.asarray(self.C, dtype=float))
        Cb = _frozen(np.asarray(self.Cb, dtype=float))
        if C.ndim != 2 or C.shape[0] != C.shape[1] or Cb.ndim != 2 or Cb.shape[0] != Cb.shape[1]:
            raise ValueError("intra costs must be square matrices")
        self.loss.check_domain(C, Cb)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "Cb", Cb)
        object.__setattr__(self, "_f1", self.loss.f1(C))
        object.__setattr__(self, "_f2", self.loss.f2(Cb))
        object.__setattr__(self, "_h1", self.loss.h1(C))
        object.__setattr__(self, "_h2", self.loss.h2(Cb))

    @property
    def shape(self) -> tuple[int, int]:
        return self.C.shape[0], self.Cb.shape[0]

    @property
    def symmetric(self) -> bool:
        return bool(np.allclose(self.C, self.C.T, rtol=0, atol=1e-12)
                    and np.allclose(self.Cb, self.Cb.T, rtol=0, atol=1e-12))

    def apply(self, P) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        if P.shape != self.shape:
            raise ValueError(f"plan shape {P.shape} does not match tensor {self.shape}")
        rows = P.sum(axis=1)
        cols = P.sum(axis=0)
        lin = (self._f1.T @ rows)[:, None] + (self._f2.T @ cols)[None, :]
        return lin - self._h1.T @ P @ self._h2

    def quad(self, P) -> float:
        P = np.asarray(P, dtype=float)
        return float(np.sum(self.apply(P) * P))

    def dense(self) -> QuadTensor:
        return build_dense_tensor(self.loss, self.C, self.Cb)

    def symmetrized(self) -> "SeparableTensor":
        if not self.symmetric:
            raise ValueError("separable tensor needs symmetric intra costs")
        return self


# -- operations ---------------------------------------------------------------

def make_histogram(weights) -> Histogram:
    """Normalize nonnegative weights to unit mass.

    >>> make_histogram([2, 0, 6]).weights
    array([0.25, 0.  , 0.75])
    """
    w = np.asarray(weights, dtype=float).ravel()
    if w.size == 0:
        raise ValueError("empty weight vector")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    total = w.sum()
    if total <= 0:
        raise ValueError("weights have zero total mass")
    return Histogram(w / total)


def uniform(n: int) -> Histogram:
    return Histogram(np.full(n, 1.0 / n))


def as_histogram(x) -> Histogram:
    return x if isinstance(x, Histogram) else make_histogram(x)


def make_coupling(matrix, a=None, b=None) -> Coupling:
    """Wrap a matrix as a :class:`Coupling`; marginals default to its own sums."""
    P = np.asarray(matrix, dtype=float)
    if a is None:
        a = Histogram(np.clip(P, 0, None).sum(axis=1))
    if b is None:
        b = Histogram(np.clip(P, 0, None).sum(axis=0))
    return Coupling(P, as_histogram(a), as_histogram(b))


def as_coupling(P, a=None, b=None) -> Coupling:
    return P if isinstance(P, Coupling) else make_coupling(P, a, b)


def product_coupling(a, b) -> Coupling:
    a, b = as_histogram(a), as_histogram(b)
    return Coupling(np.outer(a.weights, b.weights), a, b)


def support(P, tol: float = SUPPORT_TOL) -> set[tuple[int, int]]:
    """Index pairs ``(i, j)`` with ``P[i, j] > tol`` (0-based)."""
    if tol < 0:
        raise ValueError("tol must be >= 0")
    M = np.asarray(P, dtype=float)
    return {(int(i), int(j)) for i, j in zip(*np.nonzero(M > tol))}


def tensor_apply(L, P) -> np.ndarray:
    """``(L (x) P)[k, l] = sum_ij L[i, j, k, l] * P[i, j]``."""
    if isinstance(L, SeparableTensor):
        return L.apply(P)
    entries = L.entries if isinstance(L, QuadTensor) else np.asarray(L, dtype=float)
    P = np.ascontiguousarray(np.asarray(P, dtype=float))
    if entries.ndim != 4 or entries.shape[:2] != P.shape:
        raise ValueError(f"tensor shape {entries.shape} incompatible with plan shape {P.shape}")
    return kernels.tensor_apply_kernel(np.ascontiguousarray(entries), P)


def build_dense_tensor(loss, C, Cb) -> QuadTensor:
    """Materialize ``L[i, j, k, l] = loss(C[i, k], Cb[j, l])``."""
    loss = get_loss(loss)
    C = np.asarray(C, dtype=float)
    Cb = np.asarray(Cb, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or Cb.ndim != 2 or Cb.shape[0] != Cb.shape[1]:
        raise ValueError("intra costs must be square matrices")
    loss.check_domain(C, Cb)
    n, m = C.shape[0], Cb.shape[0]
    if n * m > DENSE_MAX_CELLS:
        raise ValueError(f"dense tensor limited to n*m <= {DENSE_MAX_CELLS}; use the separable path")
    L = loss(C[:, None, :, None], Cb[None, :, None, :])
    return QuadTensor(L)


def gw_objective_dense(L, P) -> float:
    """``<L (x) P, P>``."""
    P = np.asarray(P, dtype=float)
    return float(np.sum(tensor_apply(L, P) * P))


def gw_objective_separable(loss, C, Cb, a, b, P) -> float:
    """GW objective in O(nm(n+m)) for a separable loss.

    ``<f1(C) a 1^T + 1 b^T f2(Cb)^T, P> - <h1(C) P h2(Cb)^T, P>``, written with
    explicit transposes so it also matches the dense sum for asymmetric costs.
    """
    loss = get_loss(loss)
    C = np.asarray(C, dtype=float)
    Cb = np.asarray(Cb, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    P = np.asarray(P, dtype=float)
    loss.check_domain(C, Cb)
    if P.shape != (a.size, b.size) or C.shape != (a.size, a.size) or Cb.shape != (b.size, b.size):
        raise ValueError("dimension mismatch between costs, marginals and plan")
    if np.max(np.abs(P.sum(axis=1) - a)) > 1e-6 or np.max(np.abs(P.sum(axis=0) - b)) > 1e-6:
        raise ValueError("plan marginals do not match (a, b)")
    lin = (loss.f1(C).T @ a)[:, None] + (loss.f2(Cb).T @ b)[None, :]
    cross = loss.h1(C).T @ P @ loss.h2(Cb)
    return float(np.sum(lin * P) - np.sum(cross * P))


def as_tensor(L, C=None, Cb=None):
    """Accept a QuadTensor, a raw 4-d array, a SeparableTensor or ``(loss, C, Cb)``."""
    if isinstance(L, (QuadTensor, SeparableTensor)):
        return L
    if isinstance(L, tuple) and len(L) == 3:
        return SeparableTensor(get_loss(L[0]), L[1], L[2])
    if C is not None and Cb is not None:
        return SeparableTensor(get_loss(L), C, Cb)
    return QuadTensor(np.asarray(L, dtype=float))
