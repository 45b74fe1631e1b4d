"""GW solvers, the bilinear relaxation and QP-to-LP stationarity checks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .cnd import ConcavityError, ConcavityVerdict, separable_concavity_check
from .core import (
    Coupling,
    SeparableTensor,
    as_coupling,
    as_histogram,
    as_tensor,
    build_dense_tensor,
    get_loss,
    gw_objective_separable,
    product_coupling,
    uniform,
)
from .linear_ot import (
    MonotonicityReport,
    all_permutations,
    check_cyclical_monotonicity,
    first_minimum,
    solve_linear_ot,
)
from .polytope import VERTEX_MAX_CELLS, enumerate_vertices, random_vertex

PERMUTATION_MAX_N = 8


@dataclass(frozen=True)
class GwSolution:
    plan: Coupling
    value: float
    method: str  # "exact_concave" | "frank_wolfe" | "permutation"
    certificate: ConcavityVerdict | None = None
    fw_gap: float | None = None
    converged: bool = True
    history: tuple[float, ...] = ()
    iterations: int = 0
    label: str = "global"  # or "upper bound" / "local"
    permutation: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.method == "exact_concave" and self.certificate is None:
            raise ValueError("exact_concave solutions must carry a concavity certificate")


@dataclass(frozen=True)
class BilinearSolution:
    plan1: Coupling
    plan2: Coupling
    value: float
    iterations: int = 0


def _tensor(L):
    T = as_tensor(L)
    if not T.symmetric:
        T = T.symmetrized()
    return T


def _vertex_values(T, vertices) -> np.ndarray:
    V = np.stack([P.matrix for P in vertices])
    if isinstance(T, SeparableTensor):
        rows = V.sum(axis=2)
        cols = V.sum(axis=1)
        lin = (rows @ T._f1)[:, :, None] + (cols @ T._f2)[:, None, :]
        G = lin - np.matmul(np.matmul(T._h1.T, V), T._h2)
    else:
        n, m = T.shape
        G = (V.reshape(len(V), n * m) @ T.entries.reshape(n * m, n * m)).reshape(V.shape)
    return np.einsum("pkl,pkl->p", G, V)


def solve_gw_exact_concave(loss, C, Cb, a, b, max_cells: int = VERTEX_MAX_CELLS) -> GwSolution:
    """Global GW minimum by scanning the vertices of ``Pi(a, b)``.

    Only valid for a concave objective (a concave function on a polytope
    attains its minimum at a vertex), so the concavity certificate is checked
    first and the call refuses otherwise.
    """
    loss = get_loss(loss)
    a, b = as_histogram(a), as_histogram(b)
    verdict = separable_concavity_check(loss, C, Cb)
    if not verdict.concave:
        raise ConcavityError("instance is not certified concave; vertex minimum would only be an upper bound")
    T = SeparableTensor(loss, C, Cb)
    vertices = enumerate_vertices(a, b, max_cells)
    vals = _vertex_values(T, vertices)
    t = first_minimum(vals)
    plan = vertices[t]
    value = gw_objective_separable(loss, C, Cb, a.weights, b.weights, plan.matrix)
    return GwSolution(plan, value, "exact_concave", certificate=verdict)


def solve_gw_permutation(loss, C=None, Cb=None) -> GwSolution:
    """Brute force over scaled permutation matrices (uniform marginals, n = m)."""
    if C is None and Cb is None:
        T = _tensor(loss)
        L = T.dense() if isinstance(T, SeparableTensor) else T
    else:
        L = build_dense_tensor(loss, C, Cb)
    n, m = L.shape
    if n != m:
        raise ValueError("permutation solver needs n = m")
    if n > PERMUTATION_MAX_N:
        raise ValueError(f"permutation brute force capped at n <= {PERMUTATION_MAX_N}")
    perms = all_permutations(n)
    vals = kernels.perm_quad_values(np.ascontiguousarray(L.entries), np.ascontiguousarray(perms))
    t = first_minimum(vals)
    sigma = tuple(int(s) for s in perms[t])
    P = np.zeros((n, n))
    P[np.arange(n), sigma] = 1.0 / n
    plan = Coupling(P, uniform(n), uniform(n))
    return GwSolution(plan, L.quad(P), "permutation", permutation=sigma)


def solve_gw_frank_wolfe(L, a, b, start=None, max_iter: int = 200, tol: float = 1e-9) -> GwSolution:
    """Frank-Wolfe with exact line search on ``P -> <L (x) P, P>``.

    The linear minimization oracle is :func:`solve_linear_ot` on the gradient
    ``2 L (x) P``. Stops when the FW gap ``<G, P - D>`` is at most ``tol``,
    or when a step fails to lower the computed value (it is then discarded).
    Either way ``converged`` reports whether the final gap is within ``tol``.
    """
    T = _tensor(L)
    a, b = as_histogram(a), as_histogram(b)
    P = product_coupling(a, b).matrix if start is None else np.array(as_coupling(start, a, b).matrix)
    value = T.quad(P)
    history = [value]
    converged = False
    gap = np.inf
    for _ in range(max_iter):
        G = 2.0 * T.apply(P)
        D = solve_linear_ot(G, a, b).plan.matrix
        gap = float(np.sum(G * (P - D)))
        if gap <= tol:
            converged = True
            break
        delta = D - P
        curv = T.quad(delta)
        # value(gamma) = value - gamma * gap + gamma^2 * curv
        if curv > 0:
            gamma = min(1.0, max(0.0, gap / (2.0 * curv)))
        else:
            gamma = 1.0 if curv - gap <= 0 else 0.0
        Pn = D.copy() if gamma == 1.0 else P + gamma * delta
        Pn[Pn < 0] = 0.0
        new_value = T.quad(Pn)
        if new_value > value:
            # round-off stall: the step no longer lowers the computed value
            break
        P, value = Pn, new_value
        history.append(value)
    if not converged:
        G = 2.0 * T.apply(P)
        D = solve_linear_ot(G, a, b).plan.matrix
        gap = float(np.sum(G * (P - D)))
        converged = gap <= tol
    plan = Coupling(P, a, b)
    return GwSolution(plan, T.quad(plan.matrix), "frank_wolfe", fw_gap=gap, converged=converged,
                      history=tuple(history), iterations=len(history) - 1, label="local")


def solve_gw(loss, C, Cb, a=None, b=None, n_starts: int = 10, seed: int = 0,
             max_cells: int = VERTEX_MAX_CELLS, max_iter: int = 200, tol: float = 1e-9) -> GwSolution:
    """Exact solve when concavity is certified and the instance is small, else multi-start FW.

    Non-certified results are labelled ``"upper bound"``: no global method is
    known for the non-concave case.
    """
    loss = get_loss(loss)
    C = np.asarray(C, dtype=float)
    Cb = np.asarray(Cb, dtype=float)
    a = uniform(C.shape[0]) if a is None else as_histogram(a)
    b = uniform(Cb.shape[0]) if b is None else as_histogram(b)
    verdict = separable_concavity_check(loss, C, Cb)
    if verdict.concave and C.shape[0] * Cb.shape[0] <= max_cells:
        return solve_gw_exact_concave(loss, C, Cb, a, b, max_cells)
    T = SeparableTensor(loss, C, Cb)
    rng = np.random.default_rng(seed)
    starts = [product_coupling(a, b)] + [random_vertex(a, b, rng) for _ in range(n_starts - 1)]
    best = None
    for s in starts:
        sol = solve_gw_frank_wolfe(T, a, b, start=s, max_iter=max_iter, tol=tol)
        if best is None or sol.value < best.value - 1e-12 * max(1.0, abs(best.value)):
            best = sol
    label = "local (certified concave)" if verdict.concave else "upper bound"
    return GwSolution(best.plan, best.value, "frank_wolfe", certificate=verdict, fw_gap=best.fw_gap,
                      converged=best.converged, history=best.history, iterations=best.iterations,
                      label=label)


@dataclass(frozen=True)
class StationarityReport:
    passed: bool
    plan_value: float
    lp_value: float
    lp_plan: Coupling
    tol: float

    @property
    def excess(self) -> float:
        return self.plan_value - self.lp_value


def check_qp_lp_stationarity(L, P_star, tol: float = 1e-7) -> StationarityReport:
    """Does ``P*`` solve the linear problem with frozen cost ``L (x) P*``?"""
    T = _tensor(L)
    P = as_coupling(P_star)
    C = T.apply(P.matrix)
    lp = solve_linear_ot(C, P.row_marginal, P.col_marginal)
    own = float(np.sum(C * P.matrix))
    return StationarityReport(bool(own <= lp.value + tol), own, lp.value, lp.plan, tol)


def gw_monotonicity_check(L, P_star, max_N: int = 3, tol: float = 1e-9) -> MonotonicityReport:
    """Cyclical monotonicity of ``P*`` for its own frozen cost ``L (x) P*``."""
    T = _tensor(L)
    P = np.asarray(as_coupling(P_star).matrix)
    return check_cyclical_monotonicity(T.apply(P), P, max_N=max_N, tol=tol)


def bilinear_value(L, P1, P2) -> float:
    T = as_tensor(L)
    return float(np.sum(T.apply(np.asarray(P1, dtype=float)) * np.asarray(P2, dtype=float)))


def solve_bilinear(L, a, b, mode: str = "alternating", start=None,
                   max_cells: int = VERTEX_MAX_CELLS, max_iter: int = 1000) -> BilinearSolution:
    """Minimize ``<L (x) P1, P2>`` over pairs of couplings.

    ``brute`` scans all vertex pairs (for fixed ``P1`` the objective is linear
    in ``P2`` and vice versa, so an optimal pair sits on vertices).
    ``alternating`` solves one LP per half-step until the value stalls and
    returns a local pair.
    """
    T = _tensor(L)
    a, b = as_histogram(a), as_histogram(b)
    if mode == "brute":
        vertices = enumerate_vertices(a, b, max_cells)
        V = np.stack([P.matrix for P in vertices])
        G = np.stack([T.apply(M) for M in V])
        vals = np.einsum("pkl,qkl->pq", G, V)
        t = first_minimum(vals.ravel())
        p, q = divmod(t, len(vertices))
        P1, P2 = vertices[p], vertices[q]
        return BilinearSolution(P1, P2, bilinear_value(T, P1.matrix, P2.matrix))
    if mode != "alternating":
        raise ValueError(f"unknown mode {mode!r}")
    P1 = product_coupling(a, b) if start is None else as_coupling(start, a, b)
    P2 = solve_linear_ot(T.apply(P1.matrix), a, b).plan
    value = bilinear_value(T, P1.matrix, P2.matrix)
    it = 0
    for it in range(1, max_iter + 1):
        P1 = solve_linear_ot(T.apply(P2.matrix), a, b).plan
        P2 = solve_linear_ot(T.apply(P1.matrix), a, b).plan
        new = bilinear_value(T, P1.matrix, P2.matrix)
        if value - new <= 1e-10:
            value = new
            break
        value = new
    return BilinearSolution(P1, P2, value, it)


def bilinear_identity_check(L, P1, P2) -> float:
    """Residual of ``g(P1, P2) = (f(P1 + P2) - f(P1) - f(P2)) / 2`` for symmetric ``L``."""
    T = as_tensor(L)
    if not T.symmetric:
        raise ValueError("bilinear identity needs a symmetric tensor")
    X = np.asarray(P1, dtype=float)
    Y = np.asarray(P2, dtype=float)
    g = bilinear_value(T, X, Y)
    return abs(g - 0.5 * (T.quad(X + Y) - T.quad(X) - T.quad(Y)))


@dataclass(frozen=True)
class TightnessReport:
    concave: bool
    bilinear_value: float
    gw_value: float
    gw_label: str
    passed: bool
    bilinear: BilinearSolution
    gw: GwSolution
    details: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        return "tight" if self.concave else "relaxation only: bilinear <= GW"


def check_bilinear_tightness(loss, C, Cb, a=None, b=None, tol: float = 1e-9,
                             max_cells: int = VERTEX_MAX_CELLS, seed: int = 0) -> TightnessReport:
    """Compare the brute-force bilinear minimum with the GW value.

    Concave instances must be tight and ``(P_gw, P_gw)`` must attain the
    bilinear minimum. Otherwise only ``bilinear <= GW upper bound`` is checked,
    the upper bound being the better of multi-start FW and the vertex minimum.
    """
    loss = get_loss(loss)
    C = np.asarray(C, dtype=float)
    Cb = np.asarray(Cb, dtype=float)
    a = uniform(C.shape[0]) if a is None else as_histogram(a)
    b = uniform(Cb.shape[0]) if b is None else as_histogram(b)
    T = SeparableTensor(loss, C, Cb)
    bil = solve_bilinear(T, a, b, mode="brute", max_cells=max_cells)
    verdict = separable_concavity_check(loss, C, Cb)
    if verdict.concave:
        gw = solve_gw_exact_concave(loss, C, Cb, a, b, max_cells)
        self_pair = bilinear_value(T, gw.plan.matrix, gw.plan.matrix)
        f1 = T.quad(bil.plan1.matrix)
        f2 = T.quad(bil.plan2.matrix)
        details = {
            "gap": abs(bil.value - gw.value),
            "self_pair_value": self_pair,
            "plan1_gw_value": f1,
            "plan2_gw_value": f2,
        }
        passed = (abs(bil.value - gw.value) <= tol and abs(self_pair - bil.value) <= tol
                  and abs(f1 - gw.value) <= tol and abs(f2 - gw.value) <= tol)
        return TightnessReport(True, bil.value, gw.value, gw.label, bool(passed), bil, gw, details)
    fw = solve_gw(loss, C, Cb, a, b, seed=seed, max_cells=max_cells)
    vals = _vertex_values(T, enumerate_vertices(a, b, max_cells))
    upper = min(fw.value, float(vals.min()))
    details = {"vertex_min": float(vals.min()), "fw_value": fw.value}
    passed = bil.value <= upper + tol
    return TightnessReport(False, bil.value, upper, "upper bound", bool(passed), bil, fw, details)
