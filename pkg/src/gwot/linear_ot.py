"""Exact linear OT (transportation simplex) and cyclical-monotonicity checks."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from itertools import permutations
from math import factorial

import numpy as np

from . import kernels
from .core import SUPPORT_TOL, Coupling, Permutation, as_coupling, as_histogram, uniform
from .polytope import _northwest_basis, as_permutation, extreme_decomposition

MONGE_MAX_N = 9
MONOTONICITY_MAX_SUPPORT = 64


@dataclass(frozen=True)
class LinearSolution:
    plan: Coupling
    value: float
    iterations: int


@dataclass(frozen=True)
class Violation:
    pairs: tuple[tuple[int, int], ...]
    sigma: tuple[int, ...]
    deficit: float


@dataclass(frozen=True)
class MonotonicityReport:
    passed: bool
    max_N_checked: int
    support_size: int
    violation: Violation | None = None

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"


def _tree_potentials(C, basis, n, m):
    adj = [[] for _ in range(n + m)]
    for i, j in basis:
        adj[i].append(n + j)
        adj[n + j].append(i)
    pot = np.full(n + m, np.nan)
    pot[0] = 0.0
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if np.isnan(pot[w]):
                # u_i + v_j = C_ij on basic cells
                pot[w] = (C[u, w - n] if u < n else C[w, u - n]) - pot[u]
                queue.append(w)
    return pot[:n], pot[n:], adj


def _tree_path(adj, src, dst):
    parent = {src: -1}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        if u == dst:
            break
        for w in adj[u]:
            if w not in parent:
                parent[w] = u
                queue.append(w)
    path = [dst]
    while path[-1] != src:
        path.append(parent[path[-1]])
    return path[::-1]


def solve_linear_ot(C, a, b, max_iter: int | None = None) -> LinearSolution:
    """Minimize ``<C, P>`` over ``Pi(a, b)`` with the transportation simplex.

    Starts from the north-west corner basis. Entering cell: most negative
    reduced cost, lowest row-major index on ties. Leaving cell: smallest mass
    among the cells that lose flow on the entering cycle, lowest index on ties.
    After ``10 (n + m)`` consecutive degenerate pivots the entering rule
    switches to Bland's (first negative reduced cost) until a pivot moves mass.
    """
    a, b = as_histogram(a), as_histogram(b)
    C = np.asarray(C, dtype=float)
    n, m = a.weights.size, b.weights.size
    if C.shape != (n, m):
        raise ValueError(f"cost shape {C.shape} does not match marginals ({n}, {m})")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost has non-finite entries")
    X, cells = _northwest_basis(a.weights, b.weights)
    basis = set(cells)
    in_basis = np.zeros((n, m), dtype=bool)
    for e in cells:
        in_basis[e] = True
    eps = 1e-12 * max(1.0, float(np.abs(C).max()))
    degenerate_run = 0
    bland = False
    max_iter = max_iter if max_iter is not None else 1000 + 50 * n * m * (n + m)
    it = 0
    while True:
        u, v, adj = _tree_potentials(C, basis, n, m)
        R = C - u[:, None] - v[None, :]
        R[in_basis] = 0.0
        if bland:
            neg = np.flatnonzero(R.ravel() < -eps)
            if neg.size == 0:
                break
            flat = int(neg[0])
        else:
            flat = int(np.argmin(R))
            if R.flat[flat] >= -eps:
                break
        if it >= max_iter:
            raise RuntimeError(f"transportation simplex did not converge in {max_iter} pivots")
        it += 1
        ei, ej = divmod(flat, m)
        # tree path from column node ej back to row node ei closes the cycle
        path = _tree_path(adj, n + ej, ei)
        minus, plus = [], [(ei, ej)]
        for k in range(len(path) - 1):
            p, q = path[k], path[k + 1]
            cell = (q, p - n) if p >= n else (p, q - n)
            (minus if k % 2 == 0 else plus).append(cell)
        theta = min(X[e] for e in minus)
        leave = min(e for e in minus if X[e] == theta)
        for e in plus:
            X[e] += theta
        for e in minus:
            X[e] -= theta
        X[leave] = 0.0
        basis.discard(leave)
        in_basis[leave] = False
        basis.add((ei, ej))
        in_basis[ei, ej] = True
        if theta == 0.0:
            degenerate_run += 1
            if degenerate_run >= 10 * (n + m):
                bland = True
        else:
            degenerate_run = 0
            bland = False
    plan = Coupling(X, a, b)
    return LinearSolution(plan, float(np.sum(C * plan.matrix)), it)


def check_cyclical_monotonicity(C, P, max_N: int = 3, tol: float = 1e-9,
                                support_tol: float = SUPPORT_TOL) -> MonotonicityReport:
    """Search the support of ``P`` for a reassignment that lowers the cost.

    Every subset of at most ``max_N`` support pairs and every non-identity
    permutation of it is tried. Passing is necessary for optimality, not
    sufficient: only ``N <= max_N`` is examined.
    """
    if max_N not in (2, 3):
        raise ValueError("max_N must be 2 or 3")
    C = np.ascontiguousarray(np.asarray(C, dtype=float))
    M = np.asarray(P, dtype=float)
    if C.shape != M.shape:
        raise ValueError(f"cost shape {C.shape} does not match plan shape {M.shape}")
    rows, cols = np.nonzero(M > support_tol)
    if rows.size > MONOTONICITY_MAX_SUPPORT:
        raise ValueError(
            f"support has {rows.size} pairs; monotonicity check refuses more than {MONOTONICITY_MAX_SUPPORT}"
        )
    rows = rows.astype(np.int64)
    cols = cols.astype(np.int64)
    N, p0, p1, p2, pidx, deficit = kernels.monotonicity_scan(C, rows, cols, max_N, tol)
    if N == 0:
        return MonotonicityReport(True, max_N, int(rows.size))
    idx = (p0, p1) if N == 2 else (p0, p1, p2)
    sigma = tuple(int(s) for s in (kernels.PERMS2 if N == 2 else kernels.PERMS3)[pidx])
    pairs = tuple((int(rows[t]), int(cols[t])) for t in idx)
    return MonotonicityReport(False, max_N, int(rows.size), Violation(pairs, sigma, float(deficit)))


_PERM_CACHE: dict[int, np.ndarray] = {}


def all_permutations(n: int) -> np.ndarray:
    """All permutations of ``range(n)`` in lexicographic order, shape ``(n!, n)``."""
    if n not in _PERM_CACHE:
        arr = np.fromiter(
            (x for p in permutations(range(n)) for x in p), dtype=np.int64, count=factorial(n) * n
        ).reshape(factorial(n), n)
        arr.flags.writeable = False
        _PERM_CACHE[n] = arr
    return _PERM_CACHE[n]


def first_minimum(values: np.ndarray, rtol: float = 1e-12) -> int:
    """Index of the first entry within ``rtol`` (relative) of the minimum."""
    best = float(values.min())
    return int(np.flatnonzero(values <= best + rtol * max(1.0, abs(best)))[0])


def solve_monge(C) -> tuple[Permutation, float]:
    """Brute-force ``min <C, P_sigma>`` over scaled permutation matrices."""
    C = np.ascontiguousarray(np.asarray(C, dtype=float))
    n, m = C.shape
    if n != m:
        raise ValueError("Monge problem needs a square cost")
    if n > MONGE_MAX_N:
        raise ValueError(f"permutation brute force capped at n <= {MONGE_MAX_N}")
    perms = all_permutations(n)
    vals = kernels.perm_linear_values(C, np.ascontiguousarray(perms))
    t = first_minimum(vals)
    return Permutation(tuple(perms[t])), float(vals[t])


@dataclass(frozen=True)
class MongeKantorovichReport:
    monge_value: float
    lp_value: float
    gap: float
    permutation: Permutation
    lp_plan: Coupling
    lp_components_are_permutations: bool
    passed: bool


def verify_monge_equals_kantorovich(C, tol: float = 1e-9) -> MongeKantorovichReport:
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    sigma, monge = solve_monge(C)
    lp = solve_linear_ot(C, uniform(n), uniform(C.shape[1]))
    dec = extreme_decomposition(lp.plan)
    perms_only = all(as_permutation(P) is not None for _, P in dec.components)
    gap = abs(monge - lp.value)
    return MongeKantorovichReport(monge, lp.value, gap, sigma, lp.plan, perms_only,
                                  bool(gap <= tol and perms_only))


def plan_cost(C, P) -> float:
    return float(np.sum(np.asarray(C, dtype=float) * np.asarray(as_coupling(P).matrix)))
