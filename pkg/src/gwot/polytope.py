"""Transportation polytope structure: support graphs, cycles, extreme points."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import (
    SUPPORT_TOL,
    Coupling,
    Permutation,
    as_coupling,
    as_histogram,
)

VERTEX_MAX_CELLS = 25


@dataclass(frozen=True)
class SupportGraph:
    """Bipartite graph with left nodes ``range(n)``, right nodes ``range(m)``."""

    n: int
    m: int
    edges: tuple[tuple[int, int], ...]
    weights: tuple[float, ...]

    def neighbors(self) -> list[list[int]]:
        """Adjacency over node ids ``0..n-1`` (left) and ``n..n+m-1`` (right), ascending."""
        adj: list[list[int]] = [[] for _ in range(self.n + self.m)]
        for i, j in self.edges:
            adj[i].append(self.n + j)
            adj[self.n + j].append(i)
        for nb in adj:
            nb.sort()
        return adj


@dataclass(frozen=True)
class Cycle:
    """Alternating cycle ``i_1, j_1, i_2, j_2, ..., i_N, j_N, i_1``.

    Forward edges are ``(i_k, j_k)``, backward edges ``(i_{k+1}, j_k)``.
    """

    rows: tuple[int, ...]
    cols: tuple[int, ...]
    n: int
    m: int

    def __post_init__(self):
        if len(self.rows) != len(self.cols) or len(self.rows) < 2:
            raise ValueError("a cycle needs N >= 2 rows and as many columns")
        if len(set(self.rows)) != len(self.rows) or len(set(self.cols)) != len(self.cols):
            raise ValueError("cycle vertices must be distinct")

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def forward_edges(self) -> list[tuple[int, int]]:
        return list(zip(self.rows, self.cols))

    @property
    def backward_edges(self) -> list[tuple[int, int]]:
        N = len(self.rows)
        return [(self.rows[(k + 1) % N], self.cols[k]) for k in range(N)]

    @property
    def nodes(self) -> list[tuple[str, int]]:
        seq = []
        for i, j in zip(self.rows, self.cols):
            seq += [("i", i), ("j", j)]
        return seq + [("i", self.rows[0])]


@dataclass(frozen=True)
class SignedPerturbation:
    matrix: np.ndarray

    def __post_init__(self):
        E = np.array(self.matrix, dtype=np.int64, copy=True)
        if not np.all(np.isin(E, (-1, 0, 1))):
            raise ValueError("perturbation entries must be in {-1, 0, +1}")
        if np.any(E.sum(axis=0) != 0) or np.any(E.sum(axis=1) != 0):
            raise ValueError("perturbation must have zero row and column sums")
        E.flags.writeable = False
        object.__setattr__(self, "matrix", E)


@dataclass(frozen=True)
class ConvexDecomposition:
    components: tuple[tuple[float, Coupling], ...]

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.components])

    def reconstruct(self) -> np.ndarray:
        return sum(w * P.matrix for w, P in self.components)

    def __len__(self) -> int:
        return len(self.components)


def support_graph(P, tol: float = SUPPORT_TOL) -> SupportGraph:
    if tol < 0:
        raise ValueError("tol must be >= 0")
    M = np.asarray(P, dtype=float)
    rows, cols = np.nonzero(M > tol)  # row-major
    edges = tuple((int(i), int(j)) for i, j in zip(rows, cols))
    return SupportGraph(M.shape[0], M.shape[1], edges, tuple(float(M[e]) for e in edges))


def find_cycle(G: SupportGraph) -> Cycle | None:
    """Depth-first search from the lowest left node, neighbors ascending."""
    n = G.n
    adj = G.neighbors()
    state = [0] * (n + G.m)  # 0 new, 1 on the stack, 2 finished
    for root in range(n):
        if state[root]:
            continue
        path = [root]
        cursor = [0]
        parent = {root: -1}
        state[root] = 1
        while path:
            u = path[-1]
            if cursor[-1] == len(adj[u]):
                state[u] = 2
                path.pop()
                cursor.pop()
                continue
            w = adj[u][cursor[-1]]
            cursor[-1] += 1
            if w == parent[u]:
                continue
            if state[w] == 1:
                return _cycle_from_nodes(path[path.index(w):], n, G.m)
            if state[w] == 0:
                state[w] = 1
                parent[w] = u
                path.append(w)
                cursor.append(0)
    return None


def _cycle_from_nodes(nodes: list[int], n: int, m: int) -> Cycle:
    start = next(k for k, v in enumerate(nodes) if v < n)
    nodes = nodes[start:] + nodes[:start]
    return Cycle(tuple(nodes[0::2]), tuple(v - n for v in nodes[1::2]), n, m)


def is_extreme(P, tol: float = SUPPORT_TOL) -> bool:
    return find_cycle(support_graph(P, tol)) is None


def cycle_perturbation(cycle: Cycle) -> SignedPerturbation:
    E = np.zeros((cycle.n, cycle.m), dtype=np.int64)
    for e in cycle.forward_edges:
        E[e] += 1
    for e in cycle.backward_edges:
        E[e] -= 1
    return SignedPerturbation(E)


def _split(M: np.ndarray, cycle: Cycle, tol: float):
    E = cycle_perturbation(cycle).matrix
    fwd = cycle.forward_edges
    bwd = cycle.backward_edges
    eps_minus = min(M[e] for e in bwd)
    eps_plus = min(M[e] for e in fwd)
    P1 = M + eps_minus * E
    P2 = M - eps_plus * E
    for e in bwd:
        if M[e] == eps_minus:
            P1[e] = 0.0
    for e in fwd:
        if M[e] == eps_plus:
            P2[e] = 0.0
    P1[np.abs(P1) <= tol] = 0.0
    P2[np.abs(P2) <= tol] = 0.0
    lam = eps_plus / (eps_plus + eps_minus)
    return (lam, P1), (1.0 - lam, P2)


def _canonical_key(M: np.ndarray) -> tuple:
    return tuple(-x for x in np.round(M, 10).ravel())


def extreme_decomposition(P, tol: float = SUPPORT_TOL) -> ConvexDecomposition:
    """Write a coupling as a convex combination of extreme points by cycle cancelling.

    Every non-extreme node is split along the first cycle of its support graph
    into ``P + eps_minus E`` and ``P - eps_plus E`` with weights
    ``eps_plus / (eps_plus + eps_minus)`` and its complement; both children lose
    at least one edge. Nodes are processed largest support first, so identical
    intermediate matrices are merged before they are split again. Leaves with
    the same support (hence the same extreme point) are merged too.
    """
    P = as_coupling(P)
    a, b = P.row_marginal, P.col_marginal
    pending: dict[int, dict[bytes, list]] = {}

    def push(weight, M):
        size = int(np.count_nonzero(M > tol))
        key = np.round(M, 12).tobytes()
        bucket = pending.setdefault(size, {})
        if key in bucket:
            bucket[key][0] += weight
        else:
            bucket[key] = [weight, M]

    push(1.0, np.array(P.matrix))
    leaves: dict[bytes, list] = {}
    while pending:
        size = max(pending)
        bucket = pending.pop(size)
        for key in sorted(bucket):
            weight, M = bucket[key]
            cycle = find_cycle(support_graph(M, tol))
            if cycle is None:
                pattern = (M > tol).tobytes()
                if pattern in leaves:
                    w0, M0 = leaves[pattern]
                    leaves[pattern] = [w0 + weight, (w0 * M0 + weight * M) / (w0 + weight)]
                else:
                    leaves[pattern] = [weight, M]
                continue
            for lam, child in _split(M, cycle, tol):
                if lam > 0:
                    push(weight * lam, child)
    comps = sorted(leaves.values(), key=lambda wm: _canonical_key(wm[1]))
    return ConvexDecomposition(tuple((float(w), Coupling(M, a, b)) for w, M in comps))


def as_permutation(P, tol: float = SUPPORT_TOL) -> Permutation | None:
    M = np.asarray(P, dtype=float)
    n, m = M.shape
    if n != m:
        return None
    mask = M > tol
    if np.any(mask.sum(axis=0) != 1) or np.any(mask.sum(axis=1) != 1):
        return None
    sigma = mask.argmax(axis=1)
    if np.any(np.abs(M[np.arange(n), sigma] - 1.0 / n) > 1e-9):
        return None
    return Permutation(tuple(int(s) for s in sigma))


def _northwest_basis(a: np.ndarray, b: np.ndarray):
    """North-west corner rule; also returns the n+m-1 basic cells (a spanning tree)."""
    n, m = a.size, b.size
    X = np.zeros((n, m))
    ra, rb = a.astype(float).copy(), b.astype(float).copy()
    i = j = 0
    cells = []
    while True:
        x = min(ra[i], rb[j])
        X[i, j] = x
        cells.append((i, j))
        ra[i] -= x
        rb[j] -= x
        if i == n - 1 and j == m - 1:
            break
        if j == m - 1 or (i < n - 1 and ra[i] <= rb[j]):
            i += 1
        else:
            j += 1
    return X, cells


def northwest_corner(a, b) -> Coupling:
    a, b = as_histogram(a), as_histogram(b)
    X, _ = _northwest_basis(a.weights, b.weights)
    return Coupling(X, a, b)


def random_vertex(a, b, rng: np.random.Generator) -> Coupling:
    """North-west corner on randomly permuted rows and columns: always a vertex."""
    a, b = as_histogram(a), as_histogram(b)
    pr = rng.permutation(a.weights.size)
    pc = rng.permutation(b.weights.size)
    X, _ = _northwest_basis(a.weights[pr], b.weights[pc])
    out = np.empty_like(X)
    out[np.ix_(pr, pc)] = X
    return Coupling(out, a, b)


def random_coupling(a, b, rng: np.random.Generator, n_vertices: int = 4) -> Coupling:
    """Dirichlet mix of a few random vertices."""
    a, b = as_histogram(a), as_histogram(b)
    lam = rng.dirichlet(np.ones(n_vertices))
    M = sum(w * random_vertex(a, b, rng).matrix for w in lam)
    return Coupling(M, a, b)


def enumerate_vertices(a, b, max_cells: int = VERTEX_MAX_CELLS) -> list[Coupling]:
    """All extreme points of ``Pi(a, b)``, in canonical order.

    Every spanning tree of the complete bipartite graph carries exactly one
    flow with marginals ``(a, b)``; the nonnegative ones are the basic feasible
    solutions. Duplicates (degenerate trees) are removed after rounding to
    1e-10. Canonical order is descending lexicographic on the row-major
    entries, so north-west heavy plans (e.g. the identity) come first.
    """
    a, b = as_histogram(a), as_histogram(b)
    n, m = a.weights.size, b.weights.size
    if n * m > max_cells:
        raise ValueError(f"vertex enumeration capped at n*m <= {max_cells}, got {n * m}")
    flows = kernels.basis_flows(
        np.ascontiguousarray(a.weights), np.ascontiguousarray(b.weights), SUPPORT_TOL
    )
    keys = np.round(flows, 10)
    _, first = np.unique(keys, axis=0, return_index=True)
    first = first[::-1]  # np.unique sorts ascending
    return [Coupling(flows[t].reshape(n, m), a, b) for t in first]
