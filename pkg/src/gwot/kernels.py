"""Hot loops, each with a numba twin and a numpy twin.

The public names at the bottom dispatch on :data:`gwot._accel.USE_NUMBA`.
Both twins of every kernel are kept importable (``*_nb`` / ``*_np``) so the
test-suite can check them against each other and the benchmark can time them.
"""
from itertools import combinations

import numpy as np

from ._accel import USE_NUMBA, njit

# non-identity permutations of S_2 and S_3, lexicographic order
PERMS2 = np.array([[1, 0]], dtype=np.int64)
PERMS3 = np.array(
    [[0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]], dtype=np.int64
)


# -- tensor-matrix product ----------------------------------------------------

@njit
def _tensor_apply_nb(L, P):
    n, m, n2, m2 = L.shape
    out = np.zeros((n2, m2))
    for i in range(n):
        for j in range(m):
            p = P[i, j]
            if p == 0.0:
                continue
            for k in range(n2):
                for l in range(m2):
                    out[k, l] += L[i, j, k, l] * p
    return out


def _tensor_apply_np(L, P):
    return np.tensordot(P, L, axes=([0, 1], [0, 1]))


# -- objective over all permutations ------------------------------------------

@njit
def _perm_linear_values_nb(C, perms):
    K, n = perms.shape
    out = np.empty(K)
    for t in range(K):
        s = 0.0
        for i in range(n):
            s += C[i, perms[t, i]]
        out[t] = s / n
    return out


def _perm_linear_values_np(C, perms):
    n = perms.shape[1]
    return C[np.arange(n), perms].sum(axis=1) / n


@njit
def _perm_quad_values_nb(L, perms):
    K, n = perms.shape
    out = np.empty(K)
    for t in range(K):
        s = 0.0
        for i in range(n):
            si = perms[t, i]
            for k in range(n):
                s += L[i, si, k, perms[t, k]]
        out[t] = s / (n * n)
    return out


def _perm_quad_values_np(L, perms):
    n = perms.shape[1]
    ii = np.arange(n)[None, :, None]
    kk = np.arange(n)[None, None, :]
    vals = L[ii, perms[:, :, None], kk, perms[:, None, :]]
    return vals.sum(axis=(1, 2)) / (n * n)


# -- cyclical monotonicity scan -----------------------------------------------
# Returns (N, p0, p1, p2, perm_index, deficit); N == 0 means no violation.
# Scan order: N = 2 before N = 3, index tuples lexicographic, then permutations
# lexicographic, so the first hit is the lowest tuple.

@njit
def _monotonicity_scan_nb(C, rows, cols, max_n, tol):
    s = rows.shape[0]
    if max_n >= 2:
        for a in range(s):
            for b in range(a + 1, s):
                lhs = C[rows[a], cols[a]] + C[rows[b], cols[b]]
                rhs = C[rows[a], cols[b]] + C[rows[b], cols[a]]
                d = lhs - rhs
                if d > tol:
                    return 2, a, b, -1, 0, d
    if max_n >= 3:
        idx = np.empty(3, dtype=np.int64)
        for a in range(s):
            for b in range(a + 1, s):
                for c in range(b + 1, s):
                    idx[0] = a
                    idx[1] = b
                    idx[2] = c
                    lhs = C[rows[a], cols[a]] + C[rows[b], cols[b]] + C[rows[c], cols[c]]
                    for p in range(PERMS3.shape[0]):
                        rhs = (C[rows[a], cols[idx[PERMS3[p, 0]]]]
                               + C[rows[b], cols[idx[PERMS3[p, 1]]]]
                               + C[rows[c], cols[idx[PERMS3[p, 2]]]])
                        d = lhs - rhs
                        if d > tol:
                            return 3, a, b, c, p, d
    return 0, -1, -1, -1, -1, 0.0


def _monotonicity_scan_np(C, rows, cols, max_n, tol):
    s = rows.shape[0]
    if max_n >= 2 and s >= 2:
        a, b = np.triu_indices(s, 1)
        lhs = C[rows[a], cols[a]] + C[rows[b], cols[b]]
        rhs = C[rows[a], cols[b]] + C[rows[b], cols[a]]
        d = lhs - rhs
        hit = np.flatnonzero(d > tol)
        if hit.size:
            h = hit[0]
            return 2, int(a[h]), int(b[h]), -1, 0, float(d[h])
    if max_n >= 3 and s >= 3:
        tri = np.array(list(combinations(range(s), 3)), dtype=np.int64)
        r = rows[tri]
        c = cols[tri]
        lhs = C[r[:, 0], c[:, 0]] + C[r[:, 1], c[:, 1]] + C[r[:, 2], c[:, 2]]
        d = np.empty((tri.shape[0], PERMS3.shape[0]))
        for p, sig in enumerate(PERMS3):
            rhs = (C[r[:, 0], c[:, sig[0]]] + C[r[:, 1], c[:, sig[1]]]
                   + C[r[:, 2], c[:, sig[2]]])
            d[:, p] = lhs - rhs
        hit = np.flatnonzero(d.ravel() > tol)
        if hit.size:
            t, p = divmod(int(hit[0]), PERMS3.shape[0])
            return 3, int(tri[t, 0]), int(tri[t, 1]), int(tri[t, 2]), p, float(d[t, p])
    return 0, -1, -1, -1, -1, 0.0


# -- basic feasible solutions of a transportation polytope --------------------
# Walks every spanning tree of K_{n,m} (edge subsets of size n+m-1 without a
# cycle, in lexicographic cell order), solves the flow forced on the tree by
# leaf peeling and keeps the nonnegative ones. Same source for both paths;
# without numba it simply runs interpreted.

def _tree_flow(cells, a, b, n, m, out):
    k = cells.shape[0]
    nodes = n + m
    deg = np.zeros(nodes, dtype=np.int64)
    alive = np.ones(k, dtype=np.bool_)
    rest = np.empty(nodes)
    for v in range(n):
        rest[v] = a[v]
    for v in range(m):
        rest[n + v] = b[v]
    for e in range(k):
        deg[cells[e] // m] += 1
        deg[n + cells[e] % m] += 1
    for e in range(out.shape[0]):
        out[e] = 0.0
    for _ in range(k):
        leaf = -1
        for v in range(nodes):
            if deg[v] == 1:
                leaf = v
                break
        edge = -1
        for e in range(k):
            if alive[e]:
                i = cells[e] // m
                j = n + cells[e] % m
                if i == leaf or j == leaf:
                    edge = e
                    break
        i = cells[edge] // m
        j = n + cells[edge] % m
        other = j if leaf == i else i
        x = rest[leaf]
        out[cells[edge]] = x
        rest[other] -= x
        rest[leaf] = 0.0
        deg[leaf] -= 1
        deg[other] -= 1
        alive[edge] = False


def _make_basis_flows(tree_flow):
    def basis_flows(a, b, tol):
        n = a.shape[0]
        m = b.shape[0]
        E = n * m
        k = n + m - 1
        nodes = n + m
        chosen = np.empty(k, dtype=np.int64)
        labels = np.empty((k + 1, nodes), dtype=np.int64)
        for t in range(nodes):
            labels[0, t] = t
        nxt = np.zeros(k + 1, dtype=np.int64)
        flow = np.empty(E)
        buf = np.empty((64, E))
        count = 0
        depth = 0
        while depth >= 0:
            if depth == k:
                tree_flow(chosen, a, b, n, m, flow)
                ok = True
                for e in range(E):
                    if flow[e] < -tol:
                        ok = False
                        break
                if ok:
                    if count == buf.shape[0]:
                        bigger = np.empty((2 * buf.shape[0], E))
                        bigger[:count] = buf[:count]
                        buf = bigger
                    for e in range(E):
                        buf[count, e] = flow[e] if flow[e] > 0.0 else 0.0
                    count += 1
                depth -= 1
                continue
            c = nxt[depth]
            if c > E - (k - depth):
                depth -= 1
                continue
            nxt[depth] = c + 1
            i = c // m
            j = n + c % m
            lo = labels[depth, i]
            hi = labels[depth, j]
            if lo == hi:
                continue
            for t in range(nodes):
                v = labels[depth, t]
                labels[depth + 1, t] = lo if v == hi else v
            chosen[depth] = c
            depth += 1
            nxt[depth] = c + 1
        return buf[:count].copy()

    return basis_flows


_basis_flows_py = _make_basis_flows(_tree_flow)
_basis_flows_nb = njit(_make_basis_flows(njit(_tree_flow)))


# -- dispatch -----------------------------------------------------------------

if USE_NUMBA:
    tensor_apply_kernel = _tensor_apply_nb
    perm_linear_values = _perm_linear_values_nb
    perm_quad_values = _perm_quad_values_nb
    monotonicity_scan = _monotonicity_scan_nb
    basis_flows = _basis_flows_nb
else:
    tensor_apply_kernel = _tensor_apply_np
    perm_linear_values = _perm_linear_values_np
    perm_quad_values = _perm_quad_values_np
    monotonicity_scan = _monotonicity_scan_np
    basis_flows = _basis_flows_py
