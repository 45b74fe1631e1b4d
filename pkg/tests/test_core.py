import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gwot.core import (
    CostMatrix,
    Coupling,
    DiffPlan,
    Histogram,
    Permutation,
    QuadTensor,
    SeparableTensor,
    as_tensor,
    build_dense_tensor,
    get_loss,
    gw_objective_dense,
    gw_objective_separable,
    make_coupling,
    make_histogram,
    product_coupling,
    support,
    tensor_apply,
    uniform,
)

from conftest import random_histogram

C_EX = np.array([[0.0, 1.0], [1.0, 0.0]])
CB_EX = np.array([[0.0, 2.0], [2.0, 0.0]])


def quadruple_sum(L, P):
    n, m = P.shape
    out = np.zeros((n, m))
    for i, j, k, l in itertools.product(range(n), range(m), range(n), range(m)):
        out[k, l] += L[i, j, k, l] * P[i, j]
    return out


@pytest.mark.parametrize(
    "raw, expected",
    [((1, 1), (0.5, 0.5)), ((0.3, 0.7), (0.3, 0.7)), ((2, 0, 6), (0.25, 0, 0.75))],
)
def test_make_histogram(raw, expected):
    np.testing.assert_allclose(make_histogram(raw).weights, expected, atol=1e-15)


@pytest.mark.parametrize("bad", [(), (-1, 2), (0, 0), (np.nan, 1), (np.inf, 1)])
def test_make_histogram_rejects(bad):
    with pytest.raises(ValueError):
        make_histogram(bad)


def test_histogram_is_immutable():
    h = uniform(3)
    with pytest.raises(ValueError):
        h.weights[0] = 1.0


def test_product_coupling_examples():
    np.testing.assert_allclose(product_coupling(uniform(2), uniform(2)).matrix, np.full((2, 2), 0.25))
    np.testing.assert_allclose(product_coupling(uniform(1), uniform(1)).matrix, [[1.0]])
    P = product_coupling(make_histogram([0.3, 0.7]), uniform(2))
    np.testing.assert_allclose(P.matrix, [[0.15, 0.15], [0.35, 0.35]], atol=1e-15)


def test_coupling_clamps_round_off_and_rejects_negative():
    a = uniform(2)
    P = Coupling(np.array([[0.5 + 1e-13, -1e-13], [0.0, 0.5]]), a, a)
    assert P.matrix.min() == 0.0
    with pytest.raises(ValueError):
        Coupling(np.array([[0.6, -0.1], [-0.1, 0.6]]), a, a)
    with pytest.raises(ValueError):
        Coupling(np.array([[0.5, 0.1], [0.0, 0.4]]), a, a)


def test_make_coupling_infers_marginals():
    P = make_coupling([[0.3, 0.2], [0.0, 0.5]])
    np.testing.assert_allclose(P.row_marginal.weights, [0.5, 0.5])
    np.testing.assert_allclose(P.col_marginal.weights, [0.3, 0.7])


def test_diff_plan_and_permutation():
    DiffPlan(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    with pytest.raises(ValueError):
        DiffPlan(np.array([[1.0, 0.0], [0.0, 1.0]]))
    np.testing.assert_allclose(Permutation((1, 0)).matrix(), [[0, 0.5], [0.5, 0]])
    with pytest.raises(ValueError):
        Permutation((0, 0))


def test_cost_matrix_symmetry_flag():
    CostMatrix(C_EX, symmetric=True)
    with pytest.raises(ValueError):
        CostMatrix(np.array([[0.0, 1.0], [2.0, 0.0]]), symmetric=True)


def test_support_examples():
    assert support(np.eye(2) / 2) == {(0, 0), (1, 1)}
    assert len(support(np.full((2, 2), 0.25))) == 4
    s = support(np.array([[0.3, 0.2], [0.0, 0.5]]))
    assert s == {(0, 0), (0, 1), (1, 1)} and len(s) == 2 + 2 - 1


def test_tensor_apply_examples():
    P = np.eye(2) / 2
    np.testing.assert_array_equal(tensor_apply(np.zeros((2, 2, 2, 2)), P), np.zeros((2, 2)))
    np.testing.assert_allclose(tensor_apply(np.ones((2, 2, 2, 2)), P), np.ones((2, 2)))
    L = build_dense_tensor("square", C_EX, CB_EX)
    LP = tensor_apply(L, P)
    # frozen from the brute-force quadruple sum
    assert LP[0, 0] == pytest.approx(0.25, abs=1e-15)
    np.testing.assert_allclose(LP, quadruple_sum(L.entries, P), atol=1e-15)


def test_tensor_apply_shape_mismatch():
    with pytest.raises(ValueError):
        tensor_apply(np.zeros((2, 2, 2, 2)), np.ones((3, 2)) / 6)


def test_build_dense_tensor_examples():
    L = build_dense_tensor("square", [[0.0]], [[0.0]])
    assert L.entries.shape == (1, 1, 1, 1) and L.entries[0, 0, 0, 0] == 0
    ones = np.ones((2, 2))
    np.testing.assert_allclose(build_dense_tensor("kl", ones, ones).entries, 0.0, atol=1e-15)
    rng = np.random.default_rng(0)
    C, Cb = rng.random((3, 3)), rng.random((2, 2))
    E = build_dense_tensor("square", C, Cb).entries
    for i, j, k, l in itertools.product(range(3), range(2), range(3), range(2)):
        assert E[i, j, k, l] == pytest.approx(0.5 * (C[i, k] - Cb[j, l]) ** 2)


def test_kl_loss_matches_definition():
    x, y = np.array([0.0, 0.5, 2.0]), np.array([1.0, 0.25, 3.0])
    kl = get_loss("kl")(x, y)
    ref = np.array([1.0, 0.5 * np.log(2.0) - 0.5 + 0.25, 2 * np.log(2 / 3) - 2 + 3])
    np.testing.assert_allclose(kl, ref, atol=1e-15)


def test_kl_domain():
    with pytest.raises(ValueError):
        get_loss("kl").check_domain(np.ones((2, 2)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        get_loss("nope")


def test_objective_examples():
    P = np.eye(2) / 2
    a = b = uniform(2)
    L_self = build_dense_tensor("square", C_EX, C_EX)
    assert gw_objective_dense(L_self, P) == 0.0
    L = build_dense_tensor("square", C_EX, CB_EX)
    assert gw_objective_dense(L, P) == pytest.approx(0.25, abs=1e-15)
    assert gw_objective_dense(np.full((2, 2, 2, 2), 3.5), product_coupling(a, b).matrix) == pytest.approx(3.5)
    assert gw_objective_separable("square", C_EX, CB_EX, a, b, P) == pytest.approx(0.25, abs=1e-15)
    assert gw_objective_separable("square", C_EX, C_EX, a, b, P) == pytest.approx(0.0, abs=1e-15)
    ones = np.ones((2, 2))
    assert gw_objective_separable("kl", ones, ones, a, b, np.full((2, 2), 0.25)) == pytest.approx(0.0, abs=1e-15)


def test_separable_objective_rejects_marginal_mismatch():
    with pytest.raises(ValueError):
        gw_objective_separable("square", C_EX, CB_EX, uniform(2), make_histogram([0.3, 0.7]), np.eye(2) / 2)


def test_quad_tensor_symmetry_and_cap():
    rng = np.random.default_rng(3)
    E = rng.random((2, 3, 2, 3))
    T = QuadTensor(E)
    assert not T.symmetric
    S = T.symmetrized()
    assert S.symmetric
    P = rng.random((2, 3))
    assert S.quad(P) == pytest.approx(T.quad(P))
    with pytest.raises(ValueError):
        QuadTensor(E, symmetric=True)
    with pytest.raises(ValueError):
        QuadTensor(np.zeros((33, 32, 33, 32)))


@given(
    n=st.integers(1, 5), m=st.integers(1, 5), seed=st.integers(0, 2**31 - 1),
    loss=st.sampled_from(["square", "kl"]),
)
def test_separable_apply_matches_dense(n, m, seed, loss):
    rng = np.random.default_rng(seed)
    C = rng.random((n, n)) + (0.1 if loss == "kl" else 0)
    Cb = rng.random((m, m)) + 0.1
    P = rng.random((n, m))  # linear in P for any matrix
    T = SeparableTensor(get_loss(loss), C, Cb)
    D = build_dense_tensor(loss, C, Cb)
    np.testing.assert_allclose(T.apply(P), tensor_apply(D, P), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(T.dense().entries, D.entries, rtol=1e-13, atol=1e-13)


@given(n=st.integers(1, 5), m=st.integers(1, 5), seed=st.integers(0, 2**31 - 1))
def test_tensor_apply_is_linear(n, m, seed):
    rng = np.random.default_rng(seed)
    L = rng.normal(size=(n, m, n, m))
    P, Q = rng.random((n, m)), rng.random((n, m))
    s = rng.normal()
    np.testing.assert_allclose(tensor_apply(L, P + s * Q), tensor_apply(L, P) + s * tensor_apply(L, Q), atol=1e-11)


@given(n=st.integers(1, 6), m=st.integers(1, 6), seed=st.integers(0, 2**31 - 1))
def test_dense_and_separable_objective_agree(n, m, seed):
    rng = np.random.default_rng(seed)
    X, Y = rng.random((n, 2)), rng.random((m, 2))
    C = ((X[:, None] - X[None]) ** 2).sum(-1)
    Cb = ((Y[:, None] - Y[None]) ** 2).sum(-1)
    a, b = random_histogram(rng, n), random_histogram(rng, m)
    P = np.outer(a, b)
    dense = gw_objective_dense(build_dense_tensor("square", C, Cb), P)
    sep = gw_objective_separable("square", C, Cb, a, b, P)
    assert abs(dense - sep) <= 1e-10 * max(1.0, abs(dense))


def test_as_tensor_forms():
    T = as_tensor(("square", C_EX, CB_EX))
    assert isinstance(T, SeparableTensor)
    assert T.symmetric
    assert as_tensor(np.zeros((2, 2, 2, 2))).shape == (2, 2)
