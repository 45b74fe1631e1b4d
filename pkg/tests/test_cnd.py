import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gwot.cnd import (
    ConcavityError,
    build_concavity_witness,
    centering_matrix,
    certify_cnd,
    separable_concavity_check,
    tensor_cnd_sample_check,
)
from gwot.core import build_dense_tensor, gw_objective_separable, uniform
from gwot.polytope import random_coupling

from conftest import random_histogram, sqdist

C1 = np.array([[0.0, 1.0], [1.0, 0.0]])
C2 = np.array([[0.0, -1.0], [-1.0, 0.0]])


def test_centering_matrix():
    np.testing.assert_array_equal(centering_matrix(1), [[0.0]])
    np.testing.assert_allclose(centering_matrix(2), [[0.5, -0.5], [-0.5, 0.5]])
    for n in range(1, 8):
        H = centering_matrix(n)
        np.testing.assert_allclose(H @ H, H, atol=1e-12)
    with pytest.raises(ValueError):
        centering_matrix(0)


def test_certify_examples():
    c = certify_cnd(C1)
    assert c.verdict == "CND" and c.is_cnd and not c.is_cpd
    np.testing.assert_allclose(sorted(c.centered_eigenvalues), [-1.0, 0.0], atol=1e-12)
    d = certify_cnd(C2)
    assert d.verdict == "CPD" and not d.is_cnd
    assert certify_cnd(np.zeros((3, 3))).verdict == "both"
    with pytest.raises(ValueError):
        certify_cnd(np.array([[0.0, 1.0], [2.0, 0.0]]))


def test_indefinite_matrix_is_neither():
    C = np.diag([1.0, -1.0, 0.0, 0.0])
    assert certify_cnd(C).verdict == "neither"


@given(n=st.integers(2, 10), d=st.integers(1, 3), seed=st.integers(0, 2**31 - 1))
def test_squared_euclidean_is_cnd(n, d, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d)) * 10 ** rng.uniform(-2, 2)
    C = sqdist(X)
    cert = certify_cnd(C)
    assert cert.is_cnd
    # Rayleigh quotient on zero-sum vectors equals -2 |sum u_i x_i|^2
    U = rng.normal(size=(50, n))
    U -= U.mean(axis=1, keepdims=True)
    q = np.einsum("ti,ik,tk->t", U, C, U)
    np.testing.assert_allclose(q, -2 * np.sum((U @ X) ** 2, axis=1), rtol=1e-9, atol=1e-9 * np.abs(C).max())
    assert np.all(q <= cert.tol)


@given(n=st.integers(2, 7), seed=st.integers(0, 2**31 - 1))
def test_certificate_matches_rayleigh_maximum(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    C = A + A.T
    cert = certify_cnd(C)
    # independent: maximize u^T C u over unit zero-sum vectors with scipy
    from scipy.linalg import null_space

    V = null_space(np.ones((1, n)))
    top = np.linalg.eigvalsh(V.T @ C @ V).max()
    assert cert.max_eigenvalue == pytest.approx(top, abs=1e-10)
    assert cert.is_cnd == (top <= cert.tol)
    u = cert.max_vector
    assert abs(u.sum()) < 1e-12 and u @ C @ u == pytest.approx(top, abs=1e-10)


def test_concavity_examples():
    rng = np.random.default_rng(0)
    X, Y = rng.random((4, 2)), rng.random((5, 3))
    assert separable_concavity_check("square", sqdist(X), sqdist(Y)).concave
    assert not separable_concavity_check("square", C1, C2).concave


def test_kl_concavity_with_infinitely_divisible_target():
    rng = np.random.default_rng(1)
    X, Y = rng.random((4, 2)), rng.random((4, 2))
    C = sqdist(X)
    # log of exp(-D) is -D, which is CPD, so h1(C)=C (CND) does not match
    assert not separable_concavity_check("kl", C, np.exp(-sqdist(Y))).concave
    # log of exp(D) is D, CND like C
    assert separable_concavity_check("kl", C, np.exp(sqdist(Y))).concave


def test_witness_on_2x2_instance():
    a = b = uniform(2)
    w = build_concavity_witness("square", C1, C2, a, b)
    Qn = np.array([[1.0, -1.0], [-1.0, 1.0]])
    # Q is proportional to the alternating sign pattern
    ratio = w.Q.matrix / Qn
    np.testing.assert_allclose(ratio, ratio[0, 0], atol=1e-12)
    # with h1(C)=C1 and -h2(Cb) = -C2 the trace is 4 (hand-computed)
    assert np.trace(Qn.T @ C1 @ Qn @ -C2) == pytest.approx(4.0)
    Q = w.Q.matrix
    assert w.midpoint_gap == pytest.approx(-0.25 * np.trace(Q.T @ C1 @ Q @ -C2), abs=1e-14)
    assert w.midpoint_gap < 0
    for P in (w.P1, w.P2):
        assert P.matrix.min() >= 0
        np.testing.assert_allclose(P.matrix.sum(axis=1), a.weights)


def test_witness_refuses_concave_instance():
    rng = np.random.default_rng(2)
    with pytest.raises(ConcavityError):
        build_concavity_witness("square", sqdist(rng.random((3, 2))), sqdist(rng.random((3, 2))), uniform(3), uniform(3))


def midpoint_violation(loss, C, Cb, a, b, rng, pairs):
    f = lambda P: gw_objective_separable(loss, C, Cb, a, b, P.matrix)
    worst = -np.inf
    for _ in range(pairs):
        P1, P2 = random_coupling(a, b, rng), random_coupling(a, b, rng)
        mid = 0.5 * (P1.matrix + P2.matrix)
        worst = max(worst, 0.5 * (f(P1) + f(P2)) - gw_objective_separable(loss, C, Cb, a, b, mid))
    return worst


@given(n=st.integers(2, 5), m=st.integers(2, 5), seed=st.integers(0, 2**31 - 1))
def test_concavity_equivalence(n, m, seed):
    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(n, n)), rng.normal(size=(m, m))
    C, Cb = A + A.T, B + B.T
    a, b = random_histogram(rng, n), random_histogram(rng, m)
    verdict = separable_concavity_check("square", C, Cb)
    if verdict.concave:
        assert midpoint_violation("square", C, Cb, a, b, rng, 100) <= 1e-9
    else:
        w = build_concavity_witness("square", C, Cb, a, b)
        assert w.midpoint_gap < -1e-12


def test_sample_check_examples():
    rng = np.random.default_rng(3)
    a, b = uniform(3), uniform(3)
    L = build_dense_tensor("square", sqdist(rng.random((3, 2))), sqdist(rng.random((3, 2))))
    res = tensor_cnd_sample_check(L, a, b, trials=1000)
    assert not res.refuted and res.verdict == "not-refuted"
    bad = build_dense_tensor("square", C1, C2)
    res = tensor_cnd_sample_check(bad, uniform(2), uniform(2), trials=1000)
    assert res.refuted and bad.quad(res.witness.matrix) > 0
    assert tensor_cnd_sample_check(np.zeros((2, 2, 2, 2)), uniform(2), uniform(2), trials=50).max_value == 0
    with pytest.raises(ValueError):
        tensor_cnd_sample_check(bad, uniform(2), uniform(2), trials=0)
