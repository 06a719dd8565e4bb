import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ibcg.linalg import (ShapeMismatchError, axpy, finite_diff_grad, finite_diff_jvp, inner,
                         norm, top_singular_triple)
from oracles import jacobi_svd, loop_inner, sym_eigvals


def test_inner_and_norm_on_matrices():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[0.5, -1.0], [2.0, 0.0]])
    assert inner(a, b) == pytest.approx(0.5 - 2.0 + 6.0)
    assert norm(a) == pytest.approx(np.sqrt(30.0))
    np.testing.assert_array_equal(axpy(2.0, a, b), 2 * a + b)


def test_shape_mismatch_raises():
    with pytest.raises(ShapeMismatchError):
        inner(np.zeros(3), np.zeros(4))
    with pytest.raises(ShapeMismatchError):
        axpy(1.0, np.zeros((2, 2)), np.zeros(4))


@pytest.mark.parametrize("shape", [(1, 1), (5, 3), (3, 5), (12, 12), (30, 20)])
def test_power_iteration_matches_jacobi(shape):
    rng = np.random.default_rng(sum(shape))
    C = rng.standard_normal(shape)
    t = top_singular_triple(C, tol=1e-13, max_iters=20_000)
    _, s, _ = jacobi_svd(C)
    assert t.converged
    assert t.sigma == pytest.approx(s[0], rel=1e-9)
    # u^T C v recovers sigma and the vectors are unit
    assert float(t.u @ C @ t.v) == pytest.approx(s[0], rel=1e-9)
    assert np.linalg.norm(t.u) == pytest.approx(1.0)
    assert np.linalg.norm(t.v) == pytest.approx(1.0)


def test_rank_one_known_triple():
    u = np.array([3.0, 4.0]) / 5.0
    v = np.array([1.0, 0.0, 0.0])
    t = top_singular_triple(7.0 * np.outer(u, v))
    assert t.sigma == pytest.approx(7.0)
    assert abs(float(t.u @ u)) == pytest.approx(1.0)


def test_power_iteration_is_deterministic():
    C = np.random.default_rng(1).standard_normal((8, 6))
    a, b = top_singular_triple(C, seed=3), top_singular_triple(C, seed=3)
    np.testing.assert_array_equal(a.u, b.u)
    np.testing.assert_array_equal(a.v, b.v)


@pytest.mark.parametrize("C", [np.zeros((3, 3)), np.array([[1.0, np.nan]])])
def test_power_iteration_rejects_degenerate(C):
    with pytest.raises(ValueError):
        top_singular_triple(C)


def test_finite_diff_grad_quadratic():
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    x = np.array([0.3, -1.2])
    g = finite_diff_grad(lambda z: 0.5 * z @ Q @ z, x)
    np.testing.assert_allclose(g, Q @ x, atol=1e-8)


def test_finite_diff_grad_matrix_shape():
    X = np.arange(6.0).reshape(2, 3)
    g = finite_diff_grad(lambda Z: float(np.sum(Z**2)), X)
    assert g.shape == X.shape
    np.testing.assert_allclose(g, 2 * X, atol=1e-7)


def test_finite_diff_grad_nonfinite():
    with pytest.raises(FloatingPointError), np.errstate(invalid="ignore"):
        finite_diff_grad(lambda z: np.log(z[0]), np.array([0.0]))


def test_finite_diff_jvp_linear_map():
    A = np.array([[1.0, 2.0], [0.0, -1.0], [3.0, 1.0]])
    d = np.array([0.5, 0.25])
    np.testing.assert_allclose(finite_diff_jvp(lambda z: A @ z, np.ones(2), d), A @ d,
                               atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (4, 3), elements=st.floats(-10, 10)))
def test_sigma_bounds_every_unit_pair(C):
    if not np.any(np.abs(C) > 1e-3):
        return
    t = top_singular_triple(C, tol=1e-12, max_iters=50_000)
    rng = np.random.default_rng(0)
    for _ in range(5):
        u, v = rng.standard_normal(4), rng.standard_normal(3)
        u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
        assert abs(u @ C @ v) <= t.sigma * (1 + 1e-6) + 1e-9


def test_inner_examples():
    assert inner([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 14.0
    assert inner(np.arange(4.0), np.zeros(4)) == 0.0
    np.testing.assert_array_equal(axpy(2.0, [1.0, 1.0], [3.0, 0.0]), [5.0, 2.0])
    a = np.array([1.5, -2.0])
    np.testing.assert_array_equal(axpy(1.0, a, -a), np.zeros(2))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 8, elements=st.floats(-1e3, 1e3)),
       arrays(np.float64, 8, elements=st.floats(-1e3, 1e3)),
       arrays(np.float64, 8, elements=st.floats(-1e3, 1e3)), st.floats(-10, 10))
def test_inner_is_symmetric_bilinear(a, b, c, alpha):
    na, nb, nc = (float(np.abs(v).sum()) for v in (a, b, c))
    scale = 1.0 + na * nb + na * nc + nb * nc
    assert inner(a, b) == inner(b, a)
    assert abs(inner(a, b) - loop_inner(a, b)) <= 1e-12 * scale
    lhs = inner(axpy(alpha, a, b), c)
    rhs = alpha * inner(a, c) + inner(b, c)
    assert abs(lhs - rhs) <= 1e-12 * (1 + abs(alpha)) * scale


def test_diagonal_singular_triple():
    t = top_singular_triple(np.diag([3.0, 1.0]))
    assert t.sigma == pytest.approx(3.0)
    assert abs(t.u[0]) == pytest.approx(1.0) and abs(t.v[0]) == pytest.approx(1.0)


def test_singular_residual_on_random_matrices():
    rng = np.random.default_rng(7)
    for _ in range(20):
        C = rng.standard_normal((8, 6))
        t = top_singular_triple(C, tol=1e-12, max_iters=100_000)
        assert t.converged
        assert np.linalg.norm(C @ t.v - t.sigma * t.u) <= 1e-6 * t.sigma
        assert t.sigma == pytest.approx(jacobi_svd(C)[1][0], rel=1e-6)


def test_sigma_is_top_eigenvalue_for_spd():
    rng = np.random.default_rng(11)
    for _ in range(5):
        G = rng.standard_normal((5, 5))
        C = G @ G.T + 0.1 * np.eye(5)
        t = top_singular_triple(C, tol=1e-14, max_iters=100_000)
        assert t.sigma == pytest.approx(sym_eigvals(C)[-1], rel=1e-8)


def test_constant_function_has_zero_gradient():
    np.testing.assert_array_equal(finite_diff_grad(lambda z: 4.0, np.ones(3)), np.zeros(3))
    np.testing.assert_allclose(finite_diff_grad(lambda z: 0.5 * z @ z, np.array([1.0, 2.0])),
                               [1.0, 2.0], atol=1e-8)
