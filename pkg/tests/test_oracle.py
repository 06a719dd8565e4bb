import numpy as np
import pytest

from ibcg.geometry import Simplex
from ibcg.oracle import (CountingOracle, ProblemConstants, derived_lipschitz_bundle,
                         validate_oracle)
from ibcg.problems import ToyCoresetProblem, mc_generate, toy_make


def test_constants_validation():
    with pytest.raises(ValueError):
        ProblemConstants(mu_g=0.0, L_g=1.0, D_X=1.0)
    with pytest.raises(ValueError):
        ProblemConstants(mu_g=2.0, L_g=1.0, D_X=1.0)
    with pytest.raises(ValueError):
        ProblemConstants(mu_g=1.0, L_g=1.0, D_X=1.0, C_yx_g=-1.0)
    assert ProblemConstants(mu_g=1.0, L_g=3.0, D_X=1.0).beta == pytest.approx(0.5)


def test_derived_bundle_on_diamond_toy():
    # A = I and X = [e1, e2, -e1, -e2]: ell(lam) = 1/2 ||X lam - (2, 2)||^2,
    # so the hypergradient is Lipschitz with constant ||X^T X|| = 2, and
    # ||grad_yx g|| = ||X|| = sqrt(2)
    p = toy_make(1.0, 1.0, layout="published")
    b = derived_lipschitz_bundle(p.constants())
    assert b.C_yx_g == pytest.approx(np.sqrt(2.0))
    assert b.C_y_f == pytest.approx(np.sqrt(13.0))
    assert b.L_y_cap == pytest.approx(np.sqrt(2.0))
    assert b.C_v == pytest.approx(np.sqrt(2.0))
    assert b.L_ell == pytest.approx(2.0)
    assert b.C_1 == pytest.approx(1.0)
    assert b.C_2 == pytest.approx(0.0)


def test_derived_bundle_leaves_unknowns_missing():
    b = derived_lipschitz_bundle(ProblemConstants(mu_g=1.0, L_g=2.0, D_X=1.0, C_yx_g=4.0))
    assert b.L_y_cap == 4.0
    assert b.C_v is None and b.L_ell is None and b.C_1 is None and b.C_2 is None


def test_counting_oracle_counts_and_forwards():
    p = toy_make(1.0, 2.0, seed=1)
    c = CountingOracle(p)
    x, y = np.full(4, 0.25), np.ones(2)
    np.testing.assert_array_equal(c.hvp_gyy(x, y, y), p.hvp_gyy(x, y, y))
    c.hvp_gyy(x, y, y)
    c.jvp_gyx(x, y, y)
    assert c.count("hvp_gyy") == 2
    assert c.count("jvp_gyx") == 1
    assert c.count("grad_f_x") == 0
    assert c.y_dim == 2


@pytest.mark.parametrize("mu,L,seed", [(1.0, 1.0, 8), (1.0, 10.0, 8), (0.1, 0.1, 3)])
def test_validate_toy(mu, L, seed):
    p = toy_make(mu, L, seed)
    rep = validate_oracle(p, p.constants(), p.feasible_set, seed=0, trials=20)
    assert rep.passed, rep.summary()


def test_validate_matrix_completion():
    p = mc_generate(12, 3, seed=2)
    rep = validate_oracle(p, p.constants_basic(), p.feasible_set, seed=1, trials=10)
    assert rep.passed, rep.summary()


class _WrongHessian(ToyCoresetProblem):
    def hvp_gyy(self, x, y, v):
        return 2.0 * super().hvp_gyy(x, y, v)


class _AsymmetricHessian(ToyCoresetProblem):
    def hvp_gyy(self, x, y, v):
        return (self.H + np.array([[0.0, 0.1], [0.0, 0.0]])) @ v


def test_validate_flags_broken_oracles():
    base = toy_make(1.0, 2.0, seed=1)
    bad = _WrongHessian(base.A, base.X)
    rep = validate_oracle(bad, base.constants(), bad.feasible_set, trials=5)
    assert not rep["hvp_gyy"].passed
    assert not rep["spectral_bounds"].passed
    assert rep["grad_f_y"].passed
    asym = _AsymmetricHessian(base.A, base.X)
    rep = validate_oracle(asym, base.constants(), asym.feasible_set, trials=5)
    assert not rep["hvp_symmetry"].passed


def test_validate_reports_wrong_spectrum():
    p = toy_make(1.0, 10.0, seed=0)
    c = ProblemConstants(mu_g=2.0, L_g=5.0, D_X=Simplex(4).diameter)
    rep = validate_oracle(p, c, p.feasible_set, trials=20)
    assert not rep["spectral_bounds"].passed


def test_lower_solution_lipschitz_constant():
    assert derived_lipschitz_bundle(ProblemConstants(1.0, 1.0, 1.0, C_yx_g=1.0)).L_y_cap == 1.0
    assert derived_lipschitz_bundle(ProblemConstants(1.0, 1.0, 1.0, C_yx_g=0.0)).L_y_cap == 0.0
