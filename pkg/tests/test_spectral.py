import math

import numpy as np
import pytest
from pydantic import ValidationError

from exceptions import ParameterDomainError
from models import ProblemParams, Regime
from services.spectral import (
    apply_A2_residual,
    boundary_trace,
    derive_params,
    eigenfunction,
    eigenfunction_derivatives,
    generalized_limit_samples,
    gram_matrix,
    interp_norm,
    mu_critical,
    parseval_defect,
    project_initial_data,
    rho_constants,
    semigroup_coeffs,
    verify_hardy_poincare,
    weighted_norm,
)
from tests.conftest import PARAM_SETS, make_params


def test_classical_parameters():
    d = derive_params(make_params("classical"))
    assert (d.ell, d.kappa, d.nu, d.gamma) == (0, 1.0, 0.5, 0.0)
    assert d.regime == Regime.SUB_ONE
    assert d.mu_crit == 0.25


def test_super_one_parameters():
    d = derive_params(make_params("super_one"))
    assert d.ell == 1 and d.regime == Regime.SUPER_ONE
    assert d.kappa == 0.5
    assert d.nu == pytest.approx(math.sqrt(1.25) / 0.5, rel=1e-15)
    assert d.gamma == pytest.approx(-0.5 - math.sqrt(1.25), rel=1e-15)


def test_equal_one_parameters():
    d = derive_params(make_params("equal_one"))
    assert d.regime == Regime.EQUAL_ONE
    assert d.ell == 0 and d.mu_crit == 0.0
    assert d.nu == pytest.approx(1.0) and d.kappa == 0.5
    assert d.trace_denominator == pytest.approx(0.5)


def test_mu_above_critical_is_rejected():
    with pytest.raises(ParameterDomainError, match=r"mu < \(1-alpha-beta\)\^2/4"):
        derive_params(ProblemParams(alpha=1.0, beta=1.0, mu=0.3))


def test_equal_one_requires_negative_mu():
    with pytest.raises(ParameterDomainError, match="mu < 0"):
        derive_params(ProblemParams(alpha=1.0, beta=0.0, mu=0.0))


@pytest.mark.parametrize("field,value", [("alpha", 2.0), ("alpha", -0.1), ("T", 0.0), ("r", 2), ("mu", math.nan)])
def test_problem_params_validation(field, value):
    with pytest.raises(ValidationError):
        ProblemParams(**{field: value})


def test_mu_critical_values():
    assert mu_critical(0.0) == 0.25
    assert mu_critical(1.0) == 0.0
    assert mu_critical(2.0) == 0.25


def test_rho_constants_reference_values():
    assert rho_constants(make_params("super_one")).as_tuple() == (6.0, 4.0, -2.0, 1.0)
    assert rho_constants(make_params("classical")).as_tuple() == (0.0, 0.0, 0.0, 0.0)


def test_classical_eigenfunctions_are_sines(classical_basis):
    x = np.linspace(0.01, 1.0, 100)
    for m in classical_basis.modes:
        np.testing.assert_allclose(eigenfunction(m, classical_basis.derived, x),
                                   math.sqrt(2.0) * np.sin(m.k * math.pi * x), atol=1e-10)
        assert m.lam_sq == pytest.approx((m.k * math.pi) ** 4, rel=1e-12)


def test_eigenfunction_rejects_origin(classical_basis):
    with pytest.raises(ParameterDomainError):
        eigenfunction(classical_basis.modes[0], classical_basis.derived, np.array([0.0, 0.5]))


@pytest.mark.parametrize("name", list(PARAM_SETS))
def test_gram_matrix_is_identity(bases, name):
    basis = bases[name]
    assert np.max(np.abs(gram_matrix(basis) - np.eye(basis.K))) < 1e-8


@pytest.mark.parametrize("name", list(PARAM_SETS))
def test_square_operator_residual(bases, name):
    basis = bases[name]
    rho = rho_constants(basis.params)
    grid = np.linspace(0.05, 0.95, 101)
    for m in basis.modes[:10]:
        assert apply_A2_residual(m, basis.derived, rho, grid) < 1e-5


def test_finite_difference_residual_for_low_modes(classical_basis):
    rho = rho_constants(classical_basis.params)
    grid = np.linspace(0.1, 0.9, 41)
    for m in classical_basis.modes[:3]:
        assert apply_A2_residual(m, classical_basis.derived, rho, grid, method="fd") < 1e-5


def test_residual_rejects_grid_outside_window(classical_basis):
    rho = rho_constants(classical_basis.params)
    with pytest.raises(ParameterDomainError):
        apply_A2_residual(classical_basis.modes[0], classical_basis.derived, rho, np.array([0.01, 0.5]))


def test_analytic_derivatives_match_sine(classical_basis):
    x = np.linspace(0.1, 0.9, 9)
    m = classical_basis.modes[1]
    w = 2.0 * math.pi
    D = eigenfunction_derivatives(m, classical_basis.derived, x)
    expected = math.sqrt(2.0) * np.stack([np.sin(w * x), w * np.cos(w * x), -w ** 2 * np.sin(w * x),
                                          -w ** 3 * np.cos(w * x), w ** 4 * np.sin(w * x)])
    np.testing.assert_allclose(D, expected, atol=1e-8 * w ** 4)


def test_classical_boundary_trace(classical_basis):
    for m in classical_basis.modes:
        assert boundary_trace(m, classical_basis.derived) == pytest.approx(math.sqrt(2.0) * m.k * math.pi, rel=1e-12)


@pytest.mark.parametrize("name", list(PARAM_SETS))
def test_generalized_limit_approaches_trace(bases, name):
    basis = bases[name]
    m = basis.modes[0]
    samples = generalized_limit_samples(m, basis.derived, np.array([1e-10]))
    assert samples[0] == pytest.approx(m.trace_const, rel=1e-6)


def test_projection_recovers_single_mode(classical_basis):
    m = classical_basis.modes[1]
    a = project_initial_data(lambda x: eigenfunction(m, classical_basis.derived, x), classical_basis)
    expected = np.zeros(classical_basis.K)
    expected[1] = 1.0
    np.testing.assert_allclose(a, expected, atol=1e-9)


def test_parseval_for_polynomial_data(classical_basis):
    u0 = lambda x: x * (1.0 - x)
    a = project_initial_data(u0, classical_basis)
    # <x(1-x), sqrt(2) sin(k pi x)> = 4 sqrt(2) / (k pi)^3 for odd k
    k = np.arange(1, classical_basis.K + 1)
    expected = np.where(k % 2 == 1, 4.0 * math.sqrt(2.0) / (k * math.pi) ** 3, 0.0)
    np.testing.assert_allclose(a, expected, atol=1e-9)
    defect = parseval_defect(u0, a, classical_basis)
    assert -1e-10 < defect < 1e-6
    assert weighted_norm(u0, 0.0, classical_basis.quad) == pytest.approx(math.sqrt(1.0 / 30.0), rel=1e-10)


def test_semigroup_decay(classical_basis):
    a = np.ones(3)
    out = semigroup_coeffs(a, classical_basis, 0.01)
    np.testing.assert_allclose(out, np.exp(-classical_basis.lam_sq[:3] * 0.01), rtol=1e-14)
    with pytest.raises(ParameterDomainError):
        semigroup_coeffs(a, classical_basis, -1.0)


def test_interp_norm_conventions(classical_basis):
    a = np.array([1.0, 2.0])
    lam = np.array([math.pi ** 2, (2 * math.pi) ** 2])
    assert interp_norm(a, classical_basis, 0.5) == pytest.approx(math.sqrt(np.sum(a ** 2 / lam)), rel=1e-12)
    assert interp_norm(a, classical_basis, 0.5, "generator") == pytest.approx(
        math.sqrt(np.sum(a ** 2 / lam ** 2)), rel=1e-12)
    assert interp_norm(a, classical_basis, 0.0) == pytest.approx(math.sqrt(5.0))
    with pytest.raises(ParameterDomainError):
        interp_norm(a, classical_basis, 0.5, "other")


@pytest.mark.parametrize("name", ["classical", "sub_one", "super_one"])
def test_hardy_and_poincare_inequalities(name):
    p = make_params(name)
    u = lambda x: x * (1.0 - x)
    du = lambda x: 1.0 - 2.0 * x
    lhs_h, rhs_h, lhs_p, rhs_p = verify_hardy_poincare(u, du, p)
    assert lhs_h <= rhs_h
    assert lhs_p <= rhs_p


def test_poincare_constant_undefined_when_weights_sum_to_one():
    _, _, _, rhs_p = verify_hardy_poincare(lambda x: x * (1.0 - x), lambda x: 1.0 - 2.0 * x, make_params("equal_one"))
    assert rhs_p == math.inf
