import math

import mpmath
import numpy as np
import pytest

from exceptions import ParameterDomainError, PrecisionError, TruncationError
from services.moment import (
    BumpIntegral,
    LambdaProduct,
    bound_constant_log,
    build_family,
    f_bound_log,
    f_k_l1_log,
    f_k_on_real_axis,
    fourier_radius,
    h_function,
    interpolant,
    lambda_envelope_log,
    lambda_prime_log,
    log_lambda_product,
    moment_log,
    multiplier_params,
    psi_bound_log,
    sigma_bump,
)


@pytest.fixture(scope="module")
def mp_half():
    return multiplier_params(0.5, 1.0, 0.5)


@pytest.fixture(scope="module")
def bump(mp_half):
    return BumpIntegral(mp_half)


def test_sigma_bump_values():
    assert sigma_bump(1.0, 0.0) == pytest.approx(math.exp(-1.0), rel=1e-15)
    assert sigma_bump(5.0, 1.0) == 0.0 and sigma_bump(5.0, -1.0) == 0.0
    assert sigma_bump(2.0, 0.5) == pytest.approx(math.exp(-8.0 / 3.0), rel=1e-15)
    np.testing.assert_array_equal(sigma_bump(3.0, np.array([-2.0, 1.5])), [0.0, 0.0])


def test_multiplier_params():
    mp = multiplier_params(1.0, 1.0, 0.5)
    assert mp.a == 0.25
    assert mp.a * mp.theta == pytest.approx((2.0 + math.sqrt(2.0)) * 2.25 / 2.0, rel=1e-15)
    assert mp.a < 0.5
    with pytest.raises(ParameterDomainError):
        multiplier_params(1.0, 1.0, 1.0)


def test_h_is_normalized(bump):
    assert bump.log_h_imag(0.0) == 0.0
    assert bump.h_real([0.0])[0] == pytest.approx(1.0, abs=1e-14)


def test_h_matches_direct_quadrature(mp_half, bump):
    breaks = [-1, -0.5, 0, 0.5, 1]
    with mpmath.workdps(30):
        theta, a = mpmath.mpf(mp_half.theta), mpmath.mpf(mp_half.a)
        sigma = lambda t: mpmath.exp(-theta / (1 - t * t))
        norm = mpmath.quad(sigma, breaks)
        cosines = {x: mpmath.quad(lambda t: sigma(t) * mpmath.cos(a * x * t), breaks) / norm for x in (3.0, 40.0)}
        expected = mpmath.quad(lambda t: sigma(t) * mpmath.exp(a * 80 * t), breaks) / norm
    for x, value in cosines.items():
        assert bump.h_real([x])[0] == pytest.approx(float(value), rel=1e-10, abs=1e-15)
    assert bump.log_h_imag(80.0) == pytest.approx(float(mpmath.log(expected)), rel=1e-10)


def test_h_lower_bound_on_imaginary_axis(mp_half, bump):
    ys = np.linspace(-4000.0, 4000.0, 1000)
    root = math.sqrt(mp_half.theta + 1.0)
    bound = mp_half.a * np.abs(ys) / (2.0 * root) - math.log(11.0 * root)
    assert np.all(bump.log_h_imag(ys) >= bound)


def test_h_type_bounds(mp_half, bump):
    xs = np.linspace(-2000.0, 2000.0, 1000)
    assert np.all(np.abs(bump.h_real(xs)) <= 1.0 + 1e-12)
    grid = np.linspace(-100.0, 100.0, 10)
    zs = (grid[:, None] + 1j * grid[None, :]).ravel()
    values = bump.h_complex(zs)
    assert np.all(np.abs(values) <= np.exp(mp_half.a * np.abs(zs.imag)) * (1.0 + 1e-10))


def test_h_complex_agrees_with_axis_evaluations(bump):
    xs = np.array([0.5, 7.0, 33.0])
    np.testing.assert_allclose(bump.h_complex(xs).real, bump.h_real(xs), atol=1e-13)
    assert bump.h_complex([25.0j])[0].real == pytest.approx(math.exp(bump.log_h_imag(25.0)), rel=1e-10)


def test_h_decay_with_fitted_constant(mp_half, bump):
    c = bump.fitted_constant(x_max=1e4, points=200)
    assert 0.0 < c < math.inf
    xs = np.geomspace(1.001, 1e4, 200)
    log_env = bump.log_decay_envelope(xs, c * (1.0 + 1e-9))
    mask = log_env > math.log(1e-12)
    assert np.all(np.abs(bump.h_real(xs[mask])) <= np.exp(log_env[mask]) + 1e-15)


def test_lambda_product_at_origin(classical_basis):
    assert log_lambda_product(classical_basis, 0.0) == 0.0


def test_lambda_product_matches_direct_sum(classical_basis):
    k = np.arange(1, 1_000_001, dtype=float)
    direct = np.sum(np.log(1.0 + 1j / (k * math.pi) ** 4))
    value = log_lambda_product(classical_basis, 1.0)
    assert abs(value - direct) < 1e-10


def test_lambda_product_growth_envelope(classical_basis):
    xs = np.geomspace(1.0, 1e8, 200)
    product = LambdaProduct(classical_basis, 1e8)
    assert np.all(product.log(xs).real <= lambda_envelope_log(1.0, xs) + 1e-12)


def test_lambda_product_out_of_range_and_budget(classical_basis):
    product = LambdaProduct(classical_basis, 10.0)
    with pytest.raises(PrecisionError):
        product.log([100.0])
    with pytest.raises(PrecisionError):
        LambdaProduct(classical_basis, 1e8, zero_budget=10)


def test_lambda_prime_half_order_closed_form(classical_basis):
    sign, log_mag = lambda_prime_log(classical_basis, 1)
    assert sign == 1
    assert log_mag == pytest.approx(math.log(math.sinh(math.pi) / (4.0 * math.pi ** 5)), rel=1e-12)
    assert lambda_prime_log(classical_basis, 2)[0] == -1


def test_lambda_prime_matches_product(classical_basis):
    product = LambdaProduct(classical_basis, 2.0 * classical_basis.modes[-1].lam_sq)
    for k in range(1, 5):
        sign, log_mag = lambda_prime_log(classical_basis, k)
        closed = complex(log_mag, math.pi / 2.0 if sign > 0 else -math.pi / 2.0)
        assert abs(np.exp(product.log_derivative_at_root(k) - closed) - 1.0) < 1e-9


def test_lambda_prime_matches_central_difference(classical_basis):
    product = LambdaProduct(classical_basis, 1e3)
    z0 = 1j * classical_basis.modes[0].lam_sq
    h = 1e-2
    numeric = (np.exp(product.log([z0 + h])[0]) - np.exp(product.log([z0 - h])[0])) / (2.0 * h)
    sign, log_mag = lambda_prime_log(classical_basis, 1)
    assert numeric == pytest.approx(1j * sign * math.exp(log_mag), rel=1e-6)


def test_interpolation_property(classical_basis, mp_half, bump):
    product = LambdaProduct(classical_basis, 2.0 * classical_basis.modes[-1].lam_sq)
    for k in range(1, 5):
        points = [1j * classical_basis.mode(l).lam_sq for l in range(1, 5)]
        values = interpolant(classical_basis, mp_half, k, points, product, bump)
        expected = np.eye(4)[k - 1]
        np.testing.assert_allclose(values, expected, atol=1e-8)


def test_interpolant_real_axis_consistency(classical_basis, mp_half, bump):
    product = LambdaProduct(classical_basis, 1e4)
    xs = np.array([-30.0, 1.0, 250.0])
    np.testing.assert_allclose(f_k_on_real_axis(classical_basis, mp_half, 1, xs, product, bump),
                               interpolant(classical_basis, mp_half, 1, xs, product, bump), rtol=1e-9, atol=1e-15)


def test_f_k_l1_bound(classical_basis, mp_half, bump):
    product = LambdaProduct(classical_basis, 1e6)
    c = max(bump.fitted_constant(), 1.0)
    for k in (1, 2):
        assert f_k_l1_log(classical_basis, mp_half, k, product, bump, c) <= f_bound_log(classical_basis, mp_half, k)


def test_bound_constant_is_positive(mp_half):
    assert math.isfinite(bound_constant_log(mp_half, 1.0)) and bound_constant_log(mp_half, 1.0) > 0.0


def test_fourier_radius_reports_shortfall(classical_basis, mp_half, bump):
    product = LambdaProduct(classical_basis, 1e6)
    with pytest.raises(TruncationError) as info:
        fourier_radius(classical_basis, mp_half, 1, product, bump, r_max=20.0)
    assert info.value.achieved > 0.0


def test_short_horizon_family(short_family):
    assert short_family.passed
    assert short_family.resolved[0, 0] and short_family.resolved[0, 1]
    assert short_family.defect[0, 0] < 1e-6
    assert short_family.defect[0, 1] < 1e-6
    assert max(p.imag_ratio for p in short_family.psis) < 1e-8


def test_long_horizon_family(long_family, classical_basis):
    family = long_family
    assert family.passed
    assert family.defect[0, 0] < 1e-6 and family.defect[0, 1] < 1e-6
    mp_ = family.multiplier
    for psi in family.psis:
        support = np.abs(family.grid - family.T / 2.0) > mp_.a * (1.0 + 1e-9)
        assert np.all(psi.mantissa[support] == 0.0)
        if family.resolved[psi.k - 1, psi.k - 1]:
            sup_log = math.log(np.max(np.abs(psi.mantissa))) + psi.log_scale
            assert sup_log <= psi_bound_log(classical_basis, mp_, psi.k, family.T)


def test_unit_horizon_classifies_unresolved_entries(classical_basis):
    family = build_family(classical_basis, T=1.0, K=2, time_samples=2048)
    assert family.resolved[0, 0]
    assert not family.resolved[1, 1]
    assert family.defect[0, 0] < 1e-6
    assert not np.any(np.isnan(family.defect))
    assert math.isfinite(family.defect[0, 1])
    assert family.defect[0, 1] <= max(family.tol, family.floor[0, 1])


def test_equal_one_family(equal_one_setup):
    _, family = equal_one_setup
    assert family.passed
    assert family.defect[0, 0] < 1e-6


def test_sub_one_family(sub_one_setup):
    _, family = sub_one_setup
    assert family.passed
    assert family.defect[0, 0] < 1e-6


def test_h_function_matches_bump_integral(mp_half, bump):
    zs = np.array([2.0 + 3.0j, -15.0 + 0.5j])
    np.testing.assert_allclose(h_function(mp_half, zs), bump.h_complex(zs), rtol=1e-13)
    np.testing.assert_allclose(h_function(mp_half, zs, bump), bump.h_complex(zs), rtol=0.0)


def test_moments_past_the_support_stay_finite(classical_basis, long_family):
    family = long_family
    assert not np.any(np.isnan(family.defect))
    assert np.all(family.defect[family.resolved] <= family.tol)
    # relative to its peak on the support, exp(-lambda_3^2 (T - t)) overflows near t = T
    lam_sq = classical_basis.mode(3).lam_sq
    assert lam_sq * (family.T / 2.0 - family.multiplier.a) > 709.0
    sign, log_mag = moment_log(family.psi(1), family.grid, family.T, lam_sq)
    assert not math.isnan(sign) and not math.isnan(log_mag)
    assert log_mag < 0.0
    sign, log_mag = moment_log(family.psi(1), family.grid, family.T, classical_basis.mode(1).lam_sq)
    assert sign == 1.0 and log_mag == pytest.approx(0.0, abs=1e-6)
