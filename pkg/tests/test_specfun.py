import math

import mpmath
import numpy as np
import pytest

from exceptions import ParameterDomainError
from services.specfun import (
    bessel_i_scaled,
    bessel_j,
    bessel_j_derivatives,
    bessel_j_prime,
    bessel_zeros,
    certify_zeros,
    extend_zeros,
    gamma_fn,
    large_order_ratio,
    log_abs_bessel_j,
    log_bessel_i,
    log_gamma,
    mcmahon_zero,
)


@pytest.mark.parametrize("x", [0.5, 1.5, 3.7, 10.0, 40.25])
def test_gamma_matches_mpmath(x):
    assert gamma_fn(x) == pytest.approx(float(mpmath.gamma(x)), rel=1e-13)
    assert log_gamma(x) == pytest.approx(float(mpmath.loggamma(x)), rel=1e-13, abs=1e-14)


def test_log_gamma_large_argument_stays_finite():
    assert log_gamma(1e5) == pytest.approx(float(mpmath.loggamma(1e5)), rel=1e-13)


@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_gamma_rejects_outside_domain(bad):
    with pytest.raises(ParameterDomainError):
        log_gamma(bad)


@pytest.mark.parametrize("nu,x", [(0.0, 1.0), (0.5, 2.5), (1.0, 7.0), (2.3, 0.4), (12.0, 20.0)])
def test_bessel_j_matches_mpmath(nu, x):
    assert bessel_j(nu, x) == pytest.approx(float(mpmath.besselj(nu, x)), rel=1e-12, abs=1e-15)
    assert bessel_j_prime(nu, x) == pytest.approx(float(mpmath.besselj(nu, x, derivative=1)), rel=1e-11, abs=1e-14)


def test_half_order_bessel_is_elementary():
    x = np.linspace(0.1, 20.0, 50)
    expected = np.sqrt(2.0 / (math.pi * x)) * np.sin(x)
    np.testing.assert_allclose(bessel_j(0.5, x), expected, rtol=1e-12, atol=1e-15)


def test_negative_order_rejected():
    with pytest.raises(ParameterDomainError):
        bessel_j(-0.5, 1.0)


def test_log_abs_bessel_small_argument_limit():
    log_abs, sign = log_abs_bessel_j(300.0, np.array([1e-3]))
    expected = 300.0 * math.log(5e-4) - float(mpmath.loggamma(301.0))
    assert sign[0] == 1.0
    assert log_abs[0] == pytest.approx(expected, rel=1e-12)


def test_large_order_ratio_tends_to_one():
    # J_nu(x) ~ (e x / 2 nu)^nu / sqrt(2 pi nu) for fixed x as nu grows
    assert abs(large_order_ratio(200.0, 1.0) - 1.0) < 1e-2
    assert abs(large_order_ratio(800.0, 1.0) - 1.0) < abs(large_order_ratio(200.0, 1.0) - 1.0)


@pytest.mark.parametrize("nu,x", [(0.5, 1000.0), (1.0, 3.8), (3.7, 50.0), (0.0, 12.0)])
def test_log_bessel_i_matches_mpmath(nu, x):
    assert log_bessel_i(nu, x) == pytest.approx(float(mpmath.log(mpmath.besseli(nu, x))), rel=1e-12)


def test_bessel_i_series_fallback_for_underflow():
    mantissa, log_scale = bessel_i_scaled(200.0, 1.0)
    assert mantissa == 1.0
    assert log_scale == pytest.approx(float(mpmath.log(mpmath.besseli(200, 1))), rel=1e-12)


def test_half_order_zeros_are_multiples_of_pi():
    table = bessel_zeros(0.5, 10)
    np.testing.assert_allclose(table.as_array(), math.pi * np.arange(1, 11), rtol=1e-12)


def test_first_zero_of_j0_matches_bisection_oracle():
    oracle = mpmath.findroot(lambda x: mpmath.besselj(0, x), (2.0, 3.0), solver="bisect")
    assert bessel_zeros(0.0, 1).zeros[0] == pytest.approx(float(oracle), rel=1e-12)


@pytest.mark.parametrize("nu", [0.0, 0.3, 1.0, 2.2360679774997896, 3.7, 12.0])
def test_zeros_match_mpmath(nu):
    table = bessel_zeros(nu, 12)
    expected = [float(mpmath.besseljzero(nu, k)) for k in range(1, 13)]
    np.testing.assert_allclose(table.as_array(), expected, rtol=1e-12)


def test_mcmahon_expansion_is_accurate_for_large_k():
    assert mcmahon_zero(0.0, 50) == pytest.approx(float(mpmath.besseljzero(0, 50)), rel=1e-12)


def test_extend_zeros_keeps_prefix():
    short = bessel_zeros(1.0, 5)
    longer = extend_zeros(short, 9)
    assert longer.K == 9
    np.testing.assert_allclose(longer.as_array()[:5], short.as_array(), rtol=1e-14)
    assert extend_zeros(longer, 3) is longer


@pytest.mark.parametrize("nu", [0.0, 0.25, 0.5, 1.0, 3.7, 12.0])
def test_zero_tables_pass_certification(nu):
    checks = certify_zeros(bessel_zeros(nu, 40))
    assert all(checks.values()), checks
    if nu > 1.0:
        assert "first_zero_large_order" in checks
    if abs(nu - 0.5) > 1e-3:
        assert "gap_monotone" in checks


def test_zero_count_must_be_positive():
    with pytest.raises(ParameterDomainError):
        bessel_zeros(1.0, 0)


@pytest.mark.parametrize("nu", [0.0, 0.5, 1.7, 3.7])
def test_bessel_j_satisfies_bessel_equation(nu):
    x = np.linspace(1.0, 50.0, 400)
    j, dj, d2j = bessel_j_derivatives(nu, x, 2)
    residual = x ** 2 * d2j + x * dj + (x ** 2 - nu ** 2) * j
    assert np.max(np.abs(residual) / (x ** 2 + nu ** 2)) < 1e-8


@pytest.mark.parametrize("nu", [0.0, 0.5, 2.0, 7.3])
def test_bessel_i_dominates_leading_series_term(nu):
    for x in np.geomspace(1e-3, 500.0, 60):
        leading = nu * math.log(x / 2.0) - log_gamma(nu + 1.0)
        assert log_bessel_i(nu, float(x)) >= leading - 1e-12


@pytest.mark.parametrize("nu", [0.0, 1.0, 3.7])
def test_derivative_at_zeros_approaches_asymptotic_amplitude(nu):
    j = bessel_zeros(nu, 200).as_array()
    amplitude = np.sqrt(j) * np.abs(bessel_j_prime(nu, j))
    assert np.all(np.abs(amplitude[-10:] - math.sqrt(2.0 / math.pi)) < 1e-3)


def test_bessel_i_scaled_order_two_at_fifty():
    mantissa, log_scale = bessel_i_scaled(2.0, 50.0)
    assert log_scale == 50.0
    expected = mpmath.log(mpmath.besseli(2, 50))
    assert math.log(mantissa) + log_scale == pytest.approx(float(expected), rel=1e-13)
    assert mantissa == pytest.approx(float(mpmath.besseli(2, 50) * mpmath.exp(-50)), rel=1e-13)
