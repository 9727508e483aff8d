"""Real-order Gamma and Bessel functions, Bessel zeros and their certification.

Evaluation is delegated to ``scipy.special`` (Cephes/Amos), which already
switches between power series, asymptotic expansions and recurrences with
uniform accuracy. This module adds domain checks, log-scaled forms for the
quantities that overflow, and a bracketed zero finder.
"""
import logging
import math
from typing import Dict, List, Tuple, Union

import numpy as np
import scipy.special as sp
from scipy.special import logsumexp

from exceptions import ConvergenceError, ParameterDomainError
from models import ZeroTable

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

_SCAN_STEP = 0.5  # smaller than half the minimal gap between zeros of J_nu, nu >= 0
_MAX_NEWTON = 50


def _as_output(value: np.ndarray, like: ArrayLike) -> ArrayLike:
    return float(value) if np.ndim(like) == 0 else value


def check_order(nu: float) -> float:
    if not (math.isfinite(nu) and nu >= 0.0):
        raise ParameterDomainError(f"Bessel order must be finite and nonnegative, got {nu}")
    return float(nu)


# --- Gamma --------------------------------------------------------------------

def gamma_fn(x: ArrayLike) -> ArrayLike:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ParameterDomainError(f"gamma_fn requires finite x > 0, got {x}")
    return _as_output(sp.gamma(arr), x)


def log_gamma(x: ArrayLike) -> ArrayLike:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ParameterDomainError(f"log_gamma requires finite x > 0, got {x}")
    return _as_output(sp.gammaln(arr), x)


# --- Bessel J -------------------------------------------------------------------

def bessel_j(nu: float, x: ArrayLike) -> ArrayLike:
    nu = check_order(nu)
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0.0) or np.any(np.isnan(arr)):
        raise ParameterDomainError("bessel_j requires x >= 0")
    return _as_output(sp.jv(nu, arr), x)


def bessel_j_prime(nu: float, x: ArrayLike) -> ArrayLike:
    """J'_nu(x) = (nu/x) J_nu(x) - J_{nu+1}(x)."""
    nu = check_order(nu)
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0.0) or np.any(np.isnan(arr)):
        raise ParameterDomainError("bessel_j_prime requires x > 0")
    return _as_output(nu / arr * sp.jv(nu, arr) - sp.jv(nu + 1.0, arr), x)


def bessel_j_derivatives(nu: float, y: np.ndarray, order: int) -> np.ndarray:
    """Rows n = 0..order of d^n J_nu / dy^n evaluated at y > 0."""
    y = np.asarray(y, dtype=float)
    return np.stack([sp.jv(nu, y) if n == 0 else sp.jvp(nu, y, n) for n in range(order + 1)])


def log_abs_bessel_j(nu: float, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(log|J_nu(y)|, sign J_nu(y)), with the small-argument limit where jv underflows."""
    y = np.asarray(y, dtype=float)
    values = sp.jv(nu, y)
    with np.errstate(divide="ignore"):
        log_abs = np.log(np.abs(values))
    sign = np.sign(values)
    underflow = (values == 0.0) & (y > 0.0) & (y < 1.0 + nu)
    if np.any(underflow):
        log_abs = np.where(underflow, nu * np.log(np.where(underflow, y, 1.0) / 2.0) - sp.gammaln(nu + 1.0), log_abs)
        sign = np.where(underflow, 1.0, sign)
    return log_abs, sign


def large_order_ratio(nu: float, x: float) -> float:
    """J_nu(x) divided by its large-order form (e x / 2 nu)^nu / sqrt(2 pi nu)."""
    nu = check_order(nu)
    if nu == 0.0 or x <= 0.0:
        raise ParameterDomainError("large_order_ratio needs nu > 0 and x > 0")
    log_j, sign = log_abs_bessel_j(nu, np.array([x]))
    log_form = nu * math.log(math.e * x / (2.0 * nu)) - 0.5 * math.log(2.0 * math.pi * nu)
    return float(sign[0] * math.exp(log_j[0] - log_form))


# --- modified Bessel I ------------------------------------------------------------

def _log_bessel_i_series(nu: float, x: float) -> float:
    n_terms = int(x + 10.0 * math.sqrt(x + 1.0) + 60)
    m = np.arange(n_terms, dtype=float)
    log_terms = (2.0 * m + nu) * math.log(x / 2.0) - sp.gammaln(m + 1.0) - sp.gammaln(m + nu + 1.0)
    return float(logsumexp(log_terms))


def bessel_i_scaled(nu: float, x: float) -> Tuple[float, float]:
    """I_nu(x) as (mantissa, log_scale) with I_nu(x) = mantissa * exp(log_scale)."""
    nu = check_order(nu)
    if not (x >= 0.0) or not math.isfinite(x):
        raise ParameterDomainError(f"bessel_i_scaled requires finite x >= 0, got {x}")
    if x == 0.0:
        return (1.0 if nu == 0.0 else 0.0), 0.0
    mantissa = float(sp.ive(nu, x))
    if mantissa > 0.0 and math.isfinite(mantissa) and mantissa > 1e-290:
        return mantissa, float(x)
    logger.debug(f"ive({nu}, {x}) underflowed, using log-accumulated series")
    return 1.0, _log_bessel_i_series(nu, x)


def log_bessel_i(nu: float, x: float) -> float:
    mantissa, log_scale = bessel_i_scaled(nu, x)
    if mantissa == 0.0:
        return -math.inf
    return math.log(mantissa) + log_scale


# --- zeros ------------------------------------------------------------------------

def mcmahon_zero(nu: float, k: int) -> float:
    """McMahon's large-k expansion of the k-th positive zero of J_nu."""
    b = (k + nu / 2.0 - 0.25) * math.pi
    m = 4.0 * nu * nu
    return (
        b
        - (m - 1.0) / (8.0 * b)
        - 4.0 * (m - 1.0) * (7.0 * m - 31.0) / (3.0 * (8.0 * b) ** 3)
        - 32.0 * (m - 1.0) * (83.0 * m * m - 982.0 * m + 3779.0) / (15.0 * (8.0 * b) ** 5)
    )


def _sign_change_brackets(nu: float, K: int) -> List[Tuple[float, float]]:
    start = nu if nu > 0.0 else 0.0
    stop = (K + nu / 2.0 + 1.0) * math.pi + nu + 10.0
    brackets: List[Tuple[float, float]] = []
    while len(brackets) < K:
        grid = np.arange(start, stop + _SCAN_STEP, _SCAN_STEP)
        negative = np.signbit(sp.jv(nu, grid))
        idx = np.nonzero(negative[1:] != negative[:-1])[0]
        brackets.extend((float(grid[i]), float(grid[i + 1])) for i in idx)
        start, stop = float(grid[-1]), float(grid[-1]) + (K - len(brackets) + 2) * math.pi
    return brackets[:K]


def _refine_zero(nu: float, k: int, lo: float, hi: float) -> float:
    f_lo = sp.jv(nu, lo)
    if f_lo == 0.0:
        return lo
    guess = mcmahon_zero(nu, k)
    x = guess if lo < guess < hi else 0.5 * (lo + hi)

    for _ in range(_MAX_NEWTON):
        fx = sp.jv(nu, x)
        if fx == 0.0:
            return x
        if math.copysign(1.0, fx) == math.copysign(1.0, f_lo):
            lo, f_lo = x, fx
        else:
            hi = x

        slope = nu / x * fx - sp.jv(nu + 1.0, x)
        x_new = x - fx / slope if slope != 0.0 else 0.5 * (lo + hi)
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 4.0 * np.finfo(float).eps * x or hi - lo <= 4.0 * np.finfo(float).eps * x:
            return x_new
        x = x_new

    raise ConvergenceError(f"zero refinement for J_{nu} did not converge at k={k}", k=k)


def bessel_zeros(nu: float, K: int) -> ZeroTable:
    """First K positive zeros of J_nu.

    Brackets come from a sign scan of J_nu (valid for every k, unlike
    McMahon brackets when k is small relative to nu); each bracket is
    refined by Newton's method seeded with McMahon's expansion, falling
    back to bisection whenever a step leaves the bracket.
    """
    nu = check_order(nu)
    if K < 1:
        raise ParameterDomainError(f"need at least one zero, got K={K}")
    zeros = [_refine_zero(nu, k, lo, hi) for k, (lo, hi) in enumerate(_sign_change_brackets(nu, K), start=1)]
    return ZeroTable(nu=nu, zeros=tuple(zeros))


def extend_zeros(table: ZeroTable, K: int) -> ZeroTable:
    if K <= table.K:
        return table
    return bessel_zeros(table.nu, K)


def certify_zeros(table: ZeroTable, gap_depth: int = 60) -> Dict[str, bool]:
    """Check the tabulated zeros against the classical bounds on their location."""
    nu = table.nu
    j = table.as_array()
    k = np.arange(1, table.K + 1)

    checks: Dict[str, bool] = {"increasing": bool(np.all(np.diff(j) > 0.0))}
    checks["above_order"] = bool(j[0] > nu) if nu > 0.0 else True
    if nu <= 0.5:
        checks["lower_bound"] = bool(np.all(j >= (k - 0.25) * math.pi * (1.0 - 1e-14)))
    else:
        checks["lower_bound"] = bool(np.all(j >= (k - 0.125) * math.pi * (1.0 - 1e-14)))
    checks["first_zero_window"] = bool(math.sqrt(nu * (nu + 2.0)) < j[0] < math.sqrt(2.0 * (nu + 1.0) * (nu + 3.0)))
    if nu > 1.0:
        checks["first_zero_large_order"] = bool(nu < j[0] < math.sqrt(15.0) * nu + 1.0 / math.sqrt(nu))

    left = sp.jv(nu, j - 1e-6)
    right = sp.jv(nu, j + 1e-6)
    checks["sign_change"] = bool(np.all(left * right < 0.0))

    gaps = np.diff(j[: gap_depth + 1])
    if gaps.size >= 2 and abs(nu - 0.5) > 1e-3:
        if nu > 0.5:
            checks["gap_monotone"] = bool(np.all(np.diff(gaps) < 0.0) and np.all(gaps > math.pi))
        else:
            checks["gap_monotone"] = bool(np.all(np.diff(gaps) > 0.0) and np.all(gaps < math.pi))

    failed = [name for name, ok in checks.items() if not ok]
    if failed:
        logger.warning(f"Zero table for nu={nu} failed checks: {', '.join(failed)}")
    return checks
