"""Upper and lower bounds on the cost of null controllability, in log space."""
import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from config import Config
from exceptions import ConfigError, ParameterDomainError
from models import CostInputs, CostReport, DerivedParams, LogScaled, ProblemParams, ZeroTable
from services.specfun import bessel_j_prime, bessel_zeros, log_gamma

logger = logging.getLogger(__name__)

SQRT_2_PLUS_SQRT_2 = math.sqrt(2.0 + math.sqrt(2.0))
LOWER_RATE = 1.0 - math.log(5.0) / math.pi - math.atan(2.0) / math.pi


def _zeros(dp: DerivedParams, zeros: Optional[ZeroTable]) -> Tuple[float, float]:
    if zeros is None or zeros.K < 2 or zeros.nu != dp.nu:
        zeros = bessel_zeros(dp.nu, 2)
    return zeros.zeros[0], zeros.zeros[1]


def cost_inputs(p: ProblemParams, dp: DerivedParams, delta: float = Config.DELTA,
                zeros: Optional[ZeroTable] = None) -> CostInputs:
    j1, j2 = _zeros(dp, zeros)
    return CostInputs(T=p.T, alpha=p.alpha, beta=p.beta, mu=p.mu, r=p.r, delta=delta,
                      j1=j1, j2=j2, nu=dp.nu, kappa=dp.kappa)


def log_m_factor(T: float, kappa: float, j1: float, delta: float) -> float:
    """log M(T, alpha, nu, delta) of the upper bound."""
    first = math.log1p(1.0 / ((1.0 - delta) * kappa ** 2 * T))
    bracket = float(np.logaddexp(
        SQRT_2_PLUS_SQRT_2 / (math.sqrt(2.0) * kappa),
        -3.0 * math.log(delta) + 3.0 * SQRT_2_PLUS_SQRT_2 / ((1.0 - delta) * kappa ** 2 * T),
    ))
    decay = (1.0 - delta) ** 1.5 * T ** 1.5 * kappa ** 5 * j1 ** 4 / (8.0 * SQRT_2_PLUS_SQRT_2 * math.sqrt(1.0 + T))
    return first + bracket - decay


def upper_bound(p: ProblemParams, dp: DerivedParams, delta: float = Config.DELTA, c: float = Config.C_UPPER,
                zeros: Optional[ZeroTable] = None) -> LogScaled:
    if not 0.0 < delta < 1.0:
        raise ParameterDomainError(f"delta must lie in (0, 1), got {delta}")
    if c <= 0.0:
        raise ParameterDomainError(f"constant c must be positive, got {c}")
    j1, _ = _zeros(dp, zeros)
    kappa, T = dp.kappa, p.T
    log_value = (
        math.log(c)
        + log_m_factor(T, kappa, j1, delta)
        + 0.5 * math.log(T)
        - (4.5 - 2.0 * p.r) * math.log(kappa)
        - math.log(dp.trace_denominator)
        - 0.5 * T * kappa ** 4 * j1 ** 4
    )
    return LogScaled.from_log(log_value)


def log_h_factor(p: ProblemParams, dp: DerivedParams, zeros: Optional[ZeroTable] = None) -> float:
    """log h(alpha, beta, mu, T), the factor dividing the cost in the lower-bound argument."""
    j1, _ = _zeros(dp, zeros)
    nu = dp.nu
    return (
        0.5 * math.log(2.0 * p.T * dp.kappa ** (5.0 - 4.0 * p.r))
        + math.log(dp.trace_denominator)
        + (nu + 2.0 - 2.0 * p.r) * math.log(j1)
        - nu * math.log(2.0)
        - log_gamma(nu + 1.0)
        - math.log(abs(bessel_j_prime(nu, j1)))
    )


def lower_bound(p: ProblemParams, dp: DerivedParams, c: float = Config.C_LOWER,
                zeros: Optional[ZeroTable] = None) -> LogScaled:
    if c <= 0.0:
        raise ParameterDomainError(f"constant c must be positive, got {c}")
    j1, j2 = _zeros(dp, zeros)
    log_value = (
        math.log(c)
        + 2.0 * LOWER_RATE * j2
        - (j1 ** 4 + 2.0 * j2 ** 4) * dp.kappa ** 4 * p.T
        - log_h_factor(p, dp, zeros)
    )
    return LogScaled.from_log(log_value)


def lower_bound_chain(p: ProblemParams, dp: DerivedParams, shift: float,
                      zeros: Optional[ZeroTable] = None) -> float:
    """Left-hand side of the final lower-bound estimate as a function of the shift.

    At shift = 2 kappa^4 j_2^4 it reduces to 2 (1 - log 5/pi - atan 2/pi) j_2 - (j_1^4 + 2 j_2^4) kappa^4 T.
    """
    if shift <= 0.0:
        raise ParameterDomainError(f"shift must be positive, got {shift}")
    j1, j2 = _zeros(dp, zeros)
    kappa = dp.kappa
    q8 = (8.0 * shift) ** 0.25
    q2 = (2.0 * shift) ** 0.25
    kj = kappa * j2
    ratio = (kj ** 2 - q8 * kj + math.sqrt(2.0 * shift)) / (kj ** 2 + q8 * kj + math.sqrt(2.0 * shift))
    return (
        q8 / kappa
        - j2 / math.pi * math.log1p(2.0 * shift / kj ** 4)
        + q2 / (math.sqrt(2.0) * math.pi * kappa) * math.log(ratio)
        + q8 / (math.pi * kappa) * (math.atan(1.0 - math.sqrt(2.0) * kj / q2) - math.atan(1.0 + math.sqrt(2.0) * kj / q2))
        - (kappa ** 4 * j1 ** 4 + shift) * p.T
    )


def best_shift(p: ProblemParams, dp: DerivedParams, c: float = Config.C_LOWER,
               zeros: Optional[ZeroTable] = None) -> Tuple[float, float]:
    """Shift maximizing the lower-bound chain, and the resulting log lower bound."""
    _, j2 = _zeros(dp, zeros)
    anchor = math.log(2.0 * dp.kappa ** 4 * j2 ** 4)
    result = minimize_scalar(
        lambda u: -lower_bound_chain(p, dp, math.exp(u), zeros),
        bounds=(anchor - 30.0, anchor + 10.0), method="bounded", options={"xatol": 1e-10},
    )
    shift = math.exp(result.x)
    # bounded search is local; never report less than the closed-form shift gives
    if lower_bound_chain(p, dp, shift, zeros) < lower_bound_chain(p, dp, math.exp(anchor), zeros):
        shift = math.exp(anchor)
    log_lower = math.log(c) + lower_bound_chain(p, dp, shift, zeros) - log_h_factor(p, dp, zeros)
    return shift, log_lower


def cost_compare(
    upper_inputs: CostInputs,
    lower_inputs: CostInputs,
    upper: LogScaled,
    lower: LogScaled,
    achieved: float,
    u0_norm: float = 1.0,
    c_upper: float = Config.C_UPPER,
    c_lower: float = Config.C_LOWER,
    safety_factor: float = Config.SAFETY_FACTOR,
    shift: Optional[Tuple[float, float]] = None,
) -> CostReport:
    if upper_inputs.model_dump(exclude={"delta"}) != lower_inputs.model_dump(exclude={"delta"}):
        raise ConfigError("upper and lower bounds were computed for different parameters")
    if achieved < 0.0 or not math.isfinite(achieved):
        raise ConfigError(f"achieved control norm must be finite and nonnegative, got {achieved}")

    log_ratio = None
    exceeds = False
    if achieved > 0.0 and u0_norm > 0.0:
        log_ratio = math.log(achieved / u0_norm) - upper.log
        exceeds = log_ratio > math.log(safety_factor)
        if exceeds:
            logger.warning(f"Achieved ||f||/||u0|| exceeds the upper bound by exp({log_ratio:.4g})")

    return CostReport(
        upper=upper, lower=lower, achieved_norm=achieved, inputs=upper_inputs,
        c_upper=c_upper, c_lower=c_lower, safety_factor=safety_factor, exceeds_upper=exceeds,
        log_ratio=log_ratio,
        best_shift=shift[0] if shift else None, best_lower_log=shift[1] if shift else None,
    )
