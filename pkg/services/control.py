"""Boundary null control built from the biorthogonal family, and the modal
coefficients of the controlled trajectory."""
import logging
import math
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import simpson

from exceptions import ConfigError, ParameterDomainError
from models import BiorthogonalFamily, ControlSignal, DerivedParams, ModalBasis, TrajectoryReport

logger = logging.getLogger(__name__)

TRUNCATION_RATIO = 1e-3


def _mode_log_factor(basis: ModalBasis, k: int, r: int) -> float:
    """log(lambda_k^(1-r) * trace_k)."""
    m = basis.mode(k)
    return (1 - r) * math.log(m.lam) + m.trace_log


def choose_truncation(a: Sequence[float], basis: ModalBasis, T: float, r: int, cap: int,
                      ratio: float = TRUNCATION_RATIO) -> int:
    """Smallest K whose discarded weight falls below ratio times the leading weight."""
    a = np.asarray(a, dtype=float)
    n = min(a.size, basis.K)
    cap = max(1, min(cap, n))
    lam_sq = basis.lam_sq[:n]
    with np.errstate(divide="ignore"):
        log_w = np.log(np.abs(a[:n])) - lam_sq * T - 0.5 * (1 - r) * np.log(lam_sq) - basis.trace_logs[:n]
    if not np.any(np.isfinite(log_w)):
        return 1

    for K in range(1, cap + 1):
        if K == n:
            return K
        leading = np.max(log_w[:K])
        tail_norm = float(np.sqrt(np.sum(a[K:n] ** 2)))
        if tail_norm == 0.0:
            return K
        log_tail = math.log(tail_norm) - lam_sq[K] * T - _mode_log_factor(basis, K + 1, r)
        if leading > -math.inf and log_tail < math.log(ratio) + leading:
            return K
    logger.warning(f"Control series truncation capped at K={cap} before the tail met the {ratio:g} criterion")
    return cap


def _simpson_norms(grid: np.ndarray, mantissa: np.ndarray) -> Tuple[float, float]:
    return (
        math.sqrt(max(float(simpson(mantissa ** 2, x=grid)), 0.0)),
        float(simpson(np.abs(mantissa), x=grid)),
    )


def synthesize_control(
    a: Sequence[float],
    basis: ModalBasis,
    family: BiorthogonalFamily,
    dp: DerivedParams,
    r: int,
    K: Optional[int] = None,
) -> ControlSignal:
    """f(t) = sum_k (-1)^ell a_k exp(-lambda_k^2 T) psi_k(t) / (lambda_k^(1-r) trace_k)."""
    a = np.asarray(a, dtype=float)
    T = family.T
    if K is None:
        K = choose_truncation(a, basis, T, r, cap=family.K)
    elif K > family.K:
        raise ConfigError(f"control needs psi_1..psi_{K} but the family holds {family.K}")
    K = min(K, a.size)

    sign_ell = -1.0 if dp.ell == 1 else 1.0
    logs, signs = [], []
    for k in range(1, K + 1):
        psi = family.psi(k)
        m = basis.mode(k)
        if not m.trace_const > 0.0:
            raise ParameterDomainError(f"trace constant of mode {k} vanishes")
        if a[k - 1] == 0.0:
            logs.append(-math.inf)
            signs.append(0.0)
            continue
        logs.append(math.log(abs(a[k - 1])) - m.lam_sq * T - _mode_log_factor(basis, k, r) + psi.log_scale)
        signs.append(sign_ell * math.copysign(1.0, a[k - 1]))

    grid = family.grid
    log_scale = max(logs, default=-math.inf)
    mantissa = np.zeros(grid.size)
    if log_scale > -math.inf:
        for k, (w_log, sign) in enumerate(zip(logs, signs), start=1):
            if sign:
                mantissa += sign * math.exp(w_log - log_scale) * family.psi(k).mantissa

    scale = math.exp(log_scale) if log_scale > -math.inf else 0.0
    l2_m, l1_m = _simpson_norms(grid, mantissa)
    l2, l1 = l2_m * scale, l1_m * scale

    tail = 0.0
    for k in range(K + 1, min(a.size, basis.K) + 1):
        m = basis.mode(k)
        control_part = math.exp(min(_mode_log_factor(basis, k, r) - m.lam_sq * (T / 2.0 - family.multiplier.a), 700.0)) * l1
        tail = max(tail, math.exp(-m.lam_sq * T) * abs(a[k - 1]) + control_part)

    logger.info(f"Synthesized control from {K} modes: ||f||_L2={l2:.6e}, tail bound {tail:.3e}")
    return ControlSignal(grid=grid, mantissa=mantissa, log_scale=log_scale, l2_norm=l2, l1_norm=l1, K_used=K,
                         tail_bound=tail, weight_logs=tuple(logs), weight_signs=tuple(signs))


def control_l2_norm(f: ControlSignal) -> float:
    if f.log_scale == -math.inf:
        return 0.0
    return _simpson_norms(f.grid, f.mantissa)[0] * math.exp(f.log_scale)


def _check_grid(f: ControlSignal) -> None:
    grid = f.grid
    if grid.ndim != 1 or grid.size != f.mantissa.size or grid.size < 3:
        raise ConfigError("control grid and samples disagree")
    if grid[0] != 0.0 or np.any(np.diff(grid) <= 0.0):
        raise ConfigError("control grid must start at 0 and increase")


def _duhamel_log(f: ControlSignal, lam_sq: float, tau: float) -> Tuple[float, float]:
    """(sign, log|.|) of int_0^tau f(t) exp(lam_sq (t - tau)) dt."""
    grid = f.grid
    inside = grid < tau
    t = np.append(grid[inside], tau)
    m = np.append(f.mantissa[inside], np.interp(tau, grid, f.mantissa))
    if not np.any(m):
        return 0.0, -math.inf
    exponent = lam_sq * (t - tau)
    nonzero = m != 0.0
    peak = float(np.max(exponent[nonzero]))
    # exp only where f is nonzero; past the support exponent - peak can overflow
    weights = np.zeros_like(exponent)
    weights[nonzero] = np.exp(np.minimum(exponent[nonzero] - peak, 0.0))
    value = float(simpson(m * weights, x=t))
    if value == 0.0:
        return 0.0, -math.inf
    return math.copysign(1.0, value), math.log(abs(value)) + peak + f.log_scale


def trajectory_coeffs(
    a: Sequence[float],
    f: ControlSignal,
    basis: ModalBasis,
    dp: DerivedParams,
    r: int,
    tau: float,
    u0_norm: Optional[float] = None,
) -> TrajectoryReport:
    """<u(tau), Phi_k> = exp(-lambda_k^2 tau) a_k + (-1)^(1-ell) lambda_k^(1-r) trace_k int_0^tau f exp(lambda_k^2 (t - tau))."""
    _check_grid(f)
    T = float(f.grid[-1])
    if not 0.0 < tau <= T * (1.0 + 1e-14):
        raise ParameterDomainError(f"tau must lie in (0, {T}], got {tau}")
    tau = min(tau, T)
    a = np.asarray(a, dtype=float)
    if a.size > basis.K:
        raise ConfigError(f"{a.size} coefficients given for a basis of {basis.K} modes")

    sign_ell = 1.0 if dp.ell == 1 else -1.0
    coeffs, free = [], []
    for k in range(1, a.size + 1):
        m = basis.mode(k)
        decay = math.exp(-m.lam_sq * tau) * a[k - 1]
        sign, log_int = _duhamel_log(f, m.lam_sq, tau)
        log_ctrl = log_int + _mode_log_factor(basis, k, r)
        control = sign * math.exp(log_ctrl) if log_ctrl < 709.0 else sign * math.inf
        coeffs.append(decay + sign_ell * control)
        free.append(decay)

    residual = float(np.linalg.norm(coeffs))
    free_norm = float(np.linalg.norm(free))
    report = TrajectoryReport(
        tau=tau, coeffs=coeffs, free_coeffs=free, residual_norm=residual, free_norm=free_norm,
        u0_norm=float(np.linalg.norm(a)) if u0_norm is None else u0_norm, tail_bound=f.tail_bound,
    )
    logger.debug(f"State at tau={tau:.6g}: residual {residual:.3e}, uncontrolled {free_norm:.3e}")
    return report


def final_state(
    a: Sequence[float],
    f: ControlSignal,
    basis: ModalBasis,
    dp: DerivedParams,
    r: int,
    u0_norm: Optional[float] = None,
) -> TrajectoryReport:
    return trajectory_coeffs(a, f, basis, dp, r, float(f.grid[-1]), u0_norm)
