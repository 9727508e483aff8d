"""Biorthogonal family to exp(-lambda_k^2 (T - t)) on [0, T].

psi_k is the inverse Fourier transform of F_k = Psi_k * H / H(i lambda_k^2),
where Psi_k interpolates through the Weierstrass product Lambda (zeros at
i lambda_l^2) and H is the Fourier transform of a smooth bump of width a.
Everything that grows like exp(lambda_k^2 T) is carried as a separate
log scale; sampled functions are stored as mantissas.
"""
import logging
import math
from concurrent.futures import Executor
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.special as sp
from scipy.integrate import simpson
from scipy.optimize import brentq
from scipy.special import logsumexp

from config import Config
from exceptions import ParameterDomainError, PrecisionError, TruncationError
from models import BiorthogonalFamily, ModalBasis, MultiplierParams, PsiSample
from services.quadrature import uniform_rule
from services.specfun import bessel_zeros, log_bessel_i, log_gamma

logger = logging.getLogger(__name__)

SQRT_2_PLUS_SQRT_2 = math.sqrt(2.0 + math.sqrt(2.0))

_WINDOW_DROP = 45.0
_EDGE = 1e-12
_H_NOISE = 1e-15
_PRODUCT_TOL = 1e-13
_CHUNK = 256


def multiplier_params(T: float, kappa: float, delta: float = Config.DELTA) -> MultiplierParams:
    if not 0.0 < delta < 1.0:
        raise ParameterDomainError(f"delta must lie in (0, 1), got {delta}")
    if T <= 0.0:
        raise ParameterDomainError(f"T must be positive, got {T}")
    return MultiplierParams(
        delta=delta,
        a=T * (1.0 - delta) / 2.0,
        theta=(2.0 + math.sqrt(2.0)) * (1.0 + delta) ** 2 / (kappa ** 2 * T * (1.0 - delta)),
    )


def sigma_bump(theta: float, t):
    arr = np.asarray(t, dtype=float)
    inside = np.abs(arr) < 1.0
    safe = np.where(inside, arr, 0.0)
    values = np.where(inside, np.exp(-theta / ((1.0 - safe) * (1.0 + safe))), 0.0)
    return float(values) if np.ndim(t) == 0 else values


# --- the multiplier H -------------------------------------------------------------

class BumpIntegral:
    """H(z) = C * int sigma_theta(t) exp(-i a t z) dt with C = 1 / int sigma_theta.

    The integrand is log-concave along the imaginary direction, so each
    evaluation integrates only over the window where it lies within
    exp(-45) of its peak.
    """

    def __init__(self, mp: MultiplierParams, panels: int = Config.BUMP_PANELS, nodes: int = Config.QUAD_NODES):
        self.mp = mp
        self.panels = panels
        self.nodes = nodes
        self.log_norm = self._log_integral(0.0)

    def _phi(self, t: np.ndarray, y: float) -> np.ndarray:
        return -self.mp.theta / ((1.0 - t) * (1.0 + t)) + self.mp.a * y * t

    def _window(self, y: float) -> Tuple[float, float, float]:
        theta, a = self.mp.theta, self.mp.a
        lo_edge, hi_edge = -1.0 + _EDGE, 1.0 - _EDGE
        if y == 0.0:
            t_star = 0.0
        else:
            slope = lambda t: -2.0 * theta * t / ((1.0 - t) * (1.0 + t)) ** 2 + a * y
            t_star = brentq(slope, lo_edge, hi_edge, xtol=1e-15)
        peak = float(self._phi(np.array(t_star), y))
        level = lambda t: float(self._phi(np.array(t), y)) - (peak - _WINDOW_DROP)
        lo = brentq(level, lo_edge, t_star) if level(lo_edge) < 0.0 else lo_edge
        hi = brentq(level, t_star, hi_edge) if level(hi_edge) < 0.0 else hi_edge
        return lo, hi, peak

    def _rule(self, y: float, phase_rate: float) -> Tuple[np.ndarray, np.ndarray, float]:
        lo, hi, peak = self._window(y)
        panels = max(self.panels, int(math.ceil(phase_rate * (hi - lo) / 2.0)))
        t, w = uniform_rule(lo, hi, panels, self.nodes)
        return t, w, peak

    def _log_integral(self, y: float) -> float:
        t, w, _ = self._rule(y, 0.0)
        return float(logsumexp(self._phi(t, y), b=w))

    def log_h_imag(self, y):
        """log H(iy) for real y; H(iy) = H(-iy) > 0."""
        arr = np.atleast_1d(np.abs(np.asarray(y, dtype=float)))
        values = np.array([self._log_integral(v) - self.log_norm for v in arr])
        return float(values[0]) if np.ndim(y) == 0 else values

    def h_real(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.size == 0:
            return x.copy()
        t, w, _ = self._rule(0.0, self.mp.a * float(np.max(np.abs(x))))
        weights = w * np.exp(self._phi(t, 0.0) - self.log_norm)
        out = np.empty(x.size)
        for start in range(0, x.size, 2048):
            block = x[start:start + 2048]
            out[start:start + 2048] = np.cos(self.mp.a * block[:, None] * t[None, :]) @ weights
        return out

    def h_complex(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        out = np.empty(z.size, dtype=complex)
        for i, zi in enumerate(z):
            y, x = zi.imag, zi.real
            t, w, peak = self._rule(y, self.mp.a * abs(x))
            terms = np.exp(self._phi(t, y) - peak - 1j * self.mp.a * t * x)
            out[i] = math.exp(peak - self.log_norm) * np.dot(w, terms)
        return out

    def log_decay_envelope(self, x, c: float = 1.0) -> np.ndarray:
        """log of the bound c sqrt(theta+1) sqrt(a theta |x|) exp(3 theta/4 - sqrt(a theta |x|)), |x| > 1."""
        x = np.abs(np.asarray(x, dtype=float))
        at = self.mp.a * self.mp.theta
        root = np.sqrt(at * x)
        return math.log(c) + 0.5 * math.log(self.mp.theta + 1.0) + np.log(root) + 0.75 * self.mp.theta - root

    def fitted_constant(self, x_max: float = Config.FOURIER_R_MAX, points: int = 400) -> float:
        """Smallest c making the decay bound hold on a log grid where the bound exceeds 1e-12."""
        xs = np.geomspace(1.001, x_max, points)
        log_env = self.log_decay_envelope(xs)
        mask = log_env > math.log(1e-12)
        if not mask.any():
            return 0.0
        xs, log_env = xs[mask], log_env[mask]
        ratio = np.abs(self.h_real(xs)) / np.exp(log_env)
        return float(np.max(ratio))


def h_function(mp: MultiplierParams, z, bump: Optional[BumpIntegral] = None) -> np.ndarray:
    """H_{a,theta}(z) for complex z; pass a prebuilt BumpIntegral to reuse its normalization."""
    return (bump or BumpIntegral(mp)).h_complex(z)


# --- the Weierstrass product Lambda --------------------------------------------------

class LambdaProduct:
    """log Lambda(z) = sum_l log(1 + i z / lambda_l^2), truncated at depth N.

    The remainder uses j_l ~ (l + nu/2 - 1/4) pi - (4 nu^2 - 1) / (8 (l + nu/2 - 1/4) pi)
    summed in closed form with Hurwitz zeta values.
    """

    def __init__(self, basis: ModalBasis, x_max: float, tol: float = _PRODUCT_TOL,
                 zero_budget: int = Config.ZERO_BUDGET):
        d = basis.derived
        self.kappa, self.nu = d.kappa, d.nu
        self.mu4 = 4.0 * d.nu ** 2
        self.x_max = max(float(x_max), 1.0)
        self.tol = tol
        self.N = self._depth(basis.K, zero_budget)

        roots = basis.lam_sq
        if self.N > basis.K:
            extra = bessel_zeros(self.nu, self.N).as_array()[basis.K:]
            roots = np.concatenate([roots, (self.kappa ** 2 * extra ** 2) ** 2])
        self.roots = roots[: self.N]
        self.q = self.N + 1.0 + self.nu / 2.0 - 0.25
        logger.debug(f"Lambda product depth N={self.N} for |z| <= {self.x_max:.3g}")

    def _depth(self, K: int, zero_budget: int) -> int:
        N = K
        k4 = self.kappa ** 4
        while N <= zero_budget:
            q = N + 1.0 + self.nu / 2.0 - 0.25
            ratio = self.x_max / (k4 * (math.pi * q) ** 4)
            remainder = self.x_max * (1.0 + self.mu4 ** 2) * sp.zeta(8.0, q) / (math.pi ** 8 * k4)
            if ratio <= 0.1 and remainder <= self.tol:
                return N
            N = max(N + 1, int(N * 1.25))
        raise PrecisionError(f"product tail for |z| <= {self.x_max:.3g} needs more than {zero_budget} zeros")

    def _tail(self, z: np.ndarray) -> np.ndarray:
        k4, q = self.kappa ** 4, self.q
        w = 1j * z
        s1 = (sp.zeta(4.0, q) / math.pi ** 4 + 0.5 * (self.mu4 - 1.0) * sp.zeta(6.0, q) / math.pi ** 6) / k4
        total = w * s1
        for m in range(2, 80):
            s_m = sp.zeta(4.0 * m, q) / (math.pi ** 4 * k4) ** m
            term = (-1) ** (m + 1) * w ** m * s_m / m
            total = total + term
            if np.max(np.abs(term), initial=0.0) < 1e-18:
                break
        return total

    def _check_range(self, z: np.ndarray) -> None:
        if z.size and np.max(np.abs(z)) > self.x_max * (1.0 + 1e-9):
            raise PrecisionError(f"|z| = {np.max(np.abs(z)):.3g} exceeds the product range {self.x_max:.3g}")

    def log(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        self._check_range(z)
        out = np.empty(z.size, dtype=complex)
        with np.errstate(divide="ignore"):
            for start in range(0, z.size, 1024):
                block = z[start:start + 1024]
                out[start:start + 1024] = np.log(1.0 + 1j * block[:, None] / self.roots[None, :]).sum(axis=1)
        return out + self._tail(z)

    def log_derivative_at_root(self, k: int) -> complex:
        """log Lambda'(i lambda_k^2) from the truncated product."""
        lam_sq = self.roots[k - 1]
        z = np.array([1j * lam_sq])
        self._check_range(z)
        others = np.delete(self.roots, k - 1)
        return complex(np.log(1j / lam_sq) + np.log((1.0 - lam_sq / others).astype(complex)).sum() + self._tail(z)[0])


def log_lambda_product(basis: ModalBasis, x, tol: float = _PRODUCT_TOL) -> np.ndarray:
    x = np.asarray(x)
    product = LambdaProduct(basis, float(np.max(np.abs(x), initial=1.0)), tol)
    values = product.log(x)
    return complex(values[0]) if np.ndim(x) == 0 else values


def lambda_envelope_log(kappa: float, x) -> np.ndarray:
    """log of sqrt(2+sqrt 2) |x|^(1/4) / (sqrt 2 kappa), the growth bound of |Lambda| on the real line."""
    return SQRT_2_PLUS_SQRT_2 * np.abs(np.asarray(x, dtype=float)) ** 0.25 / (math.sqrt(2.0) * kappa)


def lambda_prime_log(basis: ModalBasis, k: int) -> Tuple[int, float]:
    """Lambda'(i lambda_k^2) = i * sign * exp(log_mag), with

    |Lambda'| = Gamma(nu+1)^2 4^(nu-1) |J'_nu(j)| I_nu(j) / (kappa^4 j^(2 nu + 3)).
    """
    m = basis.mode(k)
    nu, kappa = basis.derived.nu, basis.derived.kappa
    log_mag = (
        2.0 * log_gamma(nu + 1.0)
        + (nu - 1.0) * math.log(4.0)
        - 4.0 * math.log(kappa)
        - (2.0 * nu + 3.0) * math.log(m.zero)
        + math.log(m.jprime_abs)
        + log_bessel_i(nu, m.zero)
    )
    return (1 if k % 2 == 1 else -1), log_mag


def _log_lambda_prime_complex(basis: ModalBasis, k: int) -> complex:
    sign, log_mag = lambda_prime_log(basis, k)
    return complex(log_mag, math.pi / 2.0 if sign > 0 else -math.pi / 2.0)


# --- interpolants F_k ------------------------------------------------------------------

def interpolant(basis: ModalBasis, mp: MultiplierParams, k: int, z, product: LambdaProduct,
                bump: BumpIntegral) -> np.ndarray:
    """F_k(z) for complex z; the removable point z = i lambda_k^2 uses Lambda'(product) / Lambda'(closed form)."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    lam_sq = basis.mode(k).lam_sq
    log_lp = _log_lambda_prime_complex(basis, k)
    log_hk = bump.log_h_imag(lam_sq)
    out = np.empty(z.size, dtype=complex)

    for i, zi in enumerate(z):
        if abs(zi - 1j * lam_sq) <= 1e-12 * lam_sq:
            out[i] = np.exp(product.log_derivative_at_root(k) - log_lp)
            continue
        log_psi = product.log(np.array([zi]))[0] - np.log(zi - 1j * lam_sq) - log_lp
        if zi.real == 0.0:
            out[i] = np.exp(log_psi + bump.log_h_imag(zi.imag) - log_hk)
        else:
            out[i] = np.exp(log_psi - log_hk) * bump.h_complex(zi)[0]
    return out


def f_k_on_real_axis(basis: ModalBasis, mp: MultiplierParams, k: int, x,
                     product: Optional[LambdaProduct] = None, bump: Optional[BumpIntegral] = None) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    product = product or LambdaProduct(basis, float(np.max(np.abs(x), initial=1.0)))
    bump = bump or BumpIntegral(mp)
    lam_sq = basis.mode(k).lam_sq
    log_scale = _log_lambda_prime_complex(basis, k) + bump.log_h_imag(lam_sq)
    log_psi = product.log(x) - np.log(x - 1j * lam_sq) - log_scale
    if np.max(log_psi.real, initial=-np.inf) > 700.0:
        raise PrecisionError(f"F_{k} overflows on the sampled real axis")
    return np.exp(log_psi) * bump.h_real(x)


def bound_constant_log(mp: MultiplierParams, kappa: float, c: float = 1.0) -> float:
    """log C(T, alpha, delta) of the L1 bound on F_k."""
    root = math.sqrt(mp.theta + 1.0)
    first = SQRT_2_PLUS_SQRT_2 / (math.sqrt(2.0) * kappa)
    second = math.log(root * kappa ** 2 / mp.delta ** 3) + 0.75 * mp.theta
    return math.log(c) + math.log(root) + float(np.logaddexp(first, second))


def f_bound_log(basis: ModalBasis, mp: MultiplierParams, k: int, c: float = 1.0) -> float:
    lam_sq = basis.mode(k).lam_sq
    _, log_lp = lambda_prime_log(basis, k)
    return (bound_constant_log(mp, basis.derived.kappa, c) - math.log(lam_sq) - log_lp
            - mp.a * lam_sq / (2.0 * math.sqrt(mp.theta + 1.0)))


def psi_bound_log(basis: ModalBasis, mp: MultiplierParams, k: int, T: float, c: float = 1.0) -> float:
    return f_bound_log(basis, mp, k, c) + basis.mode(k).lam_sq * T / 2.0


# --- inverse Fourier transform -------------------------------------------------------

def fourier_radius(basis: ModalBasis, mp: MultiplierParams, k: int, product: LambdaProduct,
                   bump: BumpIntegral, c_env: float = 1.0, tol: float = Config.FOURIER_TOL,
                   r_max: float = Config.FOURIER_R_MAX) -> Tuple[float, float]:
    """Radius R beyond which the envelope of |F_k| stays below tol * |F_k(0)|, and the log envelope at R."""
    lam_sq = basis.mode(k).lam_sq
    radii = np.geomspace(1.0, r_max, 600)
    log_h = np.minimum(0.0, bump.log_decay_envelope(radii, max(c_env, 1.0)))
    log_env = product.log(radii).real - np.log(np.abs(radii - 1j * lam_sq)) + log_h
    threshold = math.log(tol) - math.log(lam_sq)

    above = np.nonzero(log_env >= threshold)[0]
    if above.size and above[-1] == radii.size - 1:
        achieved = math.exp(min(log_env[-1] - threshold + math.log(tol), 700.0))
        raise TruncationError(f"F_{k} envelope still {achieved:.3g} (relative) at R_max={r_max:.3g}", achieved=achieved)
    idx = above[-1] + 1 if above.size else 0
    return float(radii[idx]), float(log_env[idx])


def psi_k(basis: ModalBasis, mp: MultiplierParams, k: int, grid: np.ndarray, T: float,
          product: LambdaProduct, bump: BumpIntegral, c_env: float = 1.0,
          tol: float = Config.FOURIER_TOL, r_max: float = Config.FOURIER_R_MAX) -> PsiSample:
    """psi_k(t) = exp(lambda_k^2 T / 2) (1/2 pi) int exp(i (t - T/2) tau) F_k(tau) dtau on the grid."""
    lam_sq = basis.mode(k).lam_sq
    radius, log_env_r = fourier_radius(basis, mp, k, product, bump, c_env, tol, r_max)

    a_osc = T / 2.0 + mp.a
    panels = max(1, int(math.ceil(radius * 4.0 * a_osc / math.pi)))
    tau, w = uniform_rule(0.0, radius, panels)

    unit = 1j if lambda_prime_log(basis, k)[0] > 0 else -1j
    h_tau = bump.h_real(tau)
    lam_pos = np.exp(product.log(tau)) / (unit * (tau - 1j * lam_sq))
    lam_neg = np.exp(product.log(-tau)) / (unit * (-tau - 1j * lam_sq))
    pos = w * lam_pos * h_tau
    neg = w * lam_neg * h_tau

    s = grid - T / 2.0
    support = np.nonzero(np.abs(s) <= mp.a * (1.0 + 1e-12))[0]
    values = np.zeros(grid.size, dtype=complex)
    for start in range(0, support.size, _CHUNK):
        idx = support[start:start + _CHUNK]
        phase = np.exp(1j * s[idx, None] * tau[None, :])
        values[idx] = (phase @ pos + np.conj(phase) @ neg) / (2.0 * math.pi)

    real_peak = float(np.max(np.abs(values.real), initial=0.0))
    imag_ratio = float(np.max(np.abs(values.imag), initial=0.0)) / real_peak if real_peak > 0 else math.inf

    tail = math.exp(log_env_r) * 4.0 * math.sqrt(radius / (mp.a * mp.theta)) / (2.0 * math.pi)
    noise = _H_NOISE * float(np.sum(w * (np.abs(lam_pos) + np.abs(lam_neg)))) / (2.0 * math.pi) + tail

    _, log_lp = lambda_prime_log(basis, k)
    log_scale = lam_sq * T / 2.0 - bump.log_h_imag(lam_sq) - log_lp
    logger.debug(f"psi_{k}: R={radius:.4g}, {tau.size} nodes, imag ratio {imag_ratio:.2e}, noise {noise:.2e}")
    return PsiSample(k=k, mantissa=values.real.copy(), log_scale=log_scale, radius=radius,
                     nodes=tau.size, imag_ratio=imag_ratio, noise=noise)


def f_k_l1_log(basis: ModalBasis, mp: MultiplierParams, k: int, product: LambdaProduct,
               bump: BumpIntegral, c_env: float = 1.0, tol: float = Config.FOURIER_TOL) -> float:
    """log ||F_k||_{L1(R)} by quadrature over [-R, R] (|F_k| is even on the real line)."""
    lam_sq = basis.mode(k).lam_sq
    radius, _ = fourier_radius(basis, mp, k, product, bump, c_env, tol)
    tau, w = uniform_rule(0.0, radius, max(64, int(math.ceil(radius * mp.a))))
    magnitude = np.abs(np.exp(product.log(tau)) / (tau - 1j * lam_sq) * bump.h_real(tau))
    _, log_lp = lambda_prime_log(basis, k)
    return math.log(2.0 * float(np.dot(w, magnitude))) - log_lp - bump.log_h_imag(lam_sq)


# --- moments and the family --------------------------------------------------------------

def moment_log(psi: PsiSample, grid: np.ndarray, T: float, lam_sq: float) -> Tuple[float, float]:
    """(sign, log|.|) of int_0^T psi(t) exp(-lam_sq (T - t)) dt by composite Simpson."""
    exponent = -lam_sq * (T - grid)
    support = psi.mantissa != 0.0
    peak = float(np.max(exponent[support], initial=-np.inf))
    if peak == -np.inf:
        return 0.0, -math.inf
    # exponent - peak is only bounded above on the support of psi
    weights = np.zeros_like(exponent)
    weights[support] = np.exp(np.minimum(exponent[support] - peak, 0.0))
    value = simpson(psi.mantissa * weights, x=grid)
    if value == 0.0:
        return 0.0, -math.inf
    return math.copysign(1.0, value), math.log(abs(value)) + peak + psi.log_scale


def moment_floor_log(psi: PsiSample, T: float, a: float, lam_sq: float) -> float:
    """log of the expected roundoff in the moment of psi against exp(-lam_sq (T - t))."""
    span = math.log(-math.expm1(-2.0 * lam_sq * a) / lam_sq)
    return psi.log_scale - lam_sq * T / 2.0 + math.log(psi.noise) + lam_sq * a + span


def _defect_matrix(basis: ModalBasis, psis: Sequence[PsiSample], grid: np.ndarray, T: float,
                   a: float) -> Tuple[np.ndarray, np.ndarray]:
    K = len(psis)
    defect = np.empty((K, K))
    floor = np.empty((K, K))
    for i, psi in enumerate(psis):
        for j in range(K):
            lam_sq = basis.modes[j].lam_sq
            sign, log_val = moment_log(psi, grid, T, lam_sq)
            value = sign * math.exp(log_val) if log_val < 700.0 else math.inf
            defect[i, j] = abs(value - (1.0 if i == j else 0.0))
            log_floor = moment_floor_log(psi, T, a, lam_sq)
            floor[i, j] = math.exp(log_floor) if log_floor < 700.0 else math.inf
    return defect, floor


def build_family(
    basis: ModalBasis,
    T: float,
    delta: float = Config.DELTA,
    K: int = Config.FAMILY_MODES,
    time_samples: int = Config.TIME_SAMPLES,
    tol: float = Config.BIORTH_TOL,
    fourier_tol: float = Config.FOURIER_TOL,
    r_max: float = Config.FOURIER_R_MAX,
    executor: Optional[Executor] = None,
) -> BiorthogonalFamily:
    K = min(K, basis.K)
    mp = multiplier_params(T, basis.derived.kappa, delta)
    bump = BumpIntegral(mp)
    c_env = bump.fitted_constant(r_max)
    product = LambdaProduct(basis, max(r_max, 2.0 * basis.modes[K - 1].lam_sq))
    grid = np.linspace(0.0, T, time_samples + 1)
    logger.info(f"Building {K} biorthogonal functions: a={mp.a:.6g}, theta={mp.theta:.6g}, fitted c={c_env:.4g}")

    job = lambda k: psi_k(basis, mp, k, grid, T, product, bump, c_env, fourier_tol, r_max)
    ks = range(1, K + 1)
    psis = tuple(executor.map(job, ks)) if executor else tuple(map(job, ks))

    defect, floor = _defect_matrix(basis, psis, grid, T, mp.a)
    resolved = floor <= tol
    unresolved = int((~resolved).sum())
    if unresolved:
        logger.warning(f"{unresolved} of {K * K} biorthogonality entries are below double-precision resolution")
    family = BiorthogonalFamily(basis=basis, T=T, multiplier=mp, grid=grid, psis=psis, defect=defect,
                                floor=floor, resolved=resolved, tol=tol, h_constant=c_env)
    logger.info(f"Max resolved biorthogonality defect {family.max_resolved_defect:.3e} (pass={family.passed})")
    return family
