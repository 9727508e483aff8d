"""Problem parameters, the weighted eigenbasis and operations on modal coefficients."""
import logging
import math
from concurrent.futures import Executor
from typing import Callable, Literal, Optional, Sequence, Tuple

import numpy as np
import scipy.special as sp

from config import Config
from exceptions import IntegrationError, ParameterDomainError
from models import DerivedParams, ModalBasis, Mode, ProblemParams, QuadratureRule, Regime, RhoConstants
from services.quadrature import graded_rule
from services.specfun import bessel_j_derivatives, bessel_j_prime, bessel_zeros, log_abs_bessel_j, log_gamma

logger = logging.getLogger(__name__)

EQUAL_ONE_TOL = 1e-12
RESIDUAL_WINDOW = (0.05, 0.95)

Function = Callable[[np.ndarray], np.ndarray]


# --- parameters -------------------------------------------------------------------

def mu_critical(delta: float) -> float:
    return (1.0 - delta) ** 2 / 4.0


def derive_params(p: ProblemParams) -> DerivedParams:
    s = p.weight_sum
    kappa = (2.0 - p.alpha) / 2.0

    if abs(s - 1.0) <= EQUAL_ONE_TOL:
        if p.mu >= 0.0:
            raise ParameterDomainError(
                f"alpha+beta = 1 requires mu < 0, got mu={p.mu}"
            )
        root = math.sqrt(-p.mu)
        return DerivedParams(
            ell=0, gamma=(1.0 - s) / 2.0 - root, kappa=kappa, nu=root / kappa,
            regime=Regime.EQUAL_ONE, mu_crit=0.0,
        )

    mu_crit = mu_critical(s)
    if p.mu >= mu_crit:
        raise ParameterDomainError(
            f"mu must satisfy mu < (1-alpha-beta)^2/4 = {mu_crit:.17g}, got mu={p.mu}"
        )
    root = math.sqrt(mu_crit - p.mu)
    ell = 0 if s < 1.0 else 1
    return DerivedParams(
        ell=ell, gamma=(1.0 - s) / 2.0 - root, kappa=kappa, nu=root / kappa,
        regime=Regime.SUB_ONE if ell == 0 else Regime.SUPER_ONE, mu_crit=mu_crit,
    )


def rho_constants(p: ProblemParams) -> RhoConstants:
    a, b, mu = p.alpha, p.beta, p.mu
    first = (a + b) * (a - 1.0) + 2.0 * mu
    return RhoConstants(
        rho1=4.0 * a + 2.0 * b,
        rho2=(2.0 * a + b) * (2.0 * a + b - 1.0) + first,
        rho3=first * (2.0 * a + b - 2.0),
        rho4=mu * ((a - 2.0) * (2.0 * a + b - 3.0) + mu),
    )


def _power(d: DerivedParams) -> float:
    """Exponent (1-alpha-beta)/2 of the eigenfunction prefactor."""
    return d.gamma + d.kappa * d.nu


# --- modes ------------------------------------------------------------------------

def trace_log(zero: float, jprime_abs: float, d: DerivedParams) -> float:
    nu = d.nu
    return (
        0.5 * math.log(2.0 * d.kappa)
        + math.log(d.trace_denominator)
        + nu * math.log(zero)
        - nu * math.log(2.0)
        - log_gamma(nu + 1.0)
        - math.log(jprime_abs)
    )


def _make_mode(args: Tuple[int, float, float, DerivedParams]) -> Mode:
    k, zero, jprime_abs, d = args
    lam = d.kappa ** 2 * zero ** 2
    t_log = trace_log(zero, jprime_abs, d)
    return Mode(
        k=k, zero=zero, lam=lam, lam_sq=lam * lam, jprime_abs=jprime_abs,
        trace_const=math.exp(t_log) if t_log < 709.0 else math.inf, trace_log=t_log,
    )


def basis_rule(p: ProblemParams, d: DerivedParams, top_zero: float, tol: float = Config.QUAD_TOL) -> QuadratureRule:
    # x^beta Phi_j Phi_k ~ x^(1 - alpha + 2 kappa nu) near 0
    exponent = 1.0 - p.alpha + 2.0 * d.kappa * d.nu
    return graded_rule(exponent, phase_rate=2.0 * top_zero, kappa=d.kappa, tol=tol)


def build_basis(
    p: ProblemParams,
    K: int = Config.K_MODES,
    tol: float = Config.QUAD_TOL,
    executor: Optional[Executor] = None,
) -> ModalBasis:
    d = derive_params(p)
    table = bessel_zeros(d.nu, K)
    zeros = table.as_array()
    jprime = np.abs(bessel_j_prime(d.nu, zeros))

    jobs = [(k, float(z), float(jp), d) for k, (z, jp) in enumerate(zip(zeros, jprime), start=1)]
    modes = tuple(executor.map(_make_mode, jobs)) if executor else tuple(map(_make_mode, jobs))

    logger.info(f"Built {K} modes ({d.regime.value}, nu={d.nu:.6g}, kappa={d.kappa:.6g}, lambda_1^2={modes[0].lam_sq:.6g})")
    return ModalBasis(params=p, derived=d, modes=modes, zeros=table, quad=basis_rule(p, d, zeros[-1], tol))


# --- eigenfunctions ---------------------------------------------------------------

def _check_unit_interval(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0) or np.any(x > 1.0) or np.any(np.isnan(x)):
        raise ParameterDomainError("eigenfunctions are defined for x in (0, 1]")
    return x


def eigenfunction(m: Mode, d: DerivedParams, x):
    """Phi_k(x) = (2 kappa)^(1/2) / |J'_nu(j)| x^((1-alpha-beta)/2) J_nu(j x^kappa)."""
    arr = _check_unit_interval(x)
    log_j, sign = log_abs_bessel_j(d.nu, m.zero * arr ** d.kappa)
    log_amp = 0.5 * math.log(2.0 * d.kappa) - math.log(m.jprime_abs)
    values = sign * np.exp(log_amp + _power(d) * np.log(arr) + log_j)
    return float(values) if np.ndim(x) == 0 else values


def eigenfunction_matrix(basis: ModalBasis, x: np.ndarray, K: Optional[int] = None) -> np.ndarray:
    modes = basis.modes[: K or basis.K]
    return np.stack([eigenfunction(m, basis.derived, x) for m in modes])


def _falling(c: float, n: int) -> float:
    out = 1.0
    for i in range(n):
        out *= c - i
    return out


def eigenfunction_derivatives(m: Mode, d: DerivedParams, x: np.ndarray, order: int = 4) -> np.ndarray:
    """Rows n = 0..order of d^n Phi_k / dx^n, exact up to special-function accuracy.

    Leibniz on x^p * g(x) with g = J_nu(j x^kappa) differentiated by Faa di Bruno.
    """
    if not 0 <= order <= 4:
        raise ParameterDomainError("derivative order must be between 0 and 4")
    x = _check_unit_interval(np.atleast_1d(x))
    p, kappa = _power(d), d.kappa
    y = m.zero * x ** kappa
    J = bessel_j_derivatives(d.nu, y, order)
    dy = [y] + [m.zero * _falling(kappa, n) * x ** (kappa - n) for n in range(1, 5)]

    g = [J[0]]
    if order >= 1:
        g.append(J[1] * dy[1])
    if order >= 2:
        g.append(J[2] * dy[1] ** 2 + J[1] * dy[2])
    if order >= 3:
        g.append(J[3] * dy[1] ** 3 + 3.0 * J[2] * dy[1] * dy[2] + J[1] * dy[3])
    if order >= 4:
        g.append(
            J[4] * dy[1] ** 4 + 6.0 * J[3] * dy[1] ** 2 * dy[2]
            + J[2] * (3.0 * dy[2] ** 2 + 4.0 * dy[1] * dy[3]) + J[1] * dy[4]
        )

    amp = math.sqrt(2.0 * kappa) / m.jprime_abs
    q = [_falling(p, i) * x ** (p - i) for i in range(order + 1)]
    rows = [amp * sum(sp.comb(n, i) * q[n - i] * g[i] for i in range(n + 1)) for n in range(order + 1)]
    return np.stack(rows)


def generalized_limit_samples(m: Mode, d: DerivedParams, x: np.ndarray) -> np.ndarray:
    """x^(alpha+beta+gamma-ell) * Phi_k^(1-ell)(x), whose x -> 0 limit is the boundary trace."""
    weight_sum = 1.0 - 2.0 * _power(d)
    derivative = eigenfunction_derivatives(m, d, x, order=1)[1 - d.ell]
    return np.asarray(x, dtype=float) ** (weight_sum + d.gamma - d.ell) * derivative


def boundary_trace(m: Mode, d: DerivedParams) -> float:
    return math.exp(trace_log(m.zero, m.jprime_abs, d))


# --- inner products -----------------------------------------------------------------

def _integrate_checked(integrand: Function, quad: QuadratureRule, what: str) -> float:
    coarse = quad.integrate(integrand(quad.nodes))
    if quad.fine_nodes is None:
        return coarse
    fine = float(np.dot(quad.fine_weights, integrand(quad.fine_nodes)))
    if not (math.isfinite(coarse) and math.isfinite(fine)):
        raise IntegrationError(f"{what}: non-finite quadrature value")
    if abs(coarse - fine) > math.sqrt(quad.tol) * max(1.0, abs(fine)):
        raise IntegrationError(f"{what}: refinement diverges ({coarse:.6g} vs {fine:.6g})")
    return fine


def weighted_inner_product(f: Function, g: Function, beta: float, quad: QuadratureRule) -> float:
    return _integrate_checked(lambda x: f(x) * g(x) * x ** beta, quad, "weighted inner product")


def weighted_norm(u: Function, beta: float, quad: QuadratureRule) -> float:
    return math.sqrt(max(weighted_inner_product(u, u, beta, quad), 0.0))


def gram_matrix(basis: ModalBasis, K: Optional[int] = None) -> np.ndarray:
    x, w = basis.quad.nodes, basis.quad.weights
    phi = eigenfunction_matrix(basis, x, K)
    return (phi * (w * x ** basis.params.beta)) @ phi.T


def project_initial_data(u0: Function, basis: ModalBasis) -> np.ndarray:
    beta = basis.params.beta
    coeffs = []
    for m in basis.modes:
        coeffs.append(weighted_inner_product(u0, lambda x, m=m: eigenfunction(m, basis.derived, x), beta, basis.quad))
    coeffs = np.asarray(coeffs)

    norm_sq = weighted_inner_product(u0, u0, beta, basis.quad)
    if float(np.sum(coeffs ** 2)) > norm_sq * (1.0 + 1e-6) + 1e-300:
        logger.warning(f"Parseval partial sum {np.sum(coeffs ** 2):.6g} exceeds ||u0||^2 = {norm_sq:.6g}")
    return coeffs


def parseval_defect(u0: Function, a: np.ndarray, basis: ModalBasis) -> float:
    """||u0||^2 - sum a_k^2, nonnegative up to quadrature error."""
    return weighted_inner_product(u0, u0, basis.params.beta, basis.quad) - float(np.sum(np.asarray(a) ** 2))


def semigroup_coeffs(a: Sequence[float], basis: ModalBasis, t: float) -> np.ndarray:
    if t < 0.0:
        raise ParameterDomainError(f"semigroup time must be nonnegative, got {t}")
    a = np.asarray(a, dtype=float)
    return np.exp(-basis.lam_sq[: a.size] * t) * a


def interp_norm(
    a: Sequence[float],
    basis: ModalBasis,
    s: float,
    convention: Literal["operator", "generator"] = "operator",
) -> float:
    """Norm of the interpolation scale: sum lambda_k^(-2s) a_k^2 ("operator"),
    or with lambda_k^2 in place of lambda_k ("generator")."""
    a = np.asarray(a, dtype=float)
    lam = np.array([m.lam for m in basis.modes[: a.size]])
    if convention == "generator":
        lam = lam ** 2
    elif convention != "operator":
        raise ParameterDomainError(f"unknown norm convention '{convention}'")
    return float(math.sqrt(np.sum(lam ** (-2.0 * s) * a ** 2)))


# --- operator checks ------------------------------------------------------------------

def _stencil_weights(order: int, half_width: int = 5) -> np.ndarray:
    offsets = np.arange(-half_width, half_width + 1, dtype=float)
    powers = np.arange(offsets.size)
    vander = offsets[None, :] ** powers[:, None] / sp.factorial(powers)[:, None]
    rhs = np.zeros(offsets.size)
    rhs[order] = 1.0
    return np.linalg.solve(vander, rhs)


def _fd_derivatives(m: Mode, d: DerivedParams, grid: np.ndarray, h: float) -> np.ndarray:
    offsets = np.arange(-5, 6, dtype=float)
    samples = eigenfunction(m, d, grid[None, :] + h * offsets[:, None])
    rows = [eigenfunction(m, d, grid)]
    for n in range(1, 5):
        rows.append(_stencil_weights(n) @ samples / h ** n)
    return np.stack(rows)


def apply_A2_residual(
    m: Mode,
    d: DerivedParams,
    rho: RhoConstants,
    grid: np.ndarray,
    method: Literal["analytic", "fd"] = "analytic",
    h: float = 1e-2,
) -> float:
    """max |A^2 Phi_k - lambda_k^2 Phi_k| / (lambda_k^2 max |Phi_k|) over the grid."""
    grid = np.asarray(grid, dtype=float)
    lo, hi = RESIDUAL_WINDOW
    if np.any(grid < lo) or np.any(grid > hi):
        raise ParameterDomainError(f"residual grid must lie in [{lo}, {hi}]")

    if method == "analytic":
        D = eigenfunction_derivatives(m, d, grid, order=4)
    elif method == "fd":
        if grid.min() - 5.0 * h <= 0.0 or grid.max() + 5.0 * h > 1.0:
            raise ParameterDomainError(f"step h={h} pushes the stencil outside (0, 1]")
        D = _fd_derivatives(m, d, grid, h)
    else:
        raise ParameterDomainError(f"unknown residual method '{method}'")

    alpha = 2.0 - 2.0 * d.kappa
    r1, r2, r3, r4 = rho.as_tuple()
    x = grid
    a2 = (
        x ** (2 * alpha) * D[4] + r1 * x ** (2 * alpha - 1) * D[3] + r2 * x ** (2 * alpha - 2) * D[2]
        + r3 * x ** (2 * alpha - 3) * D[1] + r4 * x ** (2 * alpha - 4) * D[0]
    )
    return float(np.max(np.abs(a2 - m.lam_sq * D[0])) / (m.lam_sq * np.max(np.abs(D[0]))))


def verify_hardy_poincare(
    u: Function,
    du: Function,
    p: ProblemParams,
    quad: Optional[QuadratureRule] = None,
) -> Tuple[float, float, float, float]:
    """Both sides of the generalized Hardy and weighted Poincare inequalities."""
    d = derive_params(p)
    s = p.weight_sum
    quad = quad or graded_rule(-0.5)

    gradient = _integrate_checked(lambda x: x ** s * du(x) ** 2, quad, "Hardy/Poincare gradient term")
    lhs_hardy = d.mu_crit * _integrate_checked(lambda x: u(x) ** 2 * x ** (s - 2.0), quad, "Hardy term")
    lhs_poincare = _integrate_checked(lambda x: u(x) ** 2 * x ** p.beta, quad, "Poincare term")
    if d.regime == Regime.EQUAL_ONE:
        rhs_poincare = math.inf
    else:
        rhs_poincare = gradient / ((2.0 - p.alpha) * abs(1.0 - s))
    return lhs_hardy, gradient, lhs_poincare, rhs_poincare
