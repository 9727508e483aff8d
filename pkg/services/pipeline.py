"""Orchestration of the basis -> family -> control -> certificate -> cost chain."""
import asyncio
import logging
import math
from concurrent.futures import Executor, ThreadPoolExecutor
from functools import partial
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError
from scipy.interpolate import CubicSpline

from config import Config
from exceptions import ConfigError, DegenerateControlError, ParameterDomainError
from models import (
    BiorthogonalFamily, ControlSignal, CostReport, InitialDataConfig, ModalBasis, NumericsConfig,
    ProblemParams, RunConfig, SynthesisSummary, TrajectoryReport, VerifyReport,
)
from services import control, cost, moment, spectral
from services.export import control_rows, psi_rows, write_csv, write_json
from services.specfun import bessel_zeros, certify_zeros

logger = logging.getLogger(__name__)

SWEEP_HEADER = ["T", "alpha", "beta", "mu", "r", "delta", "log_upper", "log_lower", "log_achieved", "status"]
SWEEP_AXES = ("T", "alpha")
MODES_HEADER = ["k", "j_nu_k", "lambda_k", "lambda_k_sq", "jprime_abs", "trace_const", "trace_log"]
ORTHO_MODES = 20
ORTHO_TOL = 1e-8
RESIDUAL_MODES = 10
RESIDUAL_TOL = 1e-5
INTERP_TOL = 1e-8


class SynthesisRun(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    basis: ModalBasis
    family: BiorthogonalFamily
    coeffs: np.ndarray
    u0_norm: float
    signal: ControlSignal
    report: TrajectoryReport
    cost: CostReport


# --- initial data -------------------------------------------------------------------

def _read_samples(path: str) -> Tuple[np.ndarray, np.ndarray]:
    try:
        data = np.genfromtxt(path, delimiter=",")
    except OSError as e:
        raise ConfigError(f"cannot read initial data file {path}: {e}") from e
    data = np.atleast_2d(data)
    if data.shape[1] < 2:
        raise ConfigError(f"{path}: expected two columns x,u")
    data = data[~np.isnan(data[:, :2]).any(axis=1)]
    x, u = data[:, 0], data[:, 1]
    if x.size < 4 or np.any(np.diff(x) <= 0.0) or x[0] < 0.0 or x[-1] > 1.0:
        raise ConfigError(f"{path}: need at least 4 samples with x increasing inside [0, 1]")
    return x, u


def initial_coefficients(init: InitialDataConfig, basis: ModalBasis, family_modes: int) -> Tuple[np.ndarray, float]:
    """Modal coefficients of the configured initial state and its weighted norm."""
    preset = init.preset
    if preset == "zero":
        return np.zeros(basis.K), 0.0
    if preset.startswith("mode:"):
        k = int(preset[5:])
        if k > min(family_modes, basis.K):
            raise ConfigError(f"initial mode {k} exceeds the {family_modes} biorthogonal functions built")
        a = np.zeros(basis.K)
        a[k - 1] = init.scale
        return a, abs(init.scale)

    if preset == "poly:x(1-x)":
        u0 = lambda x: init.scale * x * (1.0 - x)
    else:
        x, u = _read_samples(preset[5:])
        spline = CubicSpline(x, u, extrapolate=True)
        u0 = lambda s: init.scale * spline(s)
    a = spectral.project_initial_data(u0, basis)
    return a, spectral.weighted_norm(u0, basis.params.beta, basis.quad)


# --- synthesis core ---------------------------------------------------------------------

def run_synthesis(
    p: ProblemParams,
    numerics: NumericsConfig,
    init: InitialDataConfig,
    executor: Optional[Executor] = None,
    on_stage: Callable[[str], None] = lambda stage: None,
) -> SynthesisRun:
    on_stage("basis")
    basis = spectral.build_basis(p, numerics.K_modes, numerics.quad_tol, executor)
    dp = basis.derived

    on_stage("initial_data")
    a, u0_norm = initial_coefficients(init, basis, numerics.family_modes)

    on_stage("family")
    family = moment.build_family(
        basis, p.T, numerics.delta, numerics.family_modes, numerics.time_samples,
        numerics.biorth_tol, numerics.fourier_tol, executor=executor,
    )

    on_stage("control")
    signal = control.synthesize_control(a, basis, family, dp, p.r)

    on_stage("trajectory")
    report = control.final_state(a, signal, basis, dp, p.r, u0_norm)

    on_stage("cost")
    inputs = cost.cost_inputs(p, dp, numerics.delta, basis.zeros)
    upper = cost.upper_bound(p, dp, numerics.delta, numerics.c_upper, basis.zeros)
    lower = cost.lower_bound(p, dp, numerics.c_lower, basis.zeros)
    shift = cost.best_shift(p, dp, numerics.c_lower, basis.zeros)
    report_cost = cost.cost_compare(inputs, inputs, upper, lower, signal.l2_norm, u0_norm,
                                    numerics.c_upper, numerics.c_lower, Config.SAFETY_FACTOR, shift)
    return SynthesisRun(basis=basis, family=family, coeffs=a, u0_norm=u0_norm, signal=signal,
                        report=report, cost=report_cost)


def parse_axis(spec: str) -> Tuple[str, np.ndarray]:
    """'T:lo:hi:n' or 'alpha:lo:hi:n' -> (field, grid)."""
    parts = spec.split(":")
    if len(parts) != 4 or parts[0] not in SWEEP_AXES:
        raise ConfigError(f"axis must look like T:lo:hi:n or alpha:lo:hi:n, got '{spec}'")
    try:
        lo, hi, n = float(parts[1]), float(parts[2]), int(parts[3])
    except ValueError as e:
        raise ConfigError(f"bad axis bounds in '{spec}'") from e
    if n < 1 or not (math.isfinite(lo) and math.isfinite(hi)):
        raise ConfigError(f"sweep grid '{spec}' is empty")
    return parts[0], np.linspace(lo, hi, n)


def _short(error: Exception) -> str:
    return str(error).splitlines()[0].replace(",", ";")


# --- pipeline -----------------------------------------------------------------------------

class ControlPipeline:
    def __init__(self, workers: int = Config.WORKERS):
        self.workers = max(1, workers)
        self.executor = ThreadPoolExecutor(max_workers=self.workers)

    def close(self) -> None:
        self.executor.shutdown(wait=True)

    async def _run(self, fn, *args, **kwargs):
        loop = asyncio.get_event_loop()
        return await loop.run_in_executor(None, partial(fn, *args, **kwargs))

    async def params(self, cfg: RunConfig, out: Optional[Path] = None) -> Dict[str, object]:
        p = cfg.problem
        dp = await self._run(spectral.derive_params, p)
        report = {
            "problem": p.model_dump(),
            "ell": dp.ell,
            "gamma": dp.gamma,
            "kappa": dp.kappa,
            "nu": dp.nu,
            "regime": dp.regime.value,
            "mu_critical": dp.mu_crit,
            "rho": spectral.rho_constants(p).model_dump(),
        }
        if out is not None and "json" in cfg.outputs.formats:
            write_json(out / "params.json", report)
        logger.info(f"Regime {dp.regime.value}: nu={dp.nu:.17g}, kappa={dp.kappa:.17g}, gamma={dp.gamma:.17g}")
        return report

    async def modes(self, cfg: RunConfig, out: Path) -> ModalBasis:
        basis = await self._run(spectral.build_basis, cfg.problem, cfg.numerics.K_modes, cfg.numerics.quad_tol,
                                self.executor)
        checks = certify_zeros(basis.zeros)
        if "csv" in cfg.outputs.formats:
            write_csv(out / "modes.csv", MODES_HEADER,
                      [[m.k, m.zero, m.lam, m.lam_sq, m.jprime_abs, m.trace_const, m.trace_log] for m in basis.modes])
            write_csv(out / "zeros.csv", ["k", "j_nu_k"], [[m.k, m.zero] for m in basis.modes])
        if "json" in cfg.outputs.formats:
            write_json(out / "zeros.json", {"nu": basis.zeros.nu, "zeros": basis.zeros.zeros, "checks": checks})
        return basis

    async def synthesize(self, cfg: RunConfig, out: Path) -> SynthesisSummary:
        stage = ["config"]
        try:
            run = await self._run(run_synthesis, cfg.problem, cfg.numerics, cfg.initial_data, self.executor,
                                  lambda s: stage.__setitem__(0, s))
            stage[0] = "export"
            files = self._write_synthesis(run, cfg, out)
        except Exception as e:
            write_json(out / "failed.json", {"failed_at": stage[0], "error": f"{type(e).__name__}: {e}"})
            logger.error(f"Synthesis failed at stage '{stage[0]}': {e}")
            raise

        summary = SynthesisSummary(
            biorth_passed=run.family.passed,
            certificate_passed=run.report.certificate(cfg.numerics.cert_tol),
            max_coeff=run.report.max_coeff,
            reduction_factor=run.report.reduction_factor,
            control_l2=run.signal.l2_norm,
            K_used=run.signal.K_used,
            unresolved_entries=int((~run.family.resolved).sum()),
            exceeds_upper=run.cost.exceeds_upper,
            files=files,
        )
        if "json" in cfg.outputs.formats:
            write_json(out / "summary.json", summary)
        logger.info(f"Certificate {'passed' if summary.passed else 'FAILED'}: max |<u(T),Phi_k>| = {summary.max_coeff:.3e}")
        return summary

    def _write_synthesis(self, run: SynthesisRun, cfg: RunConfig, out: Path) -> List[str]:
        files: List[str] = []
        family = run.family
        if "csv" in cfg.outputs.formats:
            files.append(write_csv(out / "control.csv", ["t", "f"], control_rows(run.signal.grid, run.signal.values)).name)
            for psi in family.psis:
                files.append(write_csv(out / f"psi_{psi.k}.csv", ["t", f"psi_{psi.k}_mantissa", f"psi_{psi.k}_log_scale"],
                                       psi_rows(family.grid, psi.mantissa, psi.log_scale)).name)
        if "json" in cfg.outputs.formats:
            defect = {
                "defect": family.defect, "floor": family.floor, "resolved": family.resolved,
                "tol": family.tol, "max_resolved_defect": family.max_resolved_defect, "passed": family.passed,
                "h_constant": family.h_constant, "multiplier": family.multiplier,
                "fourier": [{"k": p.k, "radius": p.radius, "nodes": p.nodes, "imag_ratio": p.imag_ratio,
                             "noise": p.noise} for p in family.psis],
            }
            trajectory = run.report.model_dump()
            trajectory.update(reduction_factor=run.report.reduction_factor, K_used=run.signal.K_used,
                              control_l2=run.signal.l2_norm, control_l1=run.signal.l1_norm)
            files.append(write_json(out / "biorth_defect.json", defect).name)
            files.append(write_json(out / "trajectory.json", trajectory).name)
            files.append(write_json(out / "cost.json", run.cost).name)
        return files

    def _sweep_row(self, cfg: RunConfig, field: str, value: float, with_control: bool) -> List[object]:
        values = cfg.problem.model_dump()
        values[field] = float(value)
        delta = cfg.numerics.delta
        row = [values["T"], values["alpha"], values["beta"], values["mu"], values["r"], delta]
        try:
            p = ProblemParams(**values)
            dp = spectral.derive_params(p)
            zeros = bessel_zeros(dp.nu, 2)
            upper = cost.upper_bound(p, dp, delta, cfg.numerics.c_upper, zeros)
            lower = cost.lower_bound(p, dp, cfg.numerics.c_lower, zeros)
        except (ValidationError, ParameterDomainError) as e:
            logger.warning(f"Sweep point {field}={value:.6g} is invalid: {_short(e)}")
            return row + ["", "", "", f"invalid: {_short(e)}"]
        except DegenerateControlError as e:
            logger.warning(f"Bounds at {field}={value:.6g} failed: {_short(e)}")
            return row + ["", "", "", f"failed: {_short(e)}"]

        achieved, status = "", "ok"
        if with_control:
            try:
                run = run_synthesis(p, cfg.numerics, cfg.initial_data)
                if run.u0_norm > 0.0 and run.signal.l2_norm > 0.0:
                    achieved = math.log(run.signal.l2_norm / run.u0_norm)
                if not (run.family.passed and run.report.certificate(cfg.numerics.cert_tol)):
                    status = "certificate_failed"
            except DegenerateControlError as e:
                logger.warning(f"Control at {field}={value:.6g} failed: {_short(e)}")
                status = f"failed: {_short(e)}"
        return row + [upper.log, lower.log, achieved, status]

    async def sweep(self, cfg: RunConfig, axis: str, out: Path, with_control: bool = False) -> List[List[object]]:
        field, grid = parse_axis(axis)
        loop = asyncio.get_event_loop()
        rows = await asyncio.gather(*[
            loop.run_in_executor(self.executor, self._sweep_row, cfg, field, float(v), with_control) for v in grid
        ])
        write_csv(out / "sweep.csv", SWEEP_HEADER, rows)
        logger.info(f"Sweep over {field}: {len(rows)} rows, {sum(r[-1] != 'ok' for r in rows)} not ok")
        return list(rows)

    async def verify(self, cfg: RunConfig, out: Path) -> VerifyReport:
        report = await self._run(self._verify_sync, cfg)
        write_json(out / "verify.json", {"checks": report.checks, "details": report.details, "passed": report.passed})
        for name, ok in report.checks.items():
            if not ok:
                logger.error(f"Check '{name}' failed")
        return report

    def _verify_sync(self, cfg: RunConfig) -> VerifyReport:
        checks: Dict[str, bool] = {}
        details: Dict[str, float] = {}
        run = run_synthesis(cfg.problem, cfg.numerics, cfg.initial_data, self.executor)
        basis, family = run.basis, run.family

        zero_checks = certify_zeros(basis.zeros)
        checks.update({f"zeros_{name}": ok for name, ok in zero_checks.items()})

        n = min(ORTHO_MODES, basis.K)
        ortho = float(np.max(np.abs(spectral.gram_matrix(basis, n) - np.eye(n))))
        details["orthonormality_defect"] = ortho
        checks["orthonormality"] = ortho < ORTHO_TOL

        rho = spectral.rho_constants(basis.params)
        grid = np.linspace(*spectral.RESIDUAL_WINDOW, 101)
        residual = max(spectral.apply_A2_residual(m, basis.derived, rho, grid) for m in basis.modes[:RESIDUAL_MODES])
        details["eigen_residual"] = residual
        checks["eigen_residual"] = residual < RESIDUAL_TOL

        mp, bump = family.multiplier, moment.BumpIntegral(family.multiplier)
        ys = np.linspace(-50.0 / mp.a, 50.0 / mp.a, 101)
        root = math.sqrt(mp.theta + 1.0)
        lower_h = mp.a * np.abs(ys) / (2.0 * root) - math.log(11.0 * root)
        checks["h_lower_imaginary"] = bool(np.all(bump.log_h_imag(ys) >= lower_h))
        xs = np.linspace(-200.0 / mp.a, 200.0 / mp.a, 1000)
        checks["h_bounded_real"] = bool(np.all(np.abs(bump.h_real(xs)) <= 1.0 + 1e-12))
        zs = (np.linspace(-20.0, 20.0, 10)[:, None] + 1j * np.linspace(-20.0, 20.0, 10)[None, :]).ravel() / mp.a
        checks["h_type_complex"] = bool(np.all(np.abs(bump.h_complex(zs)) <= np.exp(mp.a * np.abs(zs.imag)) * (1.0 + 1e-10)))
        details["h_fitted_constant"] = family.h_constant

        product = moment.LambdaProduct(basis, 2.0 * basis.modes[family.K - 1].lam_sq)
        interp = max(
            abs(moment.interpolant(basis, mp, k, [1j * basis.mode(l).lam_sq], product, bump)[0] - (1.0 if k == l else 0.0))
            for k in range(1, family.K + 1) for l in range(1, family.K + 1)
        )
        details["interpolation_defect"] = interp
        checks["interpolation"] = interp < INTERP_TOL

        details["max_imag_ratio"] = max(p.imag_ratio for p in family.psis)
        checks["psi_real"] = details["max_imag_ratio"] < 1e-8
        details["max_resolved_defect"] = family.max_resolved_defect
        checks["biorthogonality"] = family.passed
        details["max_final_coeff"] = run.report.max_coeff
        details["reduction_factor"] = run.report.reduction_factor
        checks["null_control_certificate"] = run.report.certificate(cfg.numerics.cert_tol)
        checks["cost_upper_bound"] = not run.cost.exceeds_upper
        return VerifyReport(checks=checks, details=details)
