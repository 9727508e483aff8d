import math
from enum import Enum
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Regime(str, Enum):
    SUB_ONE = "SubOne"
    SUPER_ONE = "SuperOne"
    EQUAL_ONE = "EqualOne"


class LogScaled(BaseModel):
    """A real number stored as mantissa * exp(log_scale)."""

    model_config = ConfigDict(frozen=True)

    mantissa: float
    log_scale: float

    @classmethod
    def from_log(cls, log_value: float, sign: float = 1.0) -> "LogScaled":
        return cls(mantissa=math.copysign(1.0, sign), log_scale=log_value)

    @property
    def log(self) -> float:
        if self.mantissa == 0.0:
            return -math.inf
        return math.log(abs(self.mantissa)) + self.log_scale

    @property
    def value(self) -> float:
        if self.mantissa == 0.0:
            return 0.0
        log_value = self.log
        if log_value > 709.0:
            return math.copysign(math.inf, self.mantissa)
        return math.copysign(math.exp(log_value), self.mantissa)


# --- problem definition -----------------------------------------------------

class ProblemParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(0.0, ge=0.0, lt=2.0)
    beta: float = 0.0
    mu: float = 0.0
    r: int = 0
    T: float = Field(1.0, gt=0.0)

    @field_validator("alpha", "beta", "mu", "T")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("parameters must be finite")
        return value

    @field_validator("r")
    @classmethod
    def _boundary_selector(cls, value: int) -> int:
        if value not in (0, 1):
            raise ValueError("r must be 0 or 1")
        return value

    @property
    def weight_sum(self) -> float:
        return self.alpha + self.beta


class DerivedParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    ell: Literal[0, 1]
    gamma: float
    kappa: float = Field(gt=0.0, le=1.0)
    nu: float = Field(ge=0.0)
    regime: Regime
    mu_crit: float

    @property
    def trace_denominator(self) -> float:
        """Bracketed factor shared by the trace constant and both cost bounds."""
        if self.regime == Regime.EQUAL_ONE:
            return self.kappa * self.nu
        return (math.sqrt(self.mu_crit) + self.kappa * self.nu) * (1 - self.ell) + self.ell


class RhoConstants(BaseModel):
    model_config = ConfigDict(frozen=True)

    rho1: float
    rho2: float
    rho3: float
    rho4: float

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.rho1, self.rho2, self.rho3, self.rho4)


# --- spectral data ----------------------------------------------------------

class ZeroTable(BaseModel):
    model_config = ConfigDict(frozen=True)

    nu: float = Field(ge=0.0)
    zeros: Tuple[float, ...]

    @field_validator("zeros")
    @classmethod
    def _increasing(cls, zeros: Tuple[float, ...]) -> Tuple[float, ...]:
        if not zeros:
            raise ValueError("zero table is empty")
        if zeros[0] <= 0.0 or any(b <= a for a, b in zip(zeros, zeros[1:])):
            raise ValueError("zeros must be positive and strictly increasing")
        return zeros

    @property
    def K(self) -> int:
        return len(self.zeros)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.zeros, dtype=float)


class Mode(BaseModel):
    model_config = ConfigDict(frozen=True)

    k: int = Field(ge=1)
    zero: float = Field(gt=0.0)
    lam: float = Field(gt=0.0)
    lam_sq: float = Field(gt=0.0)
    jprime_abs: float = Field(gt=0.0)
    trace_const: float = Field(gt=0.0)
    trace_log: float


class QuadratureRule(BaseModel):
    """Nodes and weights on (0, 1) plus the refinement used to detect divergence."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    nodes: np.ndarray
    weights: np.ndarray
    levels: int
    tol: float
    fine_nodes: Optional[np.ndarray] = None
    fine_weights: Optional[np.ndarray] = None

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


class ModalBasis(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    params: ProblemParams
    derived: DerivedParams
    modes: Tuple[Mode, ...]
    zeros: ZeroTable
    quad: QuadratureRule

    @model_validator(mode="after")
    def _ordered(self) -> "ModalBasis":
        if not self.modes:
            raise ValueError("a modal basis needs at least one mode")
        lams = [m.lam for m in self.modes]
        if any(b <= a for a, b in zip(lams, lams[1:])):
            raise ValueError("modes must be strictly increasing in lambda")
        return self

    @property
    def K(self) -> int:
        return len(self.modes)

    @property
    def lam_sq(self) -> np.ndarray:
        return np.array([m.lam_sq for m in self.modes])

    @property
    def trace_logs(self) -> np.ndarray:
        return np.array([m.trace_log for m in self.modes])

    def mode(self, k: int) -> Mode:
        if not 1 <= k <= self.K:
            raise IndexError(f"mode {k} not in basis of size {self.K}")
        return self.modes[k - 1]


# --- moment construction ----------------------------------------------------

class MultiplierParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    delta: float = Field(gt=0.0, lt=1.0)
    a: float = Field(gt=0.0)
    theta: float = Field(gt=0.0)


class PsiSample(BaseModel):
    """psi_k on the time grid as mantissa * exp(log_scale); zero outside its support."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    k: int
    mantissa: np.ndarray
    log_scale: float
    radius: float
    nodes: int
    imag_ratio: float
    noise: float


class BiorthogonalFamily(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    basis: ModalBasis
    T: float
    multiplier: MultiplierParams
    grid: np.ndarray
    psis: Tuple[PsiSample, ...]
    defect: np.ndarray
    floor: np.ndarray
    resolved: np.ndarray
    tol: float
    h_constant: float

    @property
    def K(self) -> int:
        return len(self.psis)

    @property
    def max_resolved_defect(self) -> float:
        if not self.resolved.any():
            return 0.0
        return float(np.max(self.defect[self.resolved]))

    @property
    def passed(self) -> bool:
        return bool(np.all(self.defect[self.resolved] <= self.tol + self.floor[self.resolved]))

    def psi(self, k: int) -> PsiSample:
        if not 1 <= k <= self.K:
            raise IndexError(f"psi_{k} not built (family size {self.K})")
        return self.psis[k - 1]


# --- control and trajectory -------------------------------------------------

class ControlSignal(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: np.ndarray
    mantissa: np.ndarray
    log_scale: float
    l2_norm: float
    l1_norm: float
    K_used: int
    tail_bound: float
    weight_logs: Tuple[float, ...] = ()
    weight_signs: Tuple[float, ...] = ()

    @property
    def values(self) -> np.ndarray:
        if self.log_scale == -math.inf:
            return np.zeros_like(self.mantissa)
        return self.mantissa * math.exp(self.log_scale)


class TrajectoryReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    tau: float
    coeffs: List[float]
    free_coeffs: List[float]
    residual_norm: float = Field(ge=0.0)
    free_norm: float = Field(ge=0.0)
    u0_norm: float = Field(ge=0.0)
    tail_bound: float = Field(ge=0.0)

    @property
    def max_coeff(self) -> float:
        return max((abs(c) for c in self.coeffs), default=0.0)

    @property
    def reduction_factor(self) -> float:
        """Controlled over uncontrolled final-state norm."""
        if self.free_norm == 0.0:
            return 0.0
        return self.residual_norm / self.free_norm

    def certificate(self, tol: float) -> bool:
        return self.max_coeff <= tol * max(self.u0_norm, np.finfo(float).tiny)


# --- cost ---------------------------------------------------------------------

class CostInputs(BaseModel):
    model_config = ConfigDict(frozen=True)

    T: float
    alpha: float
    beta: float
    mu: float
    r: int
    delta: float
    j1: float
    j2: float
    nu: float
    kappa: float


class CostReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    upper: LogScaled
    lower: LogScaled
    achieved_norm: float = Field(ge=0.0)
    inputs: CostInputs
    c_upper: float
    c_lower: float
    safety_factor: float = 1.0
    exceeds_upper: bool = False
    log_ratio: Optional[float] = None
    best_shift: Optional[float] = None
    best_lower_log: Optional[float] = None


class SynthesisSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    biorth_passed: bool
    certificate_passed: bool
    max_coeff: float
    reduction_factor: float
    control_l2: float
    K_used: int
    unresolved_entries: int
    exceeds_upper: bool
    files: List[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.biorth_passed and self.certificate_passed


class VerifyReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    checks: Dict[str, bool]
    details: Dict[str, float] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


# --- run configuration --------------------------------------------------------

class NumericsConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    K_modes: int = Field(32, ge=1)
    family_modes: int = Field(8, ge=1)
    delta: float = Field(0.5, gt=0.0, lt=1.0)
    time_samples: int = Field(4096, ge=8)
    fourier_tol: float = Field(1e-15, gt=0.0, lt=1.0)
    quad_tol: float = Field(1e-10, gt=0.0, lt=1.0)
    cert_tol: float = Field(1e-6, gt=0.0, lt=1.0)
    biorth_tol: float = Field(1e-6, gt=0.0, lt=1.0)
    c_upper: float = Field(1.0, gt=0.0)
    c_lower: float = Field(1.0, gt=0.0)

    @field_validator("time_samples")
    @classmethod
    def _even(cls, value: int) -> int:
        if value % 2:
            raise ValueError("time_samples must be even (composite Simpson)")
        return value


class InitialDataConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    preset: str = "mode:1"
    scale: float = 1.0

    @field_validator("preset")
    @classmethod
    def _known_preset(cls, value: str) -> str:
        value = value.strip()
        if value in ("zero", "poly:x(1-x)") or value.startswith("file:"):
            return value
        if value.startswith("mode:") and value[5:].isdigit() and int(value[5:]) >= 1:
            return value
        raise ValueError(f"unknown initial data preset '{value}'")


class OutputConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    directory: str = "out"
    formats: List[str] = Field(default_factory=lambda: ["csv", "json"])


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    problem: ProblemParams = Field(default_factory=ProblemParams)
    numerics: NumericsConfig = Field(default_factory=NumericsConfig)
    initial_data: InitialDataConfig = Field(default_factory=InitialDataConfig)
    outputs: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def _family_fits_basis(self) -> "RunConfig":
        if self.numerics.family_modes > self.numerics.K_modes:
            raise ValueError("family_modes cannot exceed K_modes")
        return self
