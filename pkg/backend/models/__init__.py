from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import List, Optional, Dict, Any, Tuple, Literal
from pathlib import Path

from config import settings
from .arrays import (
    Distribution1D,
    JointDistribution,
    JointHistogram,
    ShotRecord,
    IntensityProfile,
    IntensityGrid,
)


class ModeParams(BaseModel):
    """Mandel-Rice parameters of one multimode thermal component"""
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    mu: float = Field(..., gt=0, description="Number of independent modes (real)")
    b: float = Field(..., ge=0, description="Mean photons per mode")

    @property
    def mean(self) -> float:
        return self.mu * self.b

    @property
    def variance(self) -> float:
        return self.mu * self.b * (1.0 + self.b)


FLAT_KEYS = ("mu_p", "b_p", "mu_s", "b_s", "mu_i", "b_i", "eta_s", "eta_i")


class TwbModel(BaseModel):
    """Paired part, two noise parts and the two detection efficiencies"""
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    paired: ModeParams
    noise_s: ModeParams
    noise_i: ModeParams
    eta_s: float = Field(1.0, ge=0, le=1)
    eta_i: float = Field(1.0, ge=0, le=1)

    @classmethod
    def from_flat(cls, values: Dict[str, Any]) -> "TwbModel":
        missing = [key for key in FLAT_KEYS if key not in values]
        if missing:
            raise ValueError(f"model is missing keys: {', '.join(missing)}")
        return cls(
            paired=ModeParams(mu=values["mu_p"], b=values["b_p"]),
            noise_s=ModeParams(mu=values["mu_s"], b=values["b_s"]),
            noise_i=ModeParams(mu=values["mu_i"], b=values["b_i"]),
            eta_s=values["eta_s"],
            eta_i=values["eta_i"],
        )

    def to_flat(self) -> Dict[str, float]:
        return {
            "mu_p": self.paired.mu, "b_p": self.paired.b,
            "mu_s": self.noise_s.mu, "b_s": self.noise_s.b,
            "mu_i": self.noise_i.mu, "b_i": self.noise_i.b,
            "eta_s": self.eta_s, "eta_i": self.eta_i,
        }

    def swapped(self) -> "TwbModel":
        """Exchange the roles of signal and idler"""
        return TwbModel(paired=self.paired, noise_s=self.noise_i, noise_i=self.noise_s,
                        eta_s=self.eta_i, eta_i=self.eta_s)

    def with_efficiencies(self, eta_s: float, eta_i: float) -> "TwbModel":
        return self.model_copy(update={"eta_s": eta_s, "eta_i": eta_i})

    @property
    def pairing_fraction(self) -> float:
        """Share of photons that belong to pairs"""
        paired = 2.0 * self.paired.mean
        total = paired + self.noise_s.mean + self.noise_i.mean
        return paired / total if total > 0 else 0.0


class FitOptions(BaseModel):
    restarts: int = Field(default_factory=lambda: settings.fit_restarts, ge=1)
    min_shots: int = Field(default_factory=lambda: settings.fit_min_shots, ge=2)
    fatol: float = Field(default_factory=lambda: settings.fit_fatol, gt=0)
    xatol: float = Field(default_factory=lambda: settings.fit_xatol, gt=0)
    maxiter: int = Field(default_factory=lambda: settings.fit_maxiter, ge=1)
    max_workers: int = Field(default_factory=lambda: settings.max_workers, ge=1)
    noise_mode_floor: float = Field(default_factory=lambda: settings.noise_mode_floor, ge=0)


class SweepPoint(BaseModel):
    label: str
    model: TwbModel


class SweepConfig(BaseModel):
    points: List[SweepPoint] = Field(default_factory=list)
    shots: int = Field(default_factory=lambda: settings.default_shots, ge=1)
    seed: int = Field(..., ge=0)
    bootstrap: int = Field(0, ge=0, description="Bootstrap resamples per point; 0 disables")

    @field_validator("points")
    @classmethod
    def labels_unique(cls, points: List[SweepPoint]) -> List[SweepPoint]:
        labels = [point.label for point in points]
        duplicates = sorted({label for label in labels if labels.count(label) > 1})
        if duplicates:
            raise ValueError(f"duplicate sweep labels: {', '.join(duplicates)}")
        return points


class CriteriaFlags(BaseModel):
    R: bool
    S: bool
    H: bool


class StandardErrors(BaseModel):
    C: Optional[float] = None
    R: Optional[float] = None
    S: Optional[float] = None
    H: Optional[float] = None
    resamples: int


class CriteriaReport(BaseModel):
    shots: int
    mean_s: float
    mean_i: float
    C: Optional[float] = None
    R: Optional[float] = None
    R_theory: Optional[float] = None
    S: Optional[float] = None
    S_raw: Optional[float] = Field(None, description="Schwarz ratio with plain second moments (never above 1)")
    H: Optional[float] = None
    fano_s: Optional[float] = None
    fano_i: Optional[float] = None
    mu_est_s: Optional[float] = None
    mu_est_i: Optional[float] = None
    eta_est: Optional[float] = None
    flags: CriteriaFlags
    verdicts: Dict[str, str]
    sub_shot_noise: bool = False
    standard_errors: Optional[StandardErrors] = None
    notes: List[str] = Field(default_factory=list)


class PhotonStatistics(BaseModel):
    photon_covariance: float
    photon_correlation: float
    photon_R: float
    pairing_fraction: float
    diagonal_weight: float
    mean_pairs: float
    mean_paired_photons: float
    max_offdiagonal_ratio: float


class ReconstructionSummary(BaseModel):
    model: TwbModel
    residual: float
    chi2: float
    shots: int
    converged: bool
    restarts_converged: int
    eta_difference: float
    derived: PhotonStatistics
    flags: List[str] = Field(default_factory=list)


class NegativityReport(BaseModel):
    min_value: float
    min_location: Tuple[float, float]
    max_value: float
    negative_fraction: float
    eps_neg: float
    zero_contours: List[List[Tuple[float, float]]] = Field(default_factory=list)
    negative_orientation_deg: Optional[float] = None


class Provenance(BaseModel):
    tool_version: str
    schema_version: str = Field(default_factory=lambda: settings.schema_version)
    seed: Optional[int] = None
    input_hashes: Dict[str, str] = Field(default_factory=dict)
    config: Dict[str, Any] = Field(default_factory=dict)


class ReportDocument(BaseModel):
    criteria: CriteriaReport
    reconstruction: Optional[ReconstructionSummary] = None
    negativity: Optional[NegativityReport] = None
    provenance: Provenance


class GridOptions(BaseModel):
    which: Literal["photons", "detected", "convolution"] = "photons"
    order: Optional[int] = Field(None, ge=0)
    damping: Optional[float] = Field(None, gt=0, le=1)
    points: int = Field(default_factory=lambda: settings.grid_points, ge=3)
    w_max: Optional[float] = Field(None, gt=0)
    allow_singular: bool = False


class RunConfig(BaseModel):
    """Everything needed to replay one command-line run"""
    command: Literal["simulate", "analyze", "reconstruct", "intensity", "report"]
    inputs: List[str] = Field(default_factory=list)
    output: Optional[str] = None
    shots: Optional[int] = Field(None, ge=1)
    seed: Optional[int] = Field(None, ge=0)
    bootstrap: int = Field(0, ge=0)
    fit: FitOptions = Field(default_factory=FitOptions)
    grid: GridOptions = Field(default_factory=GridOptions)

    @model_validator(mode="after")
    def check_run(self) -> "RunConfig":
        for path in self.inputs:
            if not Path(path).exists():
                raise ValueError(f"input file not found: {path}")
        if self.command == "simulate" and self.seed is None:
            raise ValueError("simulate requires a seed")
        return self


# HTTP payloads

class HistogramPayload(BaseModel):
    counts: List[List[int]]
    shots: int = Field(..., ge=1)


class SimulateRequest(BaseModel):
    model: TwbModel
    shots: int = Field(default_factory=lambda: settings.default_shots, ge=1, le=2_000_000)
    seed: int = Field(..., ge=0)


class SimulateResponse(BaseModel):
    success: bool
    histogram: Optional[HistogramPayload] = None
    criteria: Optional[CriteriaReport] = None
    error: Optional[str] = None


class AnalyzeRequest(BaseModel):
    histogram: HistogramPayload
    eta: Optional[float] = Field(None, ge=0, le=1, description="Known detection efficiency")
    bootstrap: int = Field(0, ge=0, le=2000)
    seed: int = Field(0, ge=0)


class ReconstructRequest(BaseModel):
    histogram: HistogramPayload
    options: FitOptions = Field(default_factory=FitOptions)


class IntensityRequest(BaseModel):
    model: Optional[TwbModel] = None
    histogram: Optional[HistogramPayload] = None
    grid: GridOptions = Field(default_factory=GridOptions)
    eps_neg: float = Field(default_factory=lambda: settings.eps_neg, gt=0)

    @model_validator(mode="after")
    def one_source(self) -> "IntensityRequest":
        if (self.model is None) == (self.histogram is None):
            raise ValueError("provide exactly one of model or histogram")
        return self


class IntensityResponse(BaseModel):
    success: bool
    metadata: Optional[Dict[str, Any]] = None
    axis_s: Optional[List[float]] = None
    axis_i: Optional[List[float]] = None
    values: Optional[List[List[float]]] = None
    negativity: Optional[NegativityReport] = None
    error: Optional[str] = None


class HealthResponse(BaseModel):
    status: str
    version: str
    services: Dict[str, str]


__all__ = [
    "ModeParams",
    "TwbModel",
    "FLAT_KEYS",
    "FitOptions",
    "SweepPoint",
    "SweepConfig",
    "CriteriaFlags",
    "StandardErrors",
    "CriteriaReport",
    "PhotonStatistics",
    "ReconstructionSummary",
    "NegativityReport",
    "Provenance",
    "ReportDocument",
    "GridOptions",
    "RunConfig",
    "HistogramPayload",
    "SimulateRequest",
    "SimulateResponse",
    "AnalyzeRequest",
    "ReconstructRequest",
    "IntensityRequest",
    "IntensityResponse",
    "HealthResponse",
    "Distribution1D",
    "JointDistribution",
    "JointHistogram",
    "ShotRecord",
    "IntensityProfile",
    "IntensityGrid",
]
