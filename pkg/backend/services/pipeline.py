"""Run orchestration shared by the command line and the HTTP API."""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from config import settings
from models import (
    CriteriaReport,
    FitOptions,
    GridOptions,
    IntensityGrid,
    JointHistogram,
    NegativityReport,
    Provenance,
    ReconstructionSummary,
    ReportDocument,
    TwbModel,
)
from .criteria import evaluate_criteria
from .distributions import detected_twb_pmf, joint_twb_distribution
from .errors import ConfigurationError
from .intensity import (
    default_axis,
    detected_intensity_quasi,
    invert_mandel_2d,
    model_quasi_convolution,
    negativity_report,
)
from .reconstruction import ReconstructionResult, fit_model
from .simulator import simulate_shots
from .storage import file_hash

logger = logging.getLogger(__name__)

Source = Union[TwbModel, JointHistogram]


class TwinBeamService:
    """Simulation, analysis, reconstruction and inversion behind one façade"""

    def __init__(self):
        self.version = settings.app_version

    def simulate(self, model: TwbModel, shots: int, seed: int) -> Tuple[np.ndarray, np.ndarray, JointHistogram]:
        """Per-shot counts and their histogram"""
        try:
            logger.info(f"Simulate: {shots} shots, seed {seed}")
            m_s, m_i = simulate_shots(model, shots, seed)
            return m_s, m_i, JointHistogram.from_arrays(m_s, m_i)
        except Exception as e:
            logger.error(f"Simulation run failed: {e}")
            raise

    def analyze(self, histogram: JointHistogram, eta: Optional[float] = None,
                bootstrap: int = 0, seed: int = 0) -> CriteriaReport:
        return evaluate_criteria(histogram, eta=eta, bootstrap=bootstrap, seed=seed)

    def reconstruct(self, histogram: JointHistogram, options: Optional[FitOptions] = None) -> ReconstructionResult:
        return fit_model(histogram, options or FitOptions())

    def _axes(self, means: Tuple[float, float], grid: GridOptions) -> Tuple[np.ndarray, np.ndarray]:
        if grid.w_max is not None:
            axis = np.linspace(0.0, grid.w_max, grid.points)
            return axis, axis
        return default_axis(means[0], grid.points), default_axis(means[1], grid.points)

    def intensity(self, source: Source, grid: Optional[GridOptions] = None) -> IntensityGrid:
        """Quasi-distribution of the requested kind from a model or a detected histogram"""
        grid = grid or GridOptions()
        try:
            if isinstance(source, JointHistogram):
                if grid.which != "detected":
                    raise ConfigurationError(
                        f"a histogram only yields the detected-level grid, not {grid.which!r}; reconstruct a model first"
                    )
                axes = self._axes(source.to_distribution().means(), grid)
                return detected_intensity_quasi(source, grid.order, axes, grid.damping, grid.allow_singular)

            if grid.which == "photons":
                dist = joint_twb_distribution(source)
            elif grid.which == "detected":
                dist = detected_twb_pmf(source)
            else:
                mean_s = source.paired.mean + source.noise_s.mean
                mean_i = source.paired.mean + source.noise_i.mean
                axes = self._axes((mean_s, mean_i), grid)
                return model_quasi_convolution(source, grid.order, axes, grid.damping, grid.allow_singular)
            axes = self._axes(dist.means(), grid)
            return invert_mandel_2d(dist, grid.order, axes, grid.damping, grid.allow_singular, label=grid.which)
        except Exception as e:
            logger.error(f"Intensity inversion ({grid.which}) failed: {e}")
            raise

    def negativity(self, grid: IntensityGrid, eps_neg: Optional[float] = None) -> NegativityReport:
        return negativity_report(grid, eps_neg)

    def provenance(self, seed: Optional[int] = None, inputs: Optional[List[str]] = None,
                   config: Optional[Dict[str, Any]] = None) -> Provenance:
        hashes = {Path(path).name: file_hash(path) for path in (inputs or [])}
        return Provenance(tool_version=self.version, seed=seed, input_hashes=hashes, config=config or {})

    def report(self, criteria: CriteriaReport, provenance: Provenance,
               reconstruction: Optional[ReconstructionSummary] = None,
               negativity: Optional[NegativityReport] = None) -> ReportDocument:
        return ReportDocument(criteria=criteria, reconstruction=reconstruction,
                              negativity=negativity, provenance=provenance)


twinbeam_service = TwinBeamService()
