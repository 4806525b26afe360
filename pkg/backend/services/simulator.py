import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, NamedTuple, Optional, Tuple, Dict

import numpy as np
from scipy.stats import linregress

from config import settings
from models import (
    CriteriaReport,
    JointHistogram,
    ModeParams,
    ShotRecord,
    SweepConfig,
    TwbModel,
)
from .criteria import evaluate_criteria
from .distributions import check_model
from .errors import ConfigurationError, EmptyDataError
from .streams import derived_seed, substream

logger = logging.getLogger(__name__)


class SweepResult(NamedTuple):
    label: str
    histogram: JointHistogram
    report: CriteriaReport


def _draw_mode_counts(p: ModeParams, size: int, rng: np.random.Generator) -> np.ndarray:
    # Gamma-Poisson mixture: exact Mandel-Rice sampling for any real mu > 0
    if p.b == 0:
        return np.zeros(size, dtype=np.int64)
    return rng.poisson(rng.gamma(p.mu, p.b, size=size)).astype(np.int64)


def sample_shots(m: TwbModel, size: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Draw `size` shots; returns detected counts (m_s, m_i)"""
    pairs = _draw_mode_counts(m.paired, size, rng)
    noise_s = _draw_mode_counts(m.noise_s, size, rng)
    noise_i = _draw_mode_counts(m.noise_i, size, rng)
    m_s = rng.binomial(pairs + noise_s, m.eta_s).astype(np.int64)
    m_i = rng.binomial(pairs + noise_i, m.eta_i).astype(np.int64)
    return m_s, m_i


def sample_shot(m: TwbModel, rng: np.random.Generator) -> ShotRecord:
    m_s, m_i = sample_shots(m, 1, rng)
    return ShotRecord(int(m_s[0]), int(m_i[0]))


def simulate_shots(m: TwbModel, shots: int, seed: int,
                   max_workers: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Per-shot detected counts, drawn in fixed-size blocks with one substream each"""
    check_model(m)
    if shots < 1:
        raise EmptyDataError(f"shots must be at least 1, got {shots}")
    block = settings.simulation_block_size
    n_blocks = math.ceil(shots / block)
    workers = max_workers or settings.max_workers

    def run_block(index: int) -> Tuple[np.ndarray, np.ndarray]:
        size = min(block, shots - index * block)
        return sample_shots(m, size, substream(seed, index))

    with ThreadPoolExecutor(max_workers=workers) as pool:
        blocks = list(pool.map(run_block, range(n_blocks)))

    m_s = np.concatenate([b[0] for b in blocks])
    m_i = np.concatenate([b[1] for b in blocks])
    return m_s, m_i


def run_experiment(m: TwbModel, shots: int, seed: int,
                   max_workers: Optional[int] = None) -> JointHistogram:
    try:
        logger.info(f"Simulating {shots} shots with seed {seed}")
        m_s, m_i = simulate_shots(m, shots, seed, max_workers)
        histogram = JointHistogram.from_arrays(m_s, m_i)
        logger.info(f"Simulation finished: cutoffs {histogram.cutoffs}")
        return histogram
    except Exception as e:
        logger.error(f"Simulation failed: {e}")
        raise


def run_sweep(cfg: SweepConfig) -> List[SweepResult]:
    """One experiment plus criteria per configured point, in configured order"""
    labels = [point.label for point in cfg.points]
    if len(set(labels)) != len(labels):
        raise ConfigurationError("duplicate sweep labels")

    results = []
    for index, point in enumerate(cfg.points):
        seed = derived_seed(cfg.seed, [index])
        histogram = run_experiment(point.model, cfg.shots, seed)
        eta = 0.5 * (point.model.eta_s + point.model.eta_i)
        report = evaluate_criteria(histogram, eta=eta, bootstrap=cfg.bootstrap, seed=seed)
        results.append(SweepResult(point.label, histogram, report))
        logger.info(f"Sweep point {point.label!r}: R={report.R}, S={report.S}, H={report.H}")
    return results


def linear_gain_fit(results: List[SweepResult], arm: str = "s") -> Dict[str, float]:
    """Least-squares line of the mean detected count against numeric sweep labels"""
    if len(results) < 2:
        raise ConfigurationError("a gain fit needs at least two sweep points")
    try:
        power = np.array([float(result.label) for result in results])
    except ValueError as e:
        raise ConfigurationError(f"sweep labels must be numeric for a gain fit: {e}") from e
    means = np.array([result.report.mean_s if arm == "s" else result.report.mean_i
                      for result in results])
    fit = linregress(power, means)
    return {"slope": float(fit.slope), "intercept": float(fit.intercept),
            "r_squared": float(fit.rvalue ** 2)}
