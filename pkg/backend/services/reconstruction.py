"""Constrained fit of the three-component twin-beam model to detected-photon data.

The five moment equalities (two means, two variances, covariance) are solved
analytically for five parameter combinations, so the optimizer only searches
the three mode numbers (in log10 space).
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from config import settings
from models import (
    FitOptions,
    JointDistribution,
    JointHistogram,
    ModeParams,
    PhotonStatistics,
    ReconstructionSummary,
    TwbModel,
)
from .criteria import MomentTable, exact_noise_reduction, mode_estimate_from_moments
from .distributions import detected_twb_pmf, joint_twb_distribution, model_moments
from .errors import EmptyDataError, FitFailureError, ModelMismatchError, UndefinedStatisticError

logger = logging.getLogger(__name__)

_PENALTY = 1e3
_LOG_BOUNDS = (-8.0, 6.0)
_NOISE_STARTS = (1e-4, 1e-3, 1e-2, 1e-1)


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    summary: ReconstructionSummary
    photon_dist: JointDistribution
    fitted: JointDistribution

    @property
    def model(self) -> TwbModel:
        return self.summary.model

    @property
    def residual(self) -> float:
        return self.summary.residual

    @property
    def derived(self) -> PhotonStatistics:
        return self.summary.derived


def empirical_moments(h: JointHistogram) -> Dict[str, float]:
    """Unbiased sample means, variances and covariance"""
    if h.shots < 2:
        raise EmptyDataError(f"need at least 2 shots for sample moments, got {h.shots}")
    table = MomentTable.from_histogram(h)
    scale = h.shots / (h.shots - 1)
    var_s, var_i = (v * scale for v in table.variances)
    cov = table.covariance * scale
    correlation = cov / math.sqrt(var_s * var_i) if var_s > 0 and var_i > 0 else float("nan")
    mean_s, mean_i = table.means
    return {"mean_s": mean_s, "mean_i": mean_i, "var_s": var_s, "var_i": var_i,
            "cov": cov, "correlation": correlation}


def _arm_roots(mean: float, excess: float, mu_p: float, mu_noise: float) -> List[Tuple[float, float]]:
    """(detected pair mean per mode, detected noise mean per mode) matching one arm's mean and excess variance"""
    disc = mu_p * mu_noise * ((mu_noise + mu_p) * excess - mean ** 2)
    if disc < 0:
        return []
    root = math.sqrt(disc)
    denom = mu_p * (mu_noise + mu_p)
    roots = []
    for sign in (1.0, -1.0):
        beta = (mean * mu_p + sign * root) / denom
        noise = (mean - mu_p * beta) / mu_noise
        if beta > 0 and noise >= -1e-12 * mean:
            roots.append((beta, max(noise, 0.0)))
    return roots


class _Objective:
    """Declination between data and model with the moments eliminated"""

    def __init__(self, f: np.ndarray, shots: int):
        self.f = f
        self.cutoffs = (f.shape[0] - 1, f.shape[1] - 1)
        self.mask = f > 0
        self.weights = np.maximum(f[self.mask], 1.0 / shots)
        table = MomentTable(f, float(f.sum()))
        self.mean_s, self.mean_i = table.means
        var_s, var_i = table.variances
        self.excess_s = var_s - self.mean_s
        self.excess_i = var_i - self.mean_i
        self.cov = table.covariance

    def targets(self) -> Dict[str, float]:
        return {"mean_s": self.mean_s, "mean_i": self.mean_i,
                "var_s": self.excess_s + self.mean_s, "var_i": self.excess_i + self.mean_i,
                "cov": self.cov}

    def residual(self, model: TwbModel) -> float:
        f_th = detected_twb_pmf(model, self.cutoffs).probs
        return float((((self.f - f_th)[self.mask]) ** 2 / self.weights).sum())

    def candidates(self, x: np.ndarray) -> List[TwbModel]:
        mu_p, mu_s, mu_i = (10.0 ** v for v in x)
        models = []
        for (beta_s, u_s), (beta_i, u_i) in product(
            _arm_roots(self.mean_s, self.excess_s, mu_p, mu_s),
            _arm_roots(self.mean_i, self.excess_i, mu_p, mu_i),
        ):
            inv_bp = self.cov / (mu_p * beta_s * beta_i) - 1.0
            if inv_bp <= 0:
                continue
            b_p = 1.0 / inv_bp
            eta_s, eta_i = beta_s / b_p, beta_i / b_p
            if eta_s > 1 + 1e-9 or eta_i > 1 + 1e-9:
                continue
            eta_s, eta_i = min(eta_s, 1.0), min(eta_i, 1.0)
            models.append(TwbModel(
                paired=ModeParams(mu=mu_p, b=b_p),
                noise_s=ModeParams(mu=mu_s, b=u_s / eta_s),
                noise_i=ModeParams(mu=mu_i, b=u_i / eta_i),
                eta_s=eta_s, eta_i=eta_i,
            ))
        return models

    def best(self, x: np.ndarray) -> Tuple[float, Optional[TwbModel]]:
        low, high = _LOG_BOUNDS
        outside = float(np.sum(np.clip(low - x, 0, None) + np.clip(x - high, 0, None)))
        if outside > 0:
            return _PENALTY * (1.0 + outside), None
        scored = [(self.residual(model), model) for model in self.candidates(x)]
        if not scored:
            return _PENALTY, None
        return min(scored, key=lambda item: item[0])

    def __call__(self, x: np.ndarray) -> float:
        return self.best(x)[0]


def _starting_points(objective: _Objective, restarts: int) -> List[np.ndarray]:
    estimates = []
    for mean, excess in ((objective.mean_s, objective.excess_s), (objective.mean_i, objective.excess_i)):
        try:
            estimates.append(mode_estimate_from_moments(mean, mean + excess))
        except UndefinedStatisticError:
            pass
    mu_start = float(np.mean(estimates))
    factors = np.geomspace(1.05, 30.0, max(math.ceil(restarts / len(_NOISE_STARTS)), 1))
    starts = [np.log10([mu_start * factor, noise, noise])
              for factor, noise in product(factors, _NOISE_STARTS)]
    return starts[:restarts]


def photon_statistics(photon_dist: JointDistribution, model: TwbModel) -> PhotonStatistics:
    """Photon-level covariance, R, diagonal weight and pairing of a reconstruction"""
    probs = photon_dist.probs
    index = np.arange(min(probs.shape))
    diagonal = probs[index, index]
    off_diagonal = probs.copy()
    off_diagonal[index, index] = 0.0
    try:
        photon_R = exact_noise_reduction(photon_dist)
    except UndefinedStatisticError:
        photon_R = 0.0
    var_s, var_i = photon_dist.variances()
    correlation = photon_dist.correlation() if var_s > 0 and var_i > 0 else 0.0
    return PhotonStatistics(
        photon_covariance=photon_dist.covariance(),
        photon_correlation=correlation,
        photon_R=photon_R,
        pairing_fraction=model.pairing_fraction,
        diagonal_weight=photon_dist.diagonal_weight() / photon_dist.total(),
        mean_pairs=model.paired.mean,
        mean_paired_photons=2.0 * model.paired.mean,
        max_offdiagonal_ratio=float(off_diagonal.max() / diagonal.max()) if diagonal.max() > 0 else 0.0,
    )


def fit_distribution(f: np.ndarray, shots: int, opts: Optional[FitOptions] = None) -> ReconstructionResult:
    """Fit the model to a normalized detected-count matrix observed over `shots` shots"""
    opts = opts or FitOptions()
    f = np.asarray(f, dtype=float)
    objective = _Objective(f, shots)
    if objective.excess_s <= 0 or objective.excess_i <= 0:
        raise ModelMismatchError("sub-Poissonian or Poissonian marginal: no multithermal decomposition exists")
    if objective.cov <= 0:
        raise ModelMismatchError("non-positive covariance: no paired component to fit")

    starts = _starting_points(objective, opts.restarts)
    logger.info(f"Fitting {len(starts)} restarts on a {f.shape} histogram of {shots} shots")

    def run(x0: np.ndarray):
        result = minimize(objective, x0, method="Nelder-Mead",
                          options={"xatol": opts.xatol, "fatol": opts.fatol, "maxiter": opts.maxiter})
        spread = float(np.ptp(result.final_simplex[1]))
        converged = bool(result.success) or spread <= opts.fatol
        return result.fun, tuple(result.x), converged

    with ThreadPoolExecutor(max_workers=opts.max_workers) as pool:
        outcomes = list(pool.map(run, starts))

    feasible = [o for o in outcomes if o[0] < _PENALTY]
    if not feasible:
        logger.error("No restart reached a feasible parameter set")
        raise ModelMismatchError("moment constraints cannot be met by any explored parameter set")
    converged = [o for o in feasible if o[2]]
    best_fun, best_x, _ = min(converged or feasible, key=lambda o: (o[0], o[1]))
    _, model = objective.best(np.array(best_x))
    if not converged:
        logger.error(f"None of {len(starts)} restarts converged")
        raise FitFailureError("optimizer did not converge", best_model=model, best_residual=best_fun)
    if len(converged) < len(starts):
        logger.warning(f"{len(starts) - len(converged)} of {len(starts)} restarts did not converge")

    flags = []
    for name, part in (("noise_s", model.noise_s), ("noise_i", model.noise_i)):
        if part.mu < opts.noise_mode_floor:
            flags.append(f"{name}_modes_below_floor")
            logger.warning(f"Fitted {name} has mu={part.mu:.3g} below {opts.noise_mode_floor}; weakly identified")
    fitted_moments = model_moments(model, detected=True)
    for key, target in objective.targets().items():
        if abs(fitted_moments[key] - target) > settings.constraint_rtol * abs(target):
            flags.append(f"constraint_{key}_violated")

    photon_dist = joint_twb_distribution(model)
    summary = ReconstructionSummary(
        model=model,
        residual=best_fun,
        chi2=best_fun * shots,
        shots=shots,
        converged=True,
        restarts_converged=len(converged),
        eta_difference=model.eta_s - model.eta_i,
        derived=photon_statistics(photon_dist, model),
        flags=flags,
    )
    logger.info(f"Fit finished: residual={best_fun:.4g}, eta_s={model.eta_s:.4f}, eta_i={model.eta_i:.4f}")
    return ReconstructionResult(summary, photon_dist, detected_twb_pmf(model, objective.cutoffs))


def fit_model(h: JointHistogram, opts: Optional[FitOptions] = None) -> ReconstructionResult:
    opts = opts or FitOptions()
    if h.shots < opts.min_shots:
        raise EmptyDataError(f"fit needs at least {opts.min_shots} shots, got {h.shots}")
    try:
        return fit_distribution(h.counts / h.shots, h.shots, opts)
    except Exception as e:
        logger.error(f"Reconstruction failed: {e}")
        raise
