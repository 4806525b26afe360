"""Non-classicality criteria on joint detected-photon statistics."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from config import settings
from models import (
    CriteriaFlags,
    CriteriaReport,
    Distribution1D,
    JointDistribution,
    JointHistogram,
    StandardErrors,
)
from .errors import (
    ClassicalDataError,
    EmptyDataError,
    ParameterDomainError,
    SubPoissonianMarginalError,
    UndefinedStatisticError,
)
from .streams import substream

logger = logging.getLogger(__name__)

# (j, k) orders of <m_s^j m_i^k> used anywhere below
_ORDERS = [(1, 0), (0, 1), (2, 0), (0, 2), (1, 1), (1, 2), (2, 1), (2, 2), (1, 3), (3, 1)]


class MomentTable:
    """Raw moments of a count matrix, summed in integer space when possible"""

    def __init__(self, weights: np.ndarray, total: float):
        if total <= 0:
            raise EmptyDataError("no shots to compute moments from")
        self.weights = weights
        self.total = total
        self._cache: Dict[Tuple[int, int], float] = {}
        exact = np.issubdtype(weights.dtype, np.integer)
        dtype = np.int64 if exact else float
        self._m_s = np.arange(weights.shape[0], dtype=dtype)
        self._m_i = np.arange(weights.shape[1], dtype=dtype)
        diff = self._m_s[:, None] - self._m_i[None, :]
        self.diff_mean = float((weights * diff).sum()) / total
        self.diff_square = float((weights * diff * diff).sum()) / total

    @classmethod
    def from_histogram(cls, h: JointHistogram) -> "MomentTable":
        return cls(h.counts, h.shots)

    @classmethod
    def from_distribution(cls, p: JointDistribution) -> "MomentTable":
        return cls(p.probs, p.total())

    def raw(self, j: int, k: int) -> float:
        if (j, k) not in self._cache:
            # s^j @ W @ i^k, exact in int64 for histograms
            value = (self._m_s ** j) @ self.weights @ (self._m_i ** k)
            self._cache[(j, k)] = float(value) / self.total
        return self._cache[(j, k)]

    @property
    def means(self) -> Tuple[float, float]:
        return self.raw(1, 0), self.raw(0, 1)

    @property
    def variances(self) -> Tuple[float, float]:
        mean_s, mean_i = self.means
        return self.raw(2, 0) - mean_s ** 2, self.raw(0, 2) - mean_i ** 2

    @property
    def covariance(self) -> float:
        mean_s, mean_i = self.means
        return self.raw(1, 1) - mean_s * mean_i

    def g(self, j: int, k: int) -> float:
        mean_s, mean_i = self.means
        return self.raw(j, k) / (mean_s ** j * mean_i ** k)


def _correlation(t: MomentTable) -> float:
    var_s, var_i = t.variances
    if var_s <= 0 or var_i <= 0:
        raise UndefinedStatisticError("correlation coefficient needs non-zero variances")
    return float(np.clip(t.covariance / math.sqrt(var_s * var_i), -1.0, 1.0))


def _noise_reduction(t: MomentTable) -> float:
    total_mean = sum(t.means)
    if total_mean <= 0:
        raise UndefinedStatisticError("noise reduction factor needs a non-zero mean count")
    variance = max(t.diff_square - t.diff_mean ** 2, 0.0)
    return variance / total_mean


def _schwarz(t: MomentTable) -> float:
    """<m_s m_i> over the normally ordered second moments <m(m-1)>"""
    second_s = t.raw(2, 0) - t.raw(1, 0)
    second_i = t.raw(0, 2) - t.raw(0, 1)
    if second_s <= 0 or second_i <= 0:
        raise UndefinedStatisticError("Schwarz ratio needs non-zero factorial second moments")
    return t.raw(1, 1) / math.sqrt(second_s * second_i)


def _schwarz_raw(t: MomentTable) -> float:
    second_s, second_i = t.raw(2, 0), t.raw(0, 2)
    if second_s <= 0 or second_i <= 0:
        raise UndefinedStatisticError("Schwarz ratio needs non-zero second moments")
    return t.raw(1, 1) / math.sqrt(second_s * second_i)


def _higher_order(t: MomentTable) -> float:
    mean_s, mean_i = t.means
    if mean_s <= 0 or mean_i <= 0 or t.raw(1, 1) <= 0:
        raise UndefinedStatisticError("higher-order criterion needs non-zero means and <m_s m_i>")
    g11 = t.g(1, 1)
    g13 = 0.5 * (t.g(1, 3) + t.g(3, 1))
    g12 = 0.5 * (t.g(1, 2) + t.g(2, 1))
    product = mean_s * mean_i
    return product * (t.g(2, 2) - g13) / g11 + math.sqrt(product) * g12 / g11


def joint_moments(h: JointHistogram, j: int, k: int) -> float:
    """Raw moment <m_s^j m_i^k> over all shots"""
    if not (0 <= j <= 4 and 0 <= k <= 4):
        raise ParameterDomainError(f"moment orders must lie in 0..4, got ({j}, {k})")
    return MomentTable.from_histogram(h).raw(j, k)


def correlation_coefficient(h: JointHistogram) -> float:
    return _correlation(MomentTable.from_histogram(h))


def noise_reduction(h: JointHistogram) -> float:
    """R = var(m_s - m_i) / <m_s + m_i>"""
    return _noise_reduction(MomentTable.from_histogram(h))


def noise_reduction_theory(mean_s: float, mean_i: float, eta: float, mu: float) -> float:
    """Noise reduction factor predicted from the means, efficiency and mode number"""
    if mean_s < 0 or mean_i < 0 or mean_s + mean_i == 0:
        raise ParameterDomainError("means must be non-negative and not both zero")
    if not 0 <= eta <= 1:
        raise ParameterDomainError(f"efficiency must lie in [0, 1], got {eta}")
    if not mu > 0:
        raise ParameterDomainError(f"mode number must be positive, got {mu}")
    total = mean_s + mean_i
    product = mean_s * mean_i
    return 1.0 - 2.0 * eta * math.sqrt(product) / total + product ** 2 / (mu * total)


def exact_noise_reduction(p: JointDistribution) -> float:
    """R of an exact (photon or detected) distribution"""
    return _noise_reduction(MomentTable.from_distribution(p))


def schwarz_ratio(h: JointHistogram, normal_order: bool = True) -> float:
    """S = <m_s m_i> / sqrt(<m_s^2><m_i^2>); S > 1 is nonclassical.

    With normal_order the second moments are the factorial ones <m(m-1)>, the
    form in which the inequality holds for every classical field. The plain
    ratio never exceeds 1 and is kept for comparison.
    """
    table = MomentTable.from_histogram(h)
    return _schwarz(table) if normal_order else _schwarz_raw(table)


def higher_order_H(h: JointHistogram) -> float:
    """Higher-order criterion built from symmetrized g^{jk}; H > 1 is nonclassical"""
    return _higher_order(MomentTable.from_histogram(h))


def marginal(h: JointHistogram, arm: str) -> Distribution1D:
    axis = {"s": 1, "i": 0}.get(arm)
    if axis is None:
        raise ParameterDomainError(f"arm must be 's' or 'i', got {arm!r}")
    if h.shots < 1:
        raise EmptyDataError("empty histogram")
    return Distribution1D(h.counts.sum(axis=axis) / h.shots)


def fano(marg: Union[Distribution1D, JointHistogram], arm: str = "s") -> float:
    """Variance over mean"""
    if isinstance(marg, JointHistogram):
        marg = marginal(marg, arm)
    mean = marg.mean()
    if mean <= 0:
        raise UndefinedStatisticError("Fano factor needs a non-zero mean")
    return marg.variance() / mean


def mode_estimate_from_moments(mean: float, variance: float) -> float:
    excess = variance - mean
    if excess <= 0:
        raise SubPoissonianMarginalError(
            f"mode estimate needs a super-Poissonian marginal (variance {variance:.6g} <= mean {mean:.6g})"
        )
    return mean ** 2 / excess


def mode_estimate(marg: Union[Distribution1D, JointHistogram], arm: str = "s") -> float:
    """μ = <m>² / (σ² - <m>)"""
    if isinstance(marg, JointHistogram):
        marg = marginal(marg, arm)
    return mode_estimate_from_moments(marg.mean(), marg.variance())


def eta_from_R(h: JointHistogram) -> float:
    """Common-efficiency estimate 1 - R, valid for an ideal twin beam"""
    R = noise_reduction(h)
    if R >= 1:
        raise ClassicalDataError(f"R = {R:.6g} >= 1; no efficiency can be inferred")
    return 1.0 - R


def _verdict(value: Optional[float], above_is_nonclassical: bool,
             error: Optional[float] = None) -> str:
    if value is None or value == 1.0:
        return "inconclusive"
    if error is not None and np.isfinite(error) and abs(value - 1.0) < error:
        return "inconclusive"
    nonclassical = value > 1.0 if above_is_nonclassical else value < 1.0
    return "nonclassical" if nonclassical else "classical"


def _safe(fn, table: MomentTable, notes: Optional[List[str]] = None, name: str = ""):
    try:
        return fn(table)
    except UndefinedStatisticError as e:
        if notes is not None:
            notes.append(f"{name} undefined: {e}")
        return None


def _bootstrap(h: JointHistogram, resamples: int, seed: int,
               max_workers: Optional[int] = None) -> StandardErrors:
    probs = (h.counts / h.shots).ravel()

    def one(index: int) -> List[float]:
        rng = substream(seed, index)
        counts = rng.multinomial(h.shots, probs).reshape(h.counts.shape)
        table = MomentTable(counts.astype(np.int64), h.shots)
        values = [_safe(fn, table) for fn in (_correlation, _noise_reduction, _schwarz, _higher_order)]
        return [np.nan if v is None else v for v in values]

    with ThreadPoolExecutor(max_workers=max_workers or settings.max_workers) as pool:
        samples = np.array(list(pool.map(one, range(resamples))))

    errors = []
    for column in samples.T:
        finite = column[np.isfinite(column)]
        errors.append(float(np.std(finite, ddof=1)) if finite.size > 1 else None)
    return StandardErrors(C=errors[0], R=errors[1], S=errors[2], H=errors[3], resamples=resamples)


def _report(table: MomentTable, shots: int, marg_s: Distribution1D, marg_i: Distribution1D,
            eta: Optional[float], errors: Optional[StandardErrors]) -> CriteriaReport:
    notes: List[str] = []
    mean_s, mean_i = table.means
    C = _safe(_correlation, table, notes, "C")
    R = _safe(_noise_reduction, table, notes, "R")
    S = _safe(_schwarz, table, notes, "S")
    S_raw = _safe(_schwarz_raw, table)
    H = _safe(_higher_order, table, notes, "H")

    fanos, modes = [], []
    for name, marg in (("signal", marg_s), ("idler", marg_i)):
        try:
            fanos.append(fano(marg))
        except UndefinedStatisticError as e:
            notes.append(f"Fano factor of {name} undefined: {e}")
            fanos.append(None)
        try:
            modes.append(mode_estimate(marg))
        except UndefinedStatisticError as e:
            notes.append(f"mode estimate of {name} undefined: {e}")
            modes.append(None)

    eta_est = None
    if R is not None and R < 1:
        eta_est = 1.0 - R

    R_theory = None
    known_modes = [mu for mu in modes if mu is not None]
    eta_for_theory = eta if eta is not None else eta_est
    if eta_for_theory is not None and known_modes and mean_s + mean_i > 0:
        R_theory = noise_reduction_theory(mean_s, mean_i, eta_for_theory, float(np.mean(known_modes)))

    sub_shot_noise = R is not None and R < 1
    if eta is not None and R is not None:
        sub_shot_noise = (1.0 - eta) <= R < 1.0
        if R < 1.0 - eta:
            notes.append(f"R below 1 - eta ({1.0 - eta:.4g}); supplied efficiency may be too low")
        if eta_est is not None and eta_est < eta:
            notes.append(f"eta_est {eta_est:.4g} below supplied efficiency {eta:.4g}: noise biases 1 - R low")

    flags = CriteriaFlags(
        R=R is not None and R < 1.0,
        S=S is not None and S > 1.0,
        H=H is not None and H > 1.0,
    )
    verdicts = {
        "R": _verdict(R, False, errors.R if errors else None),
        "S": _verdict(S, True, errors.S if errors else None),
        "H": _verdict(H, True, errors.H if errors else None),
    }
    return CriteriaReport(
        shots=shots, mean_s=mean_s, mean_i=mean_i, C=C, R=R, R_theory=R_theory, S=S, S_raw=S_raw, H=H,
        fano_s=fanos[0], fano_i=fanos[1], mu_est_s=modes[0], mu_est_i=modes[1], eta_est=eta_est,
        flags=flags, verdicts=verdicts, sub_shot_noise=sub_shot_noise,
        standard_errors=errors, notes=notes,
    )


def evaluate_criteria(h: JointHistogram, eta: Optional[float] = None, bootstrap: int = 0,
                      seed: int = 0, max_workers: Optional[int] = None) -> CriteriaReport:
    """Full criteria report for a histogram, with optional bootstrap standard errors"""
    try:
        table = MomentTable.from_histogram(h)
        errors = None
        if bootstrap:
            if bootstrap < 2:
                raise ParameterDomainError("bootstrap needs at least 2 resamples")
            logger.info(f"Bootstrapping criteria with {bootstrap} resamples, seed {seed}")
            errors = _bootstrap(h, bootstrap, seed, max_workers)
        report = _report(table, h.shots, marginal(h, "s"), marginal(h, "i"), eta, errors)
        logger.info(f"Criteria on {h.shots} shots: flags R={report.flags.R} S={report.flags.S} H={report.flags.H}")
        return report
    except Exception as e:
        logger.error(f"Criteria evaluation failed: {e}")
        raise


def exact_criteria(p: JointDistribution, eta: Optional[float] = None) -> CriteriaReport:
    """Same statistics evaluated on an exact distribution; shots is reported as 0"""
    table = MomentTable.from_distribution(p)
    return _report(table, 0, p.marginal_s(), p.marginal_i(), eta, None)
