"""Exact photon-counting kernels.

Mandel-Rice (multimode thermal) laws, the three-component twin-beam joint law,
the Bernoulli detection channel, sum/difference projections, the Poissonian
reference and the Bhattacharyya fidelity. Everything is evaluated in log space
so real mode numbers down to ~1e-4 stay representable.
"""

import logging
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.linalg import toeplitz
from scipy.special import gammaln, xlog1py, xlogy
from scipy.stats import nbinom, poisson

from config import settings
from models import Distribution1D, JointDistribution, ModeParams, TwbModel
from .errors import ParameterDomainError

logger = logging.getLogger(__name__)

Cutoffs = Tuple[int, int]


def _check_count(n) -> int:
    if isinstance(n, (bool, np.bool_)) or int(n) != n or n < 0:
        raise ParameterDomainError(f"count must be a non-negative integer, got {n!r}")
    return int(n)


def _check_mode(p: ModeParams) -> Tuple[float, float]:
    mu, b = float(p.mu), float(p.b)
    if not (np.isfinite(mu) and mu > 0):
        raise ParameterDomainError(f"mode number must be positive and finite, got {mu}")
    if not (np.isfinite(b) and b >= 0):
        raise ParameterDomainError(f"mean photons per mode must be non-negative, got {b}")
    return mu, b


def _check_eta(eta: float) -> float:
    eta = float(eta)
    if not 0.0 <= eta <= 1.0:
        raise ParameterDomainError(f"detection efficiency must lie in [0, 1], got {eta}")
    return eta


def check_model(m: TwbModel) -> None:
    """Re-check a model that may have bypassed pydantic validation"""
    for part in (m.paired, m.noise_s, m.noise_i):
        _check_mode(part)
    _check_eta(m.eta_s)
    _check_eta(m.eta_i)


def _log_mode_combinatorial(n: np.ndarray, mu: float) -> np.ndarray:
    # log Γ(n+μ) / (n! Γ(μ))
    return gammaln(n + mu) - gammaln(n + 1.0) - gammaln(mu)


def _mandel_rice_array(n: np.ndarray, mu: float, b: float) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    if b == 0.0:
        return np.where(n == 0, 1.0, 0.0)
    log_p = _log_mode_combinatorial(n, mu) + (xlogy(n, b) - (n + mu) * np.log1p(b))
    return np.exp(log_p)


def mandel_rice_pmf(n: int, p: ModeParams) -> float:
    """p_MR(n; μ, b) = Γ(n+μ)/(n! Γ(μ)) b^n / (1+b)^(n+μ)"""
    n = _check_count(n)
    mu, b = _check_mode(p)
    return float(_mandel_rice_array(np.array(n), mu, b))


def mandel_rice_vector(n_max: int, p: ModeParams) -> np.ndarray:
    n_max = _check_count(n_max)
    mu, b = _check_mode(p)
    return _mandel_rice_array(np.arange(n_max + 1), mu, b)


def multithermal_pmf(n: int, mean: float, mu: float) -> float:
    """Multimode thermal law written through its mean photon number N.

    N = 0 is taken as the vacuum.
    """
    n = _check_count(n)
    if not (np.isfinite(mu) and mu > 0):
        raise ParameterDomainError(f"mode number must be positive and finite, got {mu}")
    if not (np.isfinite(mean) and mean >= 0):
        raise ParameterDomainError(f"mean photon number must be non-negative, got {mean}")
    if mean == 0:
        return 1.0 if n == 0 else 0.0
    log_p = _log_mode_combinatorial(np.array(float(n)), mu) + (
        -mu * np.log1p(mean / mu) - xlog1py(n, mu / mean)
    )
    return float(np.exp(log_p))


def mandel_rice_cutoff(p: ModeParams, tail_tol: Optional[float] = None) -> int:
    """Smallest N with P(n > N) <= tail_tol, capped at settings.max_cutoff"""
    mu, b = _check_mode(p)
    tail_tol = settings.tail_tol if tail_tol is None else tail_tol
    if b == 0.0:
        return 0
    q = 1.0 / (1.0 + b)
    guess = nbinom.isf(tail_tol, mu, q)
    if not np.isfinite(guess) or guess > settings.max_cutoff:
        logger.warning(f"Cutoff for mu={mu}, b={b} exceeds {settings.max_cutoff}; capping")
        return settings.max_cutoff
    cutoff = max(int(guess), 0)
    while cutoff < settings.max_cutoff and nbinom.sf(cutoff, mu, q) > tail_tol:
        cutoff += 1
    return cutoff


def joint_cutoffs(m: TwbModel, tail_tol: Optional[float] = None) -> Cutoffs:
    """Per-axis cutoffs of the component sums, union bound at tail_tol/3 per component"""
    check_model(m)
    tail_tol = settings.tail_tol if tail_tol is None else tail_tol
    paired = mandel_rice_cutoff(m.paired, tail_tol / 3)
    n_s = min(paired + mandel_rice_cutoff(m.noise_s, tail_tol / 3), settings.max_cutoff)
    n_i = min(paired + mandel_rice_cutoff(m.noise_i, tail_tol / 3), settings.max_cutoff)
    return n_s, n_i


def _lower_toeplitz(column: np.ndarray, width: int) -> np.ndarray:
    # T[a, n] = column[a - n] for a >= n, else 0
    return toeplitz(column, np.zeros(width))


def joint_twb_pmf(n_s: int, n_i: int, m: TwbModel) -> float:
    """Photon-level joint law p(n_s, n_i) of the three-component model; efficiencies ignored"""
    n_s = _check_count(n_s)
    n_i = _check_count(n_i)
    check_model(m)
    n = np.arange(min(n_s, n_i) + 1)
    terms = (
        _mandel_rice_array(n, m.paired.mu, m.paired.b)
        * _mandel_rice_array(n_s - n, m.noise_s.mu, m.noise_s.b)
        * _mandel_rice_array(n_i - n, m.noise_i.mu, m.noise_i.b)
    )
    return float(terms.sum())


def joint_twb_distribution(m: TwbModel, cutoffs: Optional[Cutoffs] = None) -> JointDistribution:
    """The whole photon-level joint law up to the cutoffs"""
    check_model(m)
    n_s, n_i = joint_cutoffs(m) if cutoffs is None else cutoffs
    n_pairs = min(n_s, n_i)
    p_pairs = mandel_rice_vector(n_pairs, m.paired)
    t_s = _lower_toeplitz(mandel_rice_vector(n_s, m.noise_s), n_pairs + 1)
    t_i = _lower_toeplitz(mandel_rice_vector(n_i, m.noise_i), n_pairs + 1)
    probs = (t_s * p_pairs) @ t_i.T
    return JointDistribution(probs, label="photons")


def bernoulli_coefficient(m: int, n: int, eta: float) -> float:
    """B(m, n) = C(n, m) η^m (1-η)^(n-m); zero when m > n"""
    m = _check_count(m)
    n = _check_count(n)
    eta = _check_eta(eta)
    if m > n:
        return 0.0
    log_b = (
        gammaln(n + 1.0) - gammaln(m + 1.0) - gammaln(n - m + 1.0)
        + xlogy(m, eta) + xlog1py(n - m, -eta)
    )
    return float(np.exp(log_b))


def bernoulli_matrix(n_max: int, eta: float, m_max: Optional[int] = None) -> np.ndarray:
    """B[m, n] for m = 0..m_max and n = 0..n_max"""
    eta = _check_eta(eta)
    m_max = n_max if m_max is None else m_max
    if eta == 1.0:
        return np.eye(m_max + 1, n_max + 1)
    if eta == 0.0:
        out = np.zeros((m_max + 1, n_max + 1))
        out[0, :] = 1.0
        return out
    m = np.arange(m_max + 1, dtype=float)[:, None]
    n = np.arange(n_max + 1, dtype=float)[None, :]
    valid = n >= m
    k = np.where(valid, n - m, 0.0)
    log_b = (
        gammaln(n + 1.0) - gammaln(m + 1.0) - gammaln(k + 1.0)
        + xlogy(m, eta) + xlog1py(k, -eta)
    )
    return np.where(valid, np.exp(np.where(valid, log_b, -np.inf)), 0.0)


def thin_distribution(p: Distribution1D, eta: float) -> Distribution1D:
    """Bernoulli channel on a one-dimensional count distribution"""
    if p.offset:
        raise ParameterDomainError("cannot thin a signed (difference) distribution")
    n_max = p.probs.size - 1
    return Distribution1D(bernoulli_matrix(n_max, eta) @ p.probs)


def detect_transform(p: JointDistribution, eta_s: float, eta_i: float) -> JointDistribution:
    """f(m_s, m_i) = Σ B_s(m_s, n_s) B_i(m_i, n_i) p(n_s, n_i)"""
    n_s, n_i = p.cutoffs
    b_s = bernoulli_matrix(n_s, eta_s)
    b_i = bernoulli_matrix(n_i, eta_i)
    return JointDistribution(b_s @ p.probs @ b_i.T, label="detected")


def detected_twb_pmf(m: TwbModel, cutoffs: Optional[Cutoffs] = None) -> JointDistribution:
    """Detected-level joint law built without the photon-level matrix.

    Pairs are thinned pair by pair; each noise part stays Mandel-Rice with
    b -> ηb after thinning, and is convolved in afterwards. `cutoffs` bound the
    detected counts; the pair sum always runs to the paired-part cutoff.
    """
    check_model(m)
    n_s, n_i = joint_cutoffs(m) if cutoffs is None else cutoffs
    n_pairs = mandel_rice_cutoff(m.paired, settings.tail_tol / 3)
    p_pairs = mandel_rice_vector(n_pairs, m.paired)
    b_s = bernoulli_matrix(n_pairs, m.eta_s, m_max=n_s)
    b_i = bernoulli_matrix(n_pairs, m.eta_i, m_max=n_i)
    paired = (b_s * p_pairs) @ b_i.T

    noise_s = _mandel_rice_array(np.arange(n_s + 1), m.noise_s.mu, m.eta_s * m.noise_s.b)
    noise_i = _mandel_rice_array(np.arange(n_i + 1), m.noise_i.mu, m.eta_i * m.noise_i.b)
    conv_s = _lower_toeplitz(noise_s, n_s + 1)
    conv_i = _lower_toeplitz(noise_i, n_i + 1)
    return JointDistribution(conv_s @ paired @ conv_i.T, label="detected")


def model_moments(m: TwbModel, detected: bool = True) -> Dict[str, float]:
    """Analytic means, variances and covariance of the photon or detected law"""
    check_model(m)
    mean_s = m.paired.mean + m.noise_s.mean
    mean_i = m.paired.mean + m.noise_i.mean
    var_s = m.paired.variance + m.noise_s.variance
    var_i = m.paired.variance + m.noise_i.variance
    cov = m.paired.variance
    if detected:
        var_s = m.eta_s ** 2 * var_s + m.eta_s * (1 - m.eta_s) * mean_s
        var_i = m.eta_i ** 2 * var_i + m.eta_i * (1 - m.eta_i) * mean_i
        mean_s, mean_i = m.eta_s * mean_s, m.eta_i * mean_i
        cov = m.eta_s * m.eta_i * cov
    return {"mean_s": mean_s, "mean_i": mean_i, "var_s": var_s, "var_i": var_i, "cov": cov}


def sum_marginal(p: JointDistribution) -> Distribution1D:
    """f_+(m) = Σ δ(m, m_s + m_i) f(m_s, m_i)"""
    rows, cols = np.indices(p.probs.shape)
    probs = np.bincount((rows + cols).ravel(), weights=p.probs.ravel(),
                        minlength=sum(p.probs.shape) - 1)
    return Distribution1D(probs)


def difference_marginal(p: JointDistribution) -> Distribution1D:
    """f_-(d) for d = m_s - m_i; index 0 holds d = -(idler cutoff)"""
    rows, cols = np.indices(p.probs.shape)
    offset = p.probs.shape[1] - 1
    probs = np.bincount((rows - cols + offset).ravel(), weights=p.probs.ravel(),
                        minlength=sum(p.probs.shape) - 1)
    return Distribution1D(probs, offset=offset)


def _poisson_cutoff(mean: float, tail_tol: float) -> int:
    if mean == 0:
        return 0
    cutoff = max(int(poisson.isf(tail_tol, mean)), 0)
    while cutoff < settings.max_cutoff and poisson.sf(cutoff, mean) > tail_tol:
        cutoff += 1
    return min(cutoff, settings.max_cutoff)


def _poisson_vector(n_max: int, mean: float) -> np.ndarray:
    if mean == 0:
        out = np.zeros(n_max + 1)
        out[0] = 1.0
        return out
    return poisson.pmf(np.arange(n_max + 1), mean)


def poisson_reference(mean_s: float, mean_i: float,
                      cutoffs: Optional[Cutoffs] = None) -> JointDistribution:
    """Two independent Poissonian fields with the given means"""
    for mean in (mean_s, mean_i):
        if not (np.isfinite(mean) and mean >= 0):
            raise ParameterDomainError(f"Poisson mean must be non-negative, got {mean}")
    if cutoffs is None:
        cutoffs = (_poisson_cutoff(mean_s, settings.tail_tol),
                   _poisson_cutoff(mean_i, settings.tail_tol))
    probs = np.outer(_poisson_vector(cutoffs[0], mean_s), _poisson_vector(cutoffs[1], mean_i))
    return JointDistribution(probs, label="detected")


def poisson_reference_like(p: JointDistribution, cutoffs: Optional[Cutoffs] = None) -> JointDistribution:
    mean_s, mean_i = p.means()
    reference = poisson_reference(mean_s, mean_i, cutoffs)
    return JointDistribution(reference.probs, label=p.label)


def fidelity(p: Distribution1D, q: Distribution1D) -> float:
    """Bhattacharyya overlap Σ sqrt(p q) over the common support"""
    low = max(-p.offset, -q.offset)
    high = min(p.probs.size - 1 - p.offset, q.probs.size - 1 - q.offset)
    if high < low:
        return 0.0
    p_part = np.clip(p.probs[low + p.offset: high + p.offset + 1], 0.0, None)
    q_part = np.clip(q.probs[low + q.offset: high + q.offset + 1], 0.0, None)
    return float(min(np.sqrt(p_part * q_part).sum(), 1.0))
