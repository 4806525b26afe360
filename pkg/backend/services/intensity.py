"""Quasi-distributions of integrated intensities.

Mandel's detection formula p(n) = ∫ e^{-W} W^n/n! P(W) dW is inverted with a
Laguerre series P(W) = Σ a_k L_k(W), a_k = Σ_j C(k,j) (-1)^j p(j). The
coefficients only use p(0..K). The forward formula is kept as a quadrature
check.
"""

import logging
import math
from typing import Optional, Tuple, Union

import mpmath
import numpy as np
from scipy.integrate import simpson
from scipy.linalg import toeplitz
from scipy.special import binom, comb, gammainccinv, gammaincc, gammaln, xlogy

from config import settings
from models import (
    Distribution1D,
    IntensityGrid,
    IntensityProfile,
    JointDistribution,
    JointHistogram,
    ModeParams,
    NegativityReport,
    TwbModel,
)
from .contours import zero_contours
from .distributions import check_model, mandel_rice_vector
from .errors import (
    CoverageError,
    ParameterDomainError,
    PrecisionError,
    SingularQuasiDistributionError,
)

logger = logging.getLogger(__name__)

Order = Union[int, Tuple[int, int], None]


def default_order(probs: np.ndarray) -> int:
    """Largest count with probability above tail_tol, capped at max_series_order"""
    above = np.nonzero(np.asarray(probs) > settings.tail_tol)[0]
    order = int(above[-1]) if above.size else 0
    return min(order, settings.max_series_order)


def default_axis(mean: float, points: Optional[int] = None) -> np.ndarray:
    points = points or settings.grid_points
    return np.linspace(0.0, settings.grid_span_factor * (mean + 1.0), points)


def _sign_binomial(order: int, width: int) -> np.ndarray:
    # T[k, j] = C(k, j) (-1)^j
    k = np.arange(order + 1)[:, None]
    j = np.arange(width)[None, :]
    return comb(k, j) * np.where(j % 2 == 0, 1.0, -1.0)


def _padded(probs: np.ndarray, order: int) -> np.ndarray:
    out = np.zeros(order + 1)
    size = min(order + 1, probs.size)
    out[:size] = probs[:size]
    return out


def _compensated_transform(matrix: np.ndarray, order: int) -> np.ndarray:
    """T @ matrix along the first axis, each entry summed with math.fsum"""
    t = _sign_binomial(order, matrix.shape[0])
    out = np.empty((order + 1, matrix.shape[1]))
    for k in range(order + 1):
        terms = t[k][:, None] * matrix
        for c in range(matrix.shape[1]):
            out[k, c] = math.fsum(terms[: k + 1, c])
    return out


def _extended_transform(matrix: np.ndarray, order: int) -> np.ndarray:
    with mpmath.workdps(settings.extended_precision_digits):
        values = [[mpmath.mpf(float(v)) for v in row] for row in matrix]
        out = np.empty((order + 1, matrix.shape[1]))
        for k in range(order + 1):
            signs = [mpmath.binomial(k, j) * (-1) ** j for j in range(k + 1)]
            for c in range(matrix.shape[1]):
                out[k, c] = float(mpmath.fsum(signs[j] * values[j][c] for j in range(k + 1)))
    return out


def _error_estimate(abs_terms: np.ndarray, coeffs: np.ndarray) -> float:
    """Worst relative rounding error over the coefficients, each measured against max(|a|, floor)"""
    scale = np.maximum(np.abs(coeffs), settings.precision_floor)
    return float(np.max(np.finfo(float).eps * abs_terms / scale))


def _resolve_precision(estimate: float, exact_path) -> Optional[np.ndarray]:
    """None when the float result stands, otherwise the extended-precision result"""
    if estimate <= settings.precision_threshold:
        return None
    if not settings.extended_precision:
        raise PrecisionError(
            f"alternating sums lose too many digits (relative error ~{estimate:.2g}); "
            "lower the series order or enable extended precision"
        )
    logger.warning(f"Cancellation estimate {estimate:.2g}; recomputing coefficients with mpmath")
    return exact_path()


def laguerre_series_coeffs_1d(p: Distribution1D, order: Optional[int] = None) -> np.ndarray:
    """a_k = Σ_j C(k,j) (-1)^j p(j) for k = 0..order"""
    if p.offset:
        raise ParameterDomainError("coefficients need a count distribution, not a difference distribution")
    order = default_order(p.probs) if order is None else int(order)
    if order < 0:
        raise ParameterDomainError(f"series order must be non-negative, got {order}")
    column = _padded(p.probs, order)[:, None]
    coeffs = _compensated_transform(column, order)[:, 0]
    abs_terms = np.abs(_sign_binomial(order, order + 1)) @ np.abs(column[:, 0])
    extended = _resolve_precision(_error_estimate(abs_terms, coeffs),
                                  lambda: _extended_transform(column, order)[:, 0])
    return coeffs if extended is None else extended


def laguerre_series_coeffs_2d(p: JointDistribution, order: Order = None) -> np.ndarray:
    """a_kl = Σ_{j,m} C(k,j) C(l,m) (-1)^{j+m} p(j,m), done as two 1D passes"""
    order_s, order_i = _orders(p, order)
    probs = np.zeros((order_s + 1, order_i + 1))
    rows = min(order_s + 1, p.probs.shape[0])
    cols = min(order_i + 1, p.probs.shape[1])
    probs[:rows, :cols] = p.probs[:rows, :cols]

    coeffs = _compensated_transform(_compensated_transform(probs, order_s).T, order_i).T
    t_s = np.abs(_sign_binomial(order_s, order_s + 1))
    t_i = np.abs(_sign_binomial(order_i, order_i + 1))
    abs_terms = t_s @ np.abs(probs) @ t_i.T
    extended = _resolve_precision(
        2.0 * _error_estimate(abs_terms, coeffs),
        lambda: _extended_transform(_extended_transform(probs, order_s).T, order_i).T,
    )
    return coeffs if extended is None else extended


def _orders(p: Optional[JointDistribution], order: Order) -> Tuple[int, int]:
    if order is None:
        return default_order(p.probs.sum(axis=1)), default_order(p.probs.sum(axis=0))
    if isinstance(order, (tuple, list)):
        order_s, order_i = int(order[0]), int(order[1])
    else:
        order_s = order_i = int(order)
    if order_s < 0 or order_i < 0:
        raise ParameterDomainError("series orders must be non-negative")
    return order_s, order_i


def laguerre_values(order: int, axis: np.ndarray) -> np.ndarray:
    """L_k(W) for k = 0..order by the three-term recurrence; shape (order+1, len(axis))"""
    axis = np.asarray(axis, dtype=float)
    out = np.empty((order + 1, axis.size))
    out[0] = 1.0
    if order >= 1:
        out[1] = 1.0 - axis
    for n in range(1, order):
        out[n + 1] = ((2 * n + 1 - axis) * out[n] - n * out[n - 1]) / (n + 1)
    return out


def _damped(coeffs: np.ndarray, damping: Optional[float]) -> np.ndarray:
    if damping is None:
        return coeffs
    if not 0 < damping <= 1:
        raise ParameterDomainError(f"damping must lie in (0, 1], got {damping}")
    powers = [damping ** np.arange(size) for size in coeffs.shape]
    if coeffs.ndim == 1:
        return coeffs * powers[0]
    return coeffs * np.outer(powers[0], powers[1])


def _check_singular(coeffs: np.ndarray, allow_singular: bool) -> bool:
    if coeffs.ndim == 1:
        tail = abs(coeffs[-1])
    else:
        tail = max(np.max(np.abs(coeffs[-1, :])), np.max(np.abs(coeffs[:, -1])))
    singular = bool(tail > settings.singular_threshold)
    if singular:
        message = (f"series coefficients do not decay (|a_K| = {tail:.3g}); "
                   "the quasi-distribution is singular or near-singular")
        if not allow_singular:
            raise SingularQuasiDistributionError(message)
        logger.warning(message)
    return singular


def invert_mandel_1d(p: Distribution1D, order: Optional[int] = None,
                     axis: Optional[np.ndarray] = None, damping: Optional[float] = None,
                     allow_singular: bool = False) -> IntensityProfile:
    order = default_order(p.probs) if order is None else int(order)
    axis = default_axis(p.mean()) if axis is None else np.asarray(axis, dtype=float)
    coeffs = _damped(laguerre_series_coeffs_1d(p, order), damping)
    singular = _check_singular(coeffs, allow_singular)
    values = coeffs @ laguerre_values(order, axis)
    return IntensityProfile(axis, values, order=order, damping=damping, singular=singular)


def invert_mandel_2d(p: JointDistribution, order: Order = None,
                     axes: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                     damping: Optional[float] = None, allow_singular: bool = False,
                     label: Optional[str] = None) -> IntensityGrid:
    """P(W_s, W_i) = Σ a_kl L_k(W_s) L_l(W_i) sampled on a grid"""
    order_s, order_i = _orders(p, order)
    if axes is None:
        mean_s, mean_i = p.means()
        axes = (default_axis(mean_s), default_axis(mean_i))
    axis_s, axis_i = (np.asarray(a, dtype=float) for a in axes)
    coeffs = _damped(laguerre_series_coeffs_2d(p, (order_s, order_i)), damping)
    singular = _check_singular(coeffs, allow_singular)
    values = laguerre_values(order_s, axis_s).T @ coeffs @ laguerre_values(order_i, axis_i)
    logger.info(f"Quasi-distribution on a {values.shape} grid, orders ({order_s}, {order_i})")
    return IntensityGrid(axis_s, axis_i, values, order=max(order_s, order_i), damping=damping,
                         singular=singular, label=label or p.label)


def detected_intensity_quasi(h: JointHistogram, order: Order = None,
                             axes: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                             damping: Optional[float] = None,
                             allow_singular: bool = False) -> IntensityGrid:
    """Quasi-distribution of the fictitious detected-photon field (unit efficiencies)"""
    return invert_mandel_2d(h.to_distribution(), order, axes, damping, allow_singular, label="detected")


def noise_transfer_coeffs(p: ModeParams, order: int) -> np.ndarray:
    """Power series of ((1-u)/(1+b-u))^μ up to u^order.

    Multiplying a Laguerre generating function by this series convolves the
    quasi-distribution with the gamma density of the noise part.
    """
    out = np.zeros(order + 1)
    if p.b == 0:
        out[0] = 1.0
        return out
    j = np.arange(order + 1)
    # (1-u)^μ and (1 - u/(1+b))^{-μ}
    falling = binom(p.mu, j) * np.where(j % 2 == 0, 1.0, -1.0)
    rising = np.exp(gammaln(p.mu + j) - gammaln(p.mu) - gammaln(j + 1.0) - j * np.log1p(p.b))
    return np.exp(-p.mu * np.log1p(p.b)) * np.convolve(falling, rising)[: order + 1]


def paired_series_coeffs(p: ModeParams, order: Tuple[int, int]) -> np.ndarray:
    """a_kl = Σ_n C(k,n) C(l,n) p(n) for a perfectly correlated part; every term is positive"""
    order_s, order_i = order
    n_max = min(order_s, order_i)
    weights = mandel_rice_vector(n_max, p)
    binom_s = np.abs(_sign_binomial(order_s, n_max + 1))
    binom_i = np.abs(_sign_binomial(order_i, n_max + 1))
    return (binom_s * weights) @ binom_i.T


def model_series_coeffs(m: TwbModel, order: Tuple[int, int]) -> np.ndarray:
    """Laguerre coefficients of the photon-level model: paired part times both noise transfer series"""
    order_s, order_i = order
    transfer_s = toeplitz(noise_transfer_coeffs(m.noise_s, order_s), np.zeros(order_s + 1))
    transfer_i = toeplitz(noise_transfer_coeffs(m.noise_i, order_i), np.zeros(order_i + 1))
    return transfer_s @ paired_series_coeffs(m.paired, order) @ transfer_i.T


def _model_orders(m: TwbModel, order: Order) -> Tuple[int, int]:
    if order is not None:
        return _orders(None, order)
    n_max = settings.max_series_order
    pairs = mandel_rice_vector(n_max, m.paired)
    return tuple(default_order(np.convolve(pairs, mandel_rice_vector(n_max, noise))[: n_max + 1])
                 for noise in (m.noise_s, m.noise_i))


def model_quasi_convolution(m: TwbModel, order: Order = None,
                            axes: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                            damping: Optional[float] = None,
                            allow_singular: bool = False) -> IntensityGrid:
    """Paired-part quasi-distribution convolved with the two classical noise densities.

    The convolution acts on the Laguerre coefficients, so no alternating sum
    over the full photon law is needed and high orders stay well conditioned.
    """
    check_model(m)
    order_s, order_i = _model_orders(m, order)
    if axes is None:
        mean_s = m.paired.mean + m.noise_s.mean
        mean_i = m.paired.mean + m.noise_i.mean
        axes = (default_axis(mean_s), default_axis(mean_i))
    axis_s, axis_i = (np.asarray(a, dtype=float) for a in axes)

    delta_arm = m.paired.b == 0 and (m.noise_s.b == 0 or m.noise_i.b == 0)
    if delta_arm:
        message = "a vacuum arm has a delta-like quasi-distribution"
        if not allow_singular:
            raise SingularQuasiDistributionError(message)
        logger.warning(message)

    coeffs = _damped(model_series_coeffs(m, (order_s, order_i)), damping)
    singular = _check_singular(coeffs, allow_singular) or delta_arm
    values = laguerre_values(order_s, axis_s).T @ coeffs @ laguerre_values(order_i, axis_i)
    logger.info(f"Convolution model on a {values.shape} grid, orders ({order_s}, {order_i})")
    return IntensityGrid(axis_s, axis_i, values, order=max(order_s, order_i), damping=damping,
                         singular=singular, label="photons")


def quadrature_weights(axis: np.ndarray) -> np.ndarray:
    """Romberg weights on uniform grids of 2^k + 1 points, Simpson weights otherwise"""
    axis = np.asarray(axis, dtype=float)
    n = axis.size
    steps = np.diff(axis)
    levels = int(round(math.log2(n - 1))) if n > 2 else 0
    uniform = np.allclose(steps, steps[0], rtol=1e-9, atol=0)
    if not (uniform and n > 2 and 2 ** levels + 1 == n):
        return simpson(np.eye(n), x=axis, axis=-1)

    h = steps[0]
    depth = min(levels, 6)
    table = []
    for level in range(levels - depth, levels + 1):
        stride = 2 ** (levels - level)
        trapezoid = np.zeros(n)
        trapezoid[::stride] = h * stride
        trapezoid[0] = trapezoid[-1] = h * stride / 2
        table.append(trapezoid)
    for k in range(1, depth + 1):
        table = [table[j] + (table[j] - table[j - 1]) / (4 ** k - 1) for j in range(1, len(table))]
    return table[-1]


def coverage_wmax(degree: int, tol: Optional[float] = None) -> float:
    """Smallest W_max leaving at most `tol` of the degree-d Mandel kernel mass outside the grid"""
    tol = settings.coverage_tol if tol is None else tol
    return float(gammainccinv(degree + 1, tol))


def _mandel_kernel(n_max: int, axis: np.ndarray) -> np.ndarray:
    # K[n, i] = e^{-W_i} W_i^n / n!
    n = np.arange(n_max + 1)[:, None]
    return np.exp(-axis[None, :] + xlogy(n, axis[None, :]) - gammaln(n + 1.0))


def _check_coverage(axis: np.ndarray, degree: int) -> None:
    tail = float(gammaincc(degree + 1, axis[-1]))
    if tail > settings.coverage_tol:
        raise CoverageError(
            f"grid ends at W={axis[-1]:.4g} but the kernel of degree {degree} leaves {tail:.2g} "
            f"outside; extend W_max to at least {coverage_wmax(degree):.4g}"
        )


def forward_mandel_check(grid: Union[IntensityGrid, IntensityProfile],
                         n_max: Optional[int] = None) -> Union[Distribution1D, JointDistribution]:
    """p(n) = ∫ e^{-W} W^n/n! P(W) dW by quadrature, for n = 0..n_max"""
    if grid.singular:
        logger.warning("Forward check on a grid flagged singular")
    if isinstance(grid, IntensityProfile):
        n_max = grid.order if n_max is None else n_max
        if n_max is None:
            raise ParameterDomainError("n_max is required for samples without a series order")
        _check_coverage(grid.axis, n_max + (grid.order or 0))
        weights = quadrature_weights(grid.axis)
        return Distribution1D(_mandel_kernel(n_max, grid.axis) @ (weights * grid.values))

    n_max = grid.order if n_max is None else n_max
    if n_max is None:
        raise ParameterDomainError("n_max is required for samples without a series order")
    degree = n_max + (grid.order or 0)
    _check_coverage(grid.axis_s, degree)
    _check_coverage(grid.axis_i, degree)
    weighted = grid.values * np.outer(quadrature_weights(grid.axis_s), quadrature_weights(grid.axis_i))
    probs = _mandel_kernel(n_max, grid.axis_s) @ weighted @ _mandel_kernel(n_max, grid.axis_i).T
    return JointDistribution(probs, label=grid.label)


def _negative_orientation(grid: IntensityGrid, threshold: float) -> Optional[float]:
    rows, cols = np.nonzero(grid.values < -threshold)
    if rows.size < 2:
        return None
    points = np.stack([grid.axis_s[rows], grid.axis_i[cols]])
    covariance = np.cov(points)
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    major = eigenvectors[:, np.argmax(eigenvalues)]
    return float(np.degrees(np.arctan2(major[1], major[0])) % 180.0)


def negativity_report(grid: IntensityGrid, eps_neg: Optional[float] = None) -> NegativityReport:
    """Depth, extent, zero contours and orientation of the negative regions"""
    eps_neg = settings.eps_neg if eps_neg is None else eps_neg
    values = grid.values
    i, j = np.unravel_index(np.argmin(values), values.shape)
    return NegativityReport(
        min_value=float(values[i, j]),
        min_location=(float(grid.axis_s[i]), float(grid.axis_i[j])),
        max_value=float(values.max()),
        negative_fraction=float(np.mean(values < -eps_neg)),
        eps_neg=eps_neg,
        zero_contours=zero_contours(values, grid.axis_s, grid.axis_i),
        negative_orientation_deg=_negative_orientation(grid, eps_neg),
    )
