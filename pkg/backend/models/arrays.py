"""Array containers: distributions, histograms and intensity grids."""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np


@dataclass(frozen=True, eq=False)
class Distribution1D:
    """Probabilities over counts, or over signed differences when offset > 0"""

    probs: np.ndarray
    offset: int = 0

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("Distribution1D needs a non-empty 1D probability vector")
        if not np.all(np.isfinite(probs)):
            raise ValueError("Distribution1D probabilities must be finite")
        if not 0 <= self.offset < probs.size:
            raise ValueError(f"offset {self.offset} outside vector of length {probs.size}")
        object.__setattr__(self, "probs", probs)

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.probs.size) - self.offset

    def total(self) -> float:
        return float(self.probs.sum())

    def mean(self) -> float:
        return float(np.dot(self.support, self.probs) / self.total())

    def variance(self) -> float:
        mean = self.mean()
        return float(np.dot((self.support - mean) ** 2, self.probs) / self.total())

    def at(self, index: int) -> float:
        """Probability of a count (or difference); 0 outside the stored range"""
        position = index + self.offset
        if 0 <= position < self.probs.size:
            return float(self.probs[position])
        return 0.0


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Truncated joint law over (signal, idler) counts"""

    probs: np.ndarray
    label: str = "photons"

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 2 or probs.size == 0:
            raise ValueError("JointDistribution needs a non-empty 2D probability matrix")
        if not np.all(np.isfinite(probs)):
            raise ValueError("JointDistribution probabilities must be finite")
        if self.label not in ("photons", "detected"):
            raise ValueError(f"unknown label {self.label!r}")
        object.__setattr__(self, "probs", probs)

    @property
    def cutoffs(self) -> Tuple[int, int]:
        return self.probs.shape[0] - 1, self.probs.shape[1] - 1

    def total(self) -> float:
        return float(self.probs.sum())

    def marginal_s(self) -> Distribution1D:
        return Distribution1D(self.probs.sum(axis=1))

    def marginal_i(self) -> Distribution1D:
        return Distribution1D(self.probs.sum(axis=0))

    def means(self) -> Tuple[float, float]:
        return self.marginal_s().mean(), self.marginal_i().mean()

    def variances(self) -> Tuple[float, float]:
        return self.marginal_s().variance(), self.marginal_i().variance()

    def covariance(self) -> float:
        n_s = np.arange(self.probs.shape[0])
        n_i = np.arange(self.probs.shape[1])
        mean_s, mean_i = self.means()
        total = self.total()
        return float((n_s - mean_s) @ self.probs @ (n_i - mean_i) / total)

    def correlation(self) -> float:
        var_s, var_i = self.variances()
        return self.covariance() / float(np.sqrt(var_s * var_i))

    def diagonal_weight(self) -> float:
        return float(np.trace(self.probs))

    def truncated(self, n_s: int, n_i: int) -> "JointDistribution":
        """Restrict to counts 0..n_s and 0..n_i, zero-padding when the matrix is smaller"""
        out = np.zeros((n_s + 1, n_i + 1))
        rows = min(n_s + 1, self.probs.shape[0])
        cols = min(n_i + 1, self.probs.shape[1])
        out[:rows, :cols] = self.probs[:rows, :cols]
        return JointDistribution(out, self.label)


@dataclass(frozen=True)
class ShotRecord:
    m_s: int
    m_i: int
    line: Optional[int] = field(default=None, compare=False)

    def __post_init__(self):
        if self.m_s < 0 or self.m_i < 0:
            raise ValueError(f"negative detected count in shot ({self.m_s}, {self.m_i})")


@dataclass(frozen=True, eq=False)
class JointHistogram:
    """Tallies of (m_s, m_i) over repeated shots"""

    counts: np.ndarray
    shots: int

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.size == 0:
            raise ValueError("JointHistogram needs a non-empty 2D count matrix")
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(np.equal(np.mod(counts, 1), 0)):
                raise ValueError("histogram counts must be integers")
        counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise ValueError("histogram counts must be non-negative")
        if int(counts.sum()) != int(self.shots):
            raise ValueError(f"counts sum to {int(counts.sum())}, expected {self.shots} shots")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "shots", int(self.shots))

    @classmethod
    def from_arrays(cls, m_s: np.ndarray, m_i: np.ndarray,
                    cutoffs: Optional[Tuple[int, int]] = None) -> "JointHistogram":
        m_s = np.asarray(m_s, dtype=np.int64)
        m_i = np.asarray(m_i, dtype=np.int64)
        if m_s.shape != m_i.shape or m_s.ndim != 1:
            raise ValueError("signal and idler arrays must be 1D and of equal length")
        if m_s.size == 0:
            raise ValueError("cannot build a histogram from zero shots")
        if cutoffs is None:
            cutoffs = (int(m_s.max()), int(m_i.max()))
        if m_s.max() > cutoffs[0] or m_i.max() > cutoffs[1]:
            raise ValueError(f"observed counts exceed cutoffs {cutoffs}")
        shape = (cutoffs[0] + 1, cutoffs[1] + 1)
        flat = np.bincount(m_s * shape[1] + m_i, minlength=shape[0] * shape[1])
        return cls(flat.reshape(shape), int(m_s.size))

    @property
    def cutoffs(self) -> Tuple[int, int]:
        return self.counts.shape[0] - 1, self.counts.shape[1] - 1

    def padded(self, n_s: int, n_i: int) -> "JointHistogram":
        if n_s < self.cutoffs[0] or n_i < self.cutoffs[1]:
            raise ValueError("padding cannot shrink a histogram")
        out = np.zeros((n_s + 1, n_i + 1), dtype=np.int64)
        out[: self.counts.shape[0], : self.counts.shape[1]] = self.counts
        return JointHistogram(out, self.shots)

    def merged(self, other: "JointHistogram") -> "JointHistogram":
        n_s = max(self.cutoffs[0], other.cutoffs[0])
        n_i = max(self.cutoffs[1], other.cutoffs[1])
        return JointHistogram(
            self.padded(n_s, n_i).counts + other.padded(n_s, n_i).counts,
            self.shots + other.shots,
        )

    def to_distribution(self) -> JointDistribution:
        return JointDistribution(self.counts / self.shots, label="detected")

    def same_as(self, other: "JointHistogram") -> bool:
        return self.shots == other.shots and np.array_equal(self.counts, other.counts)


def _check_axis(axis: np.ndarray, name: str) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    if axis.ndim != 1 or axis.size < 2:
        raise ValueError(f"{name} needs at least two sample points")
    if axis[0] != 0.0:
        raise ValueError(f"{name} must start at 0")
    if np.any(np.diff(axis) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return axis


@dataclass(frozen=True, eq=False)
class IntensityProfile:
    """Samples of a one-dimensional quasi-distribution P(W)"""

    axis: np.ndarray
    values: np.ndarray
    order: Optional[int] = None
    damping: Optional[float] = None
    singular: bool = False

    def __post_init__(self):
        axis = _check_axis(self.axis, "axis")
        values = np.asarray(self.values, dtype=float)
        if values.shape != axis.shape:
            raise ValueError("values must match the axis")
        if not np.all(np.isfinite(values)):
            raise ValueError("quasi-distribution samples must be finite")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class IntensityGrid:
    """Samples of P(W_s, W_i) on a rectangular grid; values may be negative"""

    axis_s: np.ndarray
    axis_i: np.ndarray
    values: np.ndarray
    order: Optional[int] = None
    damping: Optional[float] = None
    singular: bool = False
    label: str = "photons"

    def __post_init__(self):
        axis_s = _check_axis(self.axis_s, "axis_s")
        axis_i = _check_axis(self.axis_i, "axis_i")
        values = np.asarray(self.values, dtype=float)
        if values.shape != (axis_s.size, axis_i.size):
            raise ValueError(f"values shape {values.shape} does not match axes")
        if not np.all(np.isfinite(values)):
            raise ValueError("quasi-distribution samples must be finite")
        object.__setattr__(self, "axis_s", axis_s)
        object.__setattr__(self, "axis_i", axis_i)
        object.__setattr__(self, "values", values)

    def metadata(self) -> dict:
        return {
            "order": self.order,
            "damping": self.damping,
            "singular": self.singular,
            "label": self.label,
            "axis_s": {"start": 0.0, "stop": float(self.axis_s[-1]), "points": int(self.axis_s.size)},
            "axis_i": {"start": 0.0, "stop": float(self.axis_i[-1]), "points": int(self.axis_i.size)},
        }

    def negated(self) -> "IntensityGrid":
        return IntensityGrid(self.axis_s, self.axis_i, -self.values, self.order,
                             self.damping, self.singular, self.label)
