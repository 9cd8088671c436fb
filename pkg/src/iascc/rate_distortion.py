"""Gaussian rate-distortion bookkeeping for independently coded segments."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RdModel:
    variances: np.ndarray
    lengths: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.variances, dtype=np.float64)
        n = np.asarray(self.lengths, dtype=np.float64)
        if v.shape != n.shape or v.ndim != 1 or v.size == 0:
            raise ValueError("variances and lengths must be equal-length 1-D sequences")
        if (v <= 0).any() or (n <= 0).any():
            raise ValueError("variances and lengths must be positive")
        object.__setattr__(self, "variances", v)
        object.__setattr__(self, "lengths", n)

    @classmethod
    def from_segments(cls, segments) -> RdModel:
        return cls([max(float(np.var(s.samples.astype(np.float64))), 1e-12) for s in segments],
                   [s.length for s in segments])


@dataclass(frozen=True)
class DistortionBudget:
    per_segment_D: np.ndarray
    total_rate_bits_per_sample: float
    water_level: float

    def rates(self, model: RdModel) -> np.ndarray:
        return np.array([gaussian_rd(v, d) for v, d in zip(model.variances, self.per_segment_D)])


def empirical_sed(x, x_hat) -> float:
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {x_hat.shape}")
    if x.size == 0:
        raise ValueError("empty sample vectors")
    diff = x - x_hat
    return float(np.dot(diff.ravel(), diff.ravel()) / x.size)


def gaussian_rd(variance: float, D: float) -> float:
    """Rate in bits/sample of an i.i.d. Gaussian source at squared-error distortion ``D``."""
    if variance <= 0 or D <= 0:
        raise ValueError("variance and distortion must be positive")
    return max(0.0, 0.5 * math.log2(variance / D))


def _mean_rate(model: RdModel, level: float) -> float:
    d = np.minimum(level, model.variances)
    return float(np.sum(model.lengths * 0.5 * np.log2(model.variances / d)) / model.lengths.sum())


def reverse_waterfill(model: RdModel, total_rate_bits_per_sample: float,
                      max_iter: int = 200, tol: float = 1e-9) -> DistortionBudget:
    """Split a mean-rate budget across segments by reverse water-filling.

    Each segment gets ``D_l = min(level, var_l)``; the level is found by
    bisection in log space until the length-weighted mean rate matches.
    """
    R = float(total_rate_bits_per_sample)
    if R < 0:
        raise ValueError("rate budget must be non-negative")
    v = model.variances
    hi = float(v.max())
    if R == 0:
        return DistortionBudget(v.copy(), 0.0, hi)
    # at this level every segment is active and the rate is at least R
    lo = float(v.min()) * 2.0 ** (-2.0 * R) / 2.0
    log_lo, log_hi = math.log(lo), math.log(hi)
    level = hi
    for _ in range(max_iter):
        mid = 0.5 * (log_lo + log_hi)
        level = math.exp(mid)
        resid = _mean_rate(model, level) - R
        if abs(resid) <= tol:
            break
        if resid > 0:
            log_lo = mid
        else:
            log_hi = mid
    return DistortionBudget(np.minimum(level, v), R, level)


def aggregate_sed(distortions, lengths) -> float:
    d = np.asarray(distortions, dtype=np.float64)
    n = np.asarray(lengths, dtype=np.float64)
    if d.size == 0:
        raise ValueError("empty input")
    if d.shape != n.shape:
        raise ValueError("distortions and lengths differ in length")
    if (n <= 0).any():
        raise ValueError("lengths must be positive")
    # weighted mean; clamp away round-off outside [min, max]
    return float(np.clip(np.sum(d * n) / np.sum(n), d.min(), d.max()))


def segment_gain(d_bar: float, d_min: float) -> float:
    return d_bar - d_min
