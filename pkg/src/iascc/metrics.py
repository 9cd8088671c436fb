"""Image quality and error-rate metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .rate_distortion import empirical_sed


@dataclass(frozen=True)
class MsSsimConfig:
    scales: int = 5
    scale_weights: tuple[float, ...] = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 255.0

    def scales_for(self, shape) -> int:
        """Largest scale count whose coarsest image still fits the window."""
        side = min(shape)
        n = self.scales
        while n > 1 and side < self.window * 2 ** (n - 1):
            n -= 1
        return n

    def weights_for(self, n: int) -> np.ndarray:
        w = np.asarray(self.scale_weights[:n], dtype=np.float64)
        # the standard weights sum to 1.0001; keep them verbatim at full depth
        return w if n == self.scales else w / w.sum()


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-x ** 2 / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    n = win.size
    rows = sliding_window_view(img, n, axis=0) @ win
    return sliding_window_view(rows, n, axis=1) @ win


def _ssim_terms(a: np.ndarray, b: np.ndarray, cfg: MsSsimConfig) -> tuple[float, float]:
    win = gaussian_window(cfg.window, cfg.sigma)
    c1 = (cfg.k1 * cfg.dynamic_range) ** 2
    c2 = (cfg.k2 * cfg.dynamic_range) ** 2
    mu_a, mu_b = _filter_valid(a, win), _filter_valid(b, win)
    saa = _filter_valid(a * a, win) - mu_a ** 2
    sbb = _filter_valid(b * b, win) - mu_b ** 2
    sab = _filter_valid(a * b, win) - mu_a * mu_b
    cs = (2 * sab + c2) / (saa + sbb + c2)
    lum = (2 * mu_a * mu_b + c1) / (mu_a ** 2 + mu_b ** 2 + c1)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def downsample2(img: np.ndarray) -> np.ndarray:
    """2x2 average pooling; an odd trailing row/column is dropped."""
    h, w = img.shape[0] // 2 * 2, img.shape[1] // 2 * 2
    x = img[:h, :w]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def _signed_pow(v: float, w: float) -> float:
    return math.copysign(abs(v) ** w, v)


def ms_ssim(a, b, cfg: MsSsimConfig = MsSsimConfig()) -> float:
    """Multi-scale SSIM of two grayscale images.

    Images smaller than ``window * 2**(scales-1)`` on their short side use fewer
    scales with the leading weights renormalised. Negative per-scale terms keep
    their sign so anti-correlated images score below zero.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if min(a.shape) < 16:
        raise ValueError("images must be at least 16 pixels on each side")
    n = cfg.scales_for(a.shape)
    weights = cfg.weights_for(n)
    score = 1.0
    for j in range(n):
        ssim_j, cs_j = _ssim_terms(a, b, cfg)
        score *= _signed_pow(ssim_j if j == n - 1 else cs_j, weights[j])
        if j < n - 1:
            a, b = downsample2(a), downsample2(b)
    return score


def psnr(a, b, peak: float = 255.0) -> float:
    mse = empirical_sed(a, b)
    return math.inf if mse == 0 else 10 * math.log10(peak ** 2 / mse)


def bit_error_rate(tx, rx) -> float:
    tx, rx = np.asarray(tx), np.asarray(rx)
    if tx.shape != rx.shape:
        raise ValueError("length mismatch")
    return float(np.mean(tx != rx)) if tx.size else 0.0


def token_error_rate(tx, rx) -> float:
    """Fraction of tokens with at least one wrong bit."""
    return bit_error_rate(tx, rx)


def weighted_sed(distortions, weights) -> float:
    d = np.asarray(distortions, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if d.shape != w.shape:
        raise ValueError("distortions and weights must align")
    return float(np.dot(w, d))
