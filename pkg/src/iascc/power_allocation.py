"""Equal, water-filling and importance-weighted power allocation across streams."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .phy import ber_theoretical_16qam
from .tokenizer import N_PLANES

_A2 = 1.0 / 5.0  # squared Q-function argument scale of 16-QAM: Q(sqrt(snr / 5))
_LOG_C = math.log(math.sqrt(_A2) / (2 * math.sqrt(2 * math.pi)))


@dataclass(frozen=True)
class AllocationProblem:
    gains: np.ndarray
    n0: float
    total_power: float
    weights: np.ndarray
    coding_gain: float = 1.0  # SNR multiplier inside the BER proxy (1 = uncoded)

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64)
        if g.ndim != 1 or g.shape != w.shape or g.size == 0:
            raise ValueError("gains and weights must be equal-length 1-D arrays")
        if (g <= 0).any() or self.n0 <= 0 or self.total_power <= 0:
            raise ValueError("gains, n0 and total power must be positive")
        if self.coding_gain <= 0:
            raise ValueError("coding gain must be positive")
        if (w < 0).any():
            raise ValueError("weights must be non-negative")
        if w.sum() > 0:
            w = w / w.sum()
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "weights", w)

    @property
    def m(self) -> int:
        return int(self.gains.size)

    @property
    def snr_per_watt(self) -> np.ndarray:
        return self.gains / self.n0

    @property
    def proxy_snr_per_watt(self) -> np.ndarray:
        return self.coding_gain * self.gains / self.n0


@dataclass(frozen=True)
class AllocationResult:
    policy: str
    powers: np.ndarray
    objective_value: float
    lagrange_multiplier: float | None = None

    def snr_db(self, prob: AllocationProblem) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10 * np.log10(self.powers * prob.snr_per_watt)


def sum_capacity(prob: AllocationProblem, powers) -> float:
    return float(np.sum(np.log2(1 + np.asarray(powers) * prob.snr_per_watt)))


def weighted_ber(prob: AllocationProblem, powers) -> float:
    """``sum_i w_i BER16(G p_i g_i / n0)`` with ``G`` the problem's coding gain."""
    return float(np.sum(prob.weights * ber_theoretical_16qam(np.asarray(powers) * prob.proxy_snr_per_watt)))


def weighted_ber_gradient(prob: AllocationProblem, powers) -> np.ndarray:
    k = prob.proxy_snr_per_watt
    x = np.asarray(powers, dtype=np.float64) * k
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        g = -prob.weights * k * np.exp(log_ber_slope(x))
    return np.where(prob.weights > 0, g, 0.0)


def log_ber_slope(x):
    """``log(-d BER16 / d snr)`` evaluated without underflow; +inf at snr 0."""
    x = np.asarray(x, dtype=np.float64)
    u = 4 * _A2 * x
    bracket = 0.75 + 1.5 * np.exp(-u) - 1.25 * np.exp(-3 * u)
    with np.errstate(divide="ignore"):
        return _LOG_C - 0.5 * np.log(x) - 0.5 * _A2 * x + np.log(bracket)


def _exact_sum(powers: np.ndarray, total: float) -> np.ndarray:
    s = powers.sum()
    return powers * (total / s) if s > 0 else powers


def allocate_equal(prob: AllocationProblem) -> AllocationResult:
    p = np.full(prob.m, prob.total_power / prob.m)
    return AllocationResult("equal", p, sum_capacity(prob, p))


def allocate_waterfilling(prob: AllocationProblem, max_iter: int = 200) -> AllocationResult:
    """Capacity-maximising powers ``max(0, mu - n0/g)``."""
    floor = prob.n0 / prob.gains
    lo, hi = float(floor.min()), float(floor.max() + prob.total_power)
    for _ in range(max_iter):
        mu = 0.5 * (lo + hi)
        if np.maximum(0.0, mu - floor).sum() > prob.total_power:
            hi = mu
        else:
            lo = mu
    active = floor < 0.5 * (lo + hi)
    # the bisection fixes the active set; solve the level on it exactly
    mu = (prob.total_power + floor[active].sum()) / active.sum()
    p = np.where(active, np.maximum(0.0, mu - floor), 0.0)
    p = _exact_sum(p, prob.total_power)
    return AllocationResult("waterfilling", p, sum_capacity(prob, p), mu)


def _snr_for_slope(log_target: np.ndarray, iters: int = 200) -> np.ndarray:
    """Invert the (strictly decreasing) BER slope: find snr with log_ber_slope(snr) = target."""
    lo = np.full(log_target.shape, -60.0)  # log snr
    hi = np.full(log_target.shape, math.log(1e6))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        too_steep = log_ber_slope(np.exp(mid)) > log_target
        lo = np.where(too_steep, mid, lo)
        hi = np.where(too_steep, hi, mid)
        if np.all(hi - lo < 1e-15):
            break
    return np.exp(0.5 * (lo + hi))


def _powers_for_multiplier(prob: AllocationProblem, log_lam: float) -> np.ndarray:
    p = np.zeros(prob.m)
    on = prob.weights > 0
    k = prob.proxy_snr_per_watt[on]
    # stationarity: w_i k_i slope(k_i p_i) = lambda
    x = _snr_for_slope(log_lam - np.log(prob.weights[on] * k))
    p[on] = x / k
    return p


def kkt_residual(prob: AllocationProblem, powers, lam: float) -> np.ndarray:
    """Relative stationarity error ``|d obj / d p_i + lambda| / lambda`` on active streams."""
    g = weighted_ber_gradient(prob, powers)
    on = (prob.weights > 0) & (np.asarray(powers) > 0)
    return np.abs(-g[on] - lam) / lam


def _project_simplex(v: np.ndarray, total: float) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def projected_gradient(prob: AllocationProblem, p0=None, max_iter: int = 10_000, tol: float = 1e-9) -> np.ndarray:
    """Projected gradient descent on the weighted BER with step halving."""
    P = prob.total_power
    p = np.full(prob.m, P / prob.m) if p0 is None else np.asarray(p0, dtype=np.float64)
    p = _project_simplex(p, P)
    floor = 1e-12 * P / prob.m
    f = weighted_ber(prob, p)
    step = P
    for _ in range(max_iter):
        # the slope is unbounded at zero power; evaluate just inside the boundary
        g = weighted_ber_gradient(prob, np.maximum(p, floor))
        while step > 1e-18:
            cand = _project_simplex(p - step * g, P)
            fc = weighted_ber(prob, cand)
            if fc < f:
                break
            step *= 0.5
        else:
            break
        improvement = f - fc
        p, f = cand, fc
        step *= 2.0
        if improvement <= tol * f:
            break
    return p


def allocate_importance(prob: AllocationProblem, max_iter: int = 200, kkt_tol: float = 1e-6) -> AllocationResult:
    """Minimise the importance-weighted 16-QAM BER proxy under a sum-power budget.

    With ``prob.coding_gain`` left at 1 this is the uncoded BER; a coded link
    passes its asymptotic coding gain so the proxy tracks post-decoding errors.

    The weighted slopes are equalised by bisection on the Lagrange multiplier
    (BER16 is convex in SNR, so each stream's power is a decreasing function of
    the multiplier), so the budget equation has a single root in log lambda.
    Zero-weight streams get no power. If the stationarity check fails the
    result is polished by projected gradient descent.
    """
    if not (prob.weights > 0).any():
        raise ValueError("at least one stream weight must be positive")
    on = prob.weights > 0
    k = prob.proxy_snr_per_watt[on]
    w = prob.weights[on]
    P = prob.total_power
    # bracket log(lambda): all power on active streams at either end
    ref = np.log(w * k)
    lo = float((ref + log_ber_slope(k * P)).min()) - 1.0   # small multiplier -> too much power
    hi = float((ref + log_ber_slope(k * P / on.sum() * 1e-12)).max()) + 1.0
    log_lam = brentq(lambda t: _powers_for_multiplier(prob, t).sum() - P, lo, hi,
                     xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=max_iter)
    p = _exact_sum(_powers_for_multiplier(prob, log_lam), P)
    lam = math.exp(log_lam)
    if kkt_residual(prob, p, lam).max(initial=0.0) > kkt_tol:
        p = projected_gradient(prob, p)
        p = _exact_sum(p, P)
        lam = None
    return AllocationResult("importance", p, weighted_ber(prob, p), lam)


POLICIES = {
    "equal": allocate_equal,
    "waterfilling": allocate_waterfilling,
    "importance": allocate_importance,
}


def stream_weights(sli, planes=range(N_PLANES), exponent_base: float = 4.0) -> np.ndarray:
    """Per-stream weights ``sli_l * base**b / Z`` for every (segment, plane).

    Streams are ordered segment by segment, most significant plane first, which
    is also the sub-channel order used by the simulator.
    """
    sli = np.asarray(sli, dtype=np.float64)
    planes = sorted(planes, reverse=True)
    w = np.array([s * exponent_base ** b for s in sli for b in planes])
    z = w.sum()
    if z <= 0:
        raise ValueError("segment weights must not all be zero")
    return w / z


def stream_index(segment: int, plane: int) -> int:
    return segment * N_PLANES + (N_PLANES - 1 - plane)


def write_allocation_csv(path, rows) -> None:
    """rows: iterables of (policy, stream_id, segment, plane, weight, gain, power, snr_db)."""
    with open(path, "w") as f:
        f.write("policy,stream_id,segment,plane,weight,gain,power,post_allocation_snr_db\n")
        for policy, sid, seg, plane, w, g, p, snr in rows:
            f.write(f"{policy},{sid},{seg},{plane},{w:.9g},{g:.9g},{p:.9g},{snr:.9g}\n")
