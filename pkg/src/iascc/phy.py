"""Gray-mapped 16-QAM over a bank of orthogonal AWGN sub-channels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

SQRT10 = np.sqrt(10.0)
# Gray labels per dimension: 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3
PAM_LEVELS = np.array([-3.0, -1.0, 1.0, 3.0])
PAM_LABELS = np.array([[0, 0], [0, 1], [1, 1], [1, 0]], dtype=np.uint8)


@dataclass(frozen=True)
class SubChannel:
    index: int
    gain: float
    n0: float = 1.0

    def __post_init__(self):
        if not (self.gain > 0 and self.n0 > 0):
            raise ValueError(f"sub-channel {self.index}: gain and n0 must be positive")


@dataclass(frozen=True)
class ChannelRealization:
    gains: np.ndarray
    n0: float
    total_power: float

    @property
    def n_subchannels(self) -> int:
        return int(self.gains.size)

    @property
    def average_snr_db(self) -> float:
        p_equal = self.total_power / self.n_subchannels
        return float(10 * np.log10(np.mean(p_equal * self.gains / self.n0)))

    def subchannels(self) -> list[SubChannel]:
        return [SubChannel(i, float(g), self.n0) for i, g in enumerate(self.gains)]


def _scale_to_snr(raw: np.ndarray, avg_snr_db: float, n0: float, total_power: float) -> np.ndarray:
    p_equal = total_power / raw.size
    target = 10 ** (avg_snr_db / 10)
    return raw * (target * n0 / p_equal) / raw.mean()


def default_gains(n: int = 24, avg_snr_db: float = 10.0, n0: float = 1.0, total_power: float | None = None) -> ChannelRealization:
    """Fixed spread of gains ``0.4 + 1.2 * ((7 i mod n) / (n - 1))`` scaled to the target SNR."""
    total_power = float(n if total_power is None else total_power)
    i = np.arange(n)
    raw = 0.4 + 1.2 * ((7 * i) % n) / max(n - 1, 1)
    return ChannelRealization(_scale_to_snr(raw, avg_snr_db, n0, total_power), n0, total_power)


def rayleigh_gains(rng: np.random.Generator, n: int = 24, avg_snr_db: float = 10.0, n0: float = 1.0,
                   total_power: float | None = None) -> ChannelRealization:
    """Exponential power gains (Rayleigh amplitudes), rescaled to the target average SNR."""
    total_power = float(n if total_power is None else total_power)
    raw = rng.exponential(1.0, n)
    return ChannelRealization(_scale_to_snr(raw, avg_snr_db, n0, total_power), n0, total_power)


def qam16_modulate(bits) -> tuple[np.ndarray, int]:
    """Map ``b3 b2 b1 b0`` groups to unit-energy symbols; returns (symbols, zero bits padded)."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    pad = (-bits.size) % 4
    if pad:
        bits = np.concatenate([bits, np.zeros(pad, dtype=np.uint8)])
    b = bits.reshape(-1, 4).astype(np.int64)
    # index into PAM_LEVELS from a Gray pair (hi, lo): 00->0, 01->1, 11->2, 10->3
    gray_to_idx = np.array([0, 1, 3, 2])
    i_idx = gray_to_idx[2 * b[:, 0] + b[:, 1]]
    q_idx = gray_to_idx[2 * b[:, 2] + b[:, 3]]
    return (PAM_LEVELS[i_idx] + 1j * PAM_LEVELS[q_idx]) / SQRT10, pad


def _pam_llrs(y: np.ndarray, noise_var: float) -> np.ndarray:
    # squared distance from each received coordinate to the four levels
    d2 = (y[:, None] * SQRT10 - PAM_LEVELS[None, :]) ** 2 / 10.0
    out = np.empty((y.size, 2))
    for j in range(2):
        one = PAM_LABELS[:, j] == 1
        out[:, j] = (d2[:, one].min(axis=1) - d2[:, ~one].min(axis=1)) / noise_var
    return out


def qam16_demodulate(received, noise_var: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact max-log LLRs (log P0/P1) and hard bits for unit-gain received symbols.

    ``noise_var`` is the complex noise variance, i.e. per-dimension variance times two.
    """
    if noise_var <= 0:
        raise ValueError("noise variance must be positive")
    y = np.asarray(received, dtype=np.complex128).ravel()
    llr = np.empty((y.size, 4))
    llr[:, 0:2] = _pam_llrs(y.real, noise_var)
    llr[:, 2:4] = _pam_llrs(y.imag, noise_var)
    llr = llr.ravel()
    return llr, (llr < 0).astype(np.uint8)


def qfunc(x):
    return 0.5 * erfc(np.asarray(x, dtype=np.float64) / np.sqrt(2.0))


def ber_theoretical_16qam(snr_linear):
    """Exact Gray 16-QAM bit error probability over AWGN at Es/N0 = ``snr_linear``."""
    snr = np.asarray(snr_linear, dtype=np.float64)
    if np.any(snr < 0):
        raise ValueError("SNR must be non-negative")
    a = np.sqrt(snr / 5.0)
    res = 0.75 * qfunc(a) + 0.5 * qfunc(3 * a) - 0.25 * qfunc(5 * a)
    return float(res) if res.ndim == 0 else res


def transmit(symbols, power: float, chan: SubChannel, rng: np.random.Generator) -> np.ndarray:
    """``sqrt(p g) s + n`` with circular complex Gaussian noise of variance ``n0``."""
    if power < 0:
        raise ValueError("power must be non-negative")
    s = np.asarray(symbols, dtype=np.complex128)
    noise = rng.standard_normal((2, s.size))
    n = np.sqrt(chan.n0 / 2) * (noise[0] + 1j * noise[1])
    return np.sqrt(power * chan.gain) * s + n


def receive(received, power: float, chan: SubChannel) -> tuple[np.ndarray, np.ndarray]:
    """Equalise and demodulate; a silent channel yields zero LLRs (erasures)."""
    amp2 = power * chan.gain
    y = np.asarray(received)
    if amp2 <= 0:
        llr = np.zeros(4 * y.size)
        return llr, np.zeros(llr.size, dtype=np.uint8)
    return qam16_demodulate(y / np.sqrt(amp2), chan.n0 / amp2)


def dump_symbols_csv(path, symbols) -> None:
    s = np.asarray(symbols)
    with open(path, "w") as f:
        f.write("index,I,Q\n")
        for i, v in enumerate(s.tolist()):
            f.write(f"{i},{v.real:.9g},{v.imag:.9g}\n")
