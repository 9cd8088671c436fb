"""Channel coding per importance class.

* rate-1/2, K=7 convolutional code (generators 133/171 octal), zero-tail
  terminated, with a batched max-log Viterbi decoder;
* CRC-16/CCITT-FALSE with type-I HARQ;
* one even-parity bit per 8 payload bits for robust tokens.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .tokenizer import CodingBlock, TliClass


@dataclass(frozen=True)
class ConvCodeSpec:
    constraint_length: int = 7
    generators: tuple[int, int] = (0o133, 0o171)
    rate: float = 0.5
    free_distance: int = 10

    @property
    def asymptotic_coding_gain(self) -> float:
        """Soft-decision gain ``R * d_free`` (linear)."""
        return self.rate * self.free_distance

    @property
    def memory(self) -> int:
        return self.constraint_length - 1

    @property
    def n_states(self) -> int:
        return 1 << self.memory


NASA_K7 = ConvCodeSpec()


def _parity(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    out = np.zeros_like(x)
    while x.any():
        out ^= x & 1
        x >>= 1
    return out


def _trellis(spec: ConvCodeSpec):
    """Predecessor states and branch labels for every next state.

    The register is ``(input << m) | state``; the next state is ``reg >> 1``,
    so next state ``ns`` is reached from ``((ns & (S/2 - 1)) << 1) | x`` with
    input bit ``ns >> (m - 1)``.
    """
    m, S = spec.memory, spec.n_states
    ns = np.arange(S)
    bit = ns >> (m - 1)
    base = (ns & (S // 2 - 1)) << 1
    preds = np.stack([base, base | 1])               # (2, S)
    regs = (bit << m)[None, :] | preds                # (2, S)
    g0, g1 = spec.generators
    labels = 2 * _parity(regs & g0) + _parity(regs & g1)  # (2, S) in 0..3
    return preds, labels, bit


def conv_encode(bits, spec: ConvCodeSpec = NASA_K7) -> np.ndarray:
    """Encode one message (1-D) or a batch of equal-length messages (2-D)."""
    u = np.asarray(bits, dtype=np.uint8)
    if u.shape[-1] == 0:
        raise ValueError("empty message")
    m = spec.memory
    padded = np.concatenate([u, np.zeros(u.shape[:-1] + (m,), dtype=np.uint8)], axis=-1)
    n = padded.shape[-1]
    outs = []
    for g in spec.generators:
        acc = np.zeros_like(padded)
        for j in range(spec.constraint_length):
            if (g >> (m - j)) & 1:
                # tap j looks j steps into the past
                acc[..., j:] ^= padded[..., :n - j]
        outs.append(acc)
    return np.stack(outs, axis=-1).reshape(u.shape[:-1] + (2 * n,))


def viterbi_decode(llrs, spec: ConvCodeSpec = NASA_K7) -> np.ndarray:
    """Max-log ML decoding of zero-tail blocks.

    ``llrs`` are log P(bit=0)/P(bit=1), shape ``(2*(k+m),)`` or
    ``(batch, 2*(k+m))``. Returns the ``k`` message bits per block.
    """
    L = np.asarray(llrs, dtype=np.float64)
    single = L.ndim == 1
    if single:
        L = L[None, :]
    m = spec.memory
    if L.shape[-1] % 2 or L.shape[-1] // 2 <= m:
        raise ValueError(f"LLR count {L.shape[-1]} is not 2*(message + {m})")
    B, T = L.shape[0], L.shape[-1] // 2
    k = T - m
    preds, labels, in_bit = _trellis(spec)
    S = spec.n_states
    L = L.reshape(B, T, 2)
    # correlation metric for each of the 4 output pairs (c0, c1)
    signs = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=np.float64)
    bm_all = np.einsum("btj,cj->tbc", L, signs)  # (T, B, 4)

    pm = np.full((B, S), -np.inf)
    pm[:, 0] = 0.0
    decisions = np.empty((T, B, S), dtype=bool)
    p0, p1 = preds
    l0, l1 = labels
    for t in range(T):
        bm = bm_all[t]
        c0 = pm[:, p0] + bm[:, l0]
        c1 = pm[:, p1] + bm[:, l1]
        d = c1 > c0
        decisions[t] = d
        pm = np.where(d, c1, c0)
        pm -= pm.max(axis=1, keepdims=True)

    state = np.zeros(B, dtype=np.int64)
    out = np.empty((B, T), dtype=np.uint8)
    rows = np.arange(B)
    for t in range(T - 1, -1, -1):
        out[:, t] = in_bit[state]
        state = preds[decisions[t, rows, state].astype(np.int64), state]
    res = out[:, :k]
    return res[0] if single else res


def hard_llrs(bits) -> np.ndarray:
    """Unit-magnitude LLRs for hard-decision decoding."""
    return 1.0 - 2.0 * np.asarray(bits, dtype=np.float64)


def decode_blocks(llr_blocks: list[np.ndarray], spec: ConvCodeSpec = NASA_K7) -> list[np.ndarray]:
    """Viterbi-decode blocks of mixed lengths, batching equal lengths together."""
    out: list[np.ndarray | None] = [None] * len(llr_blocks)
    by_len: dict[int, list[int]] = {}
    for i, b in enumerate(llr_blocks):
        by_len.setdefault(b.size, []).append(i)
    for idx in by_len.values():
        dec = viterbi_decode(np.stack([llr_blocks[i] for i in idx]), spec)
        for i, row in zip(idx, dec):
            out[i] = row
    return out


# ---------------------------------------------------------------------------
# CRC-16/CCITT-FALSE on bit vectors (MSB-first)

CRC_POLY = 0x1021
CRC_INIT = 0xFFFF
CRC_WIDTH = 16


def crc16(bits) -> int:
    reg = CRC_INIT
    for b in np.asarray(bits, dtype=np.uint8).tolist():
        top = ((reg >> 15) & 1) ^ b
        reg = (reg << 1) & 0xFFFF
        if top:
            reg ^= CRC_POLY
    return reg


def bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def crc_append(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size == 0:
        raise ValueError("empty payload")
    c = crc16(bits)
    tail = np.array([(c >> (CRC_WIDTH - 1 - i)) & 1 for i in range(CRC_WIDTH)], dtype=np.uint8)
    return np.concatenate([bits, tail])


def crc_check(bits) -> bool:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size <= CRC_WIDTH:
        return False
    payload, tail = bits[:-CRC_WIDTH], bits[-CRC_WIDTH:]
    got = int("".join(map(str, tail.tolist())), 2)
    return crc16(payload) == got


# ---------------------------------------------------------------------------
# HARQ


@dataclass(frozen=True)
class HarqConfig:
    max_transmissions: int = 4

    def __post_init__(self):
        if self.max_transmissions < 1:
            raise ValueError("max_transmissions must be at least 1")


@dataclass(frozen=True)
class HarqOutcome:
    delivered: bool
    attempts: int
    bits: np.ndarray | None = None


def harq_run(block, channel: Callable[[np.ndarray], np.ndarray], cfg: HarqConfig = HarqConfig()) -> HarqOutcome:
    """Type-I HARQ: resend the CRC-protected block until it checks or attempts run out."""
    tx = crc_append(block)
    for attempt in range(1, cfg.max_transmissions + 1):
        rx = np.asarray(channel(tx), dtype=np.uint8)
        if crc_check(rx):
            return HarqOutcome(True, attempt, rx[:-CRC_WIDTH])
    return HarqOutcome(False, cfg.max_transmissions, None)


# ---------------------------------------------------------------------------
# per-class protection


class Scheme(enum.Enum):
    CONV_VITERBI = "conv"
    CRC_HARQ = "crc"
    PARITY = "parity"


class Status(enum.Enum):
    OK = "ok"
    CORRECTED = "corrected"
    DETECTED_FAILED = "detected-failed"
    TOLERATED_ERRORS = "tolerated-errors"


@dataclass(frozen=True)
class ProtectionPolicy:
    mapping: dict[TliClass, Scheme] = field(default_factory=lambda: {
        TliClass.HIGHLY_CRITICAL: Scheme.CONV_VITERBI,
        TliClass.MODERATELY_ROBUST: Scheme.CRC_HARQ,
        TliClass.HIGHLY_ROBUST: Scheme.PARITY,
    })

    def __post_init__(self):
        missing = set(TliClass) - set(self.mapping)
        if missing:
            raise ValueError(f"policy does not cover {sorted(missing)}")

    def scheme(self, cls: TliClass) -> Scheme:
        try:
            return self.mapping[TliClass(cls)]
        except (KeyError, ValueError):
            raise ValueError(f"no protection scheme for class {cls!r}") from None


@dataclass(frozen=True)
class ProtectedFrame:
    tli_class: TliClass
    n_message_bits: int
    payload: np.ndarray  # channel bits

    def with_payload(self, payload) -> ProtectedFrame:
        return ProtectedFrame(self.tli_class, self.n_message_bits, np.asarray(payload, dtype=np.uint8))

    def to_bytes(self) -> bytes:
        """8-bit class tag, 32-bit payload bit count, payload bits, zero pad to a byte."""
        head = struct.pack(">BI", int(self.tli_class), int(self.payload.size))
        return head + np.packbits(self.payload).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, n_message_bits: int | None = None) -> ProtectedFrame:
        tag, nbits = struct.unpack(">BI", data[:5])
        payload = np.unpackbits(np.frombuffer(data[5:], dtype=np.uint8))[:nbits]
        if payload.size != nbits:
            raise ValueError("frame truncated")
        tli = TliClass(tag)
        if n_message_bits is None:
            n_message_bits = _message_len(tli, nbits)
        return cls(tli, n_message_bits, payload.astype(np.uint8))


def _message_len(tli: TliClass, nbits: int, policy: ProtectionPolicy | None = None) -> int:
    scheme = (policy or ProtectionPolicy()).scheme(tli)
    if scheme is Scheme.CONV_VITERBI:
        return nbits // 2 - NASA_K7.memory
    if scheme is Scheme.CRC_HARQ:
        return nbits - CRC_WIDTH
    return nbits - (nbits + 8) // 9


def _parity_groups(bits: np.ndarray) -> list[np.ndarray]:
    return [bits[i:i + 8] for i in range(0, bits.size, 8)]


def protect(block: CodingBlock, policy: ProtectionPolicy = ProtectionPolicy()) -> ProtectedFrame:
    bits = np.asarray(block.bits, dtype=np.uint8)
    scheme = policy.scheme(block.tli_class)
    if scheme is Scheme.CONV_VITERBI:
        payload = conv_encode(bits)
    elif scheme is Scheme.CRC_HARQ:
        payload = crc_append(bits)
    else:
        payload = np.concatenate([np.r_[g, g.sum() & 1] for g in _parity_groups(bits)]).astype(np.uint8)
    return ProtectedFrame(block.tli_class, int(bits.size), payload)


@dataclass(frozen=True)
class Unprotected:
    bits: np.ndarray
    status: Status
    count: int = 0  # flagged parity groups for TOLERATED_ERRORS


def unprotect(frame: ProtectedFrame, policy: ProtectionPolicy = ProtectionPolicy(), llrs=None) -> Unprotected:
    """Recover message bits from received channel bits (or soft ``llrs`` for the conv scheme)."""
    scheme = policy.scheme(frame.tli_class)
    rx = np.asarray(frame.payload, dtype=np.uint8)
    if scheme is Scheme.CONV_VITERBI:
        soft = hard_llrs(rx) if llrs is None else np.asarray(llrs, dtype=np.float64)
        msg = viterbi_decode(soft)
        clean = np.array_equal(conv_encode(msg), rx)
        return Unprotected(msg, Status.OK if clean else Status.CORRECTED)
    if scheme is Scheme.CRC_HARQ:
        ok = crc_check(rx)
        return Unprotected(rx[:-CRC_WIDTH], Status.OK if ok else Status.DETECTED_FAILED)
    groups = [rx[i:i + 9] for i in range(0, rx.size, 9)]
    bad = sum(int(g.sum() & 1) for g in groups)
    msg = np.concatenate([g[:-1] for g in groups]).astype(np.uint8)[:frame.n_message_bits]
    return Unprotected(msg, Status.TOLERATED_ERRORS if bad else Status.OK, bad)
