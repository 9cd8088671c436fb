"""Layered (bit-plane) rate splitting, progressive scheduling and per-receiver distortion."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ProgressiveOrderError
from .rate_distortion import empirical_sed
from .tokenizer import N_PLANES, TokenStream, split_bitplanes


@dataclass(frozen=True)
class Layer:
    segment_id: int
    k: int                  # 1 = most significant
    planes: tuple[int, ...]  # descending
    payload: np.ndarray     # bits, plane after plane
    n_tokens: int

    @property
    def prerequisites(self) -> tuple[int, ...]:
        return tuple(range(1, self.k))

    def plane_bits(self) -> dict[int, np.ndarray]:
        return {p: self.payload[i * self.n_tokens:(i + 1) * self.n_tokens] for i, p in enumerate(self.planes)}

    def with_payload(self, payload) -> Layer:
        payload = np.asarray(payload, dtype=np.uint8)
        if payload.size != self.payload.size:
            raise ValueError("payload length changed")
        return Layer(self.segment_id, self.k, self.planes, payload, self.n_tokens)


@dataclass(frozen=True)
class ReceiverSpec:
    id: int
    snr_db: float | None  # None: noiseless link
    targets: np.ndarray   # D_{l,n} per segment

    def __post_init__(self):
        t = np.asarray(self.targets, dtype=np.float64)
        if (t < 0).any():
            raise ValueError("distortion targets must be non-negative")
        object.__setattr__(self, "targets", t)


def layer_planes(K: int) -> list[tuple[int, ...]]:
    """Plane groups of ``ceil(8/K)`` from the MSB down; trailing layers may be empty."""
    if not 1 <= K <= N_PLANES:
        raise ValueError(f"K must be in 1..{N_PLANES}, got {K}")
    size = math.ceil(N_PLANES / K)
    order = list(range(N_PLANES - 1, -1, -1))
    groups = [tuple(order[i * size:(i + 1) * size]) for i in range(K - 1)]
    groups.append(tuple(order[(K - 1) * size:]))
    return groups


def rate_split(tokens: TokenStream, K: int) -> list[Layer]:
    planes = split_bitplanes(tokens)
    n = len(tokens)
    layers = []
    for k, group in enumerate(layer_planes(K), start=1):
        payload = np.concatenate([planes[p].bits for p in group]) if group else np.zeros(0, dtype=np.uint8)
        layers.append(Layer(tokens.segment_id, k, group, payload.astype(np.uint8), n))
    return layers


def truncate_planes(values: np.ndarray, kept: Sequence[int]) -> np.ndarray:
    """Keep the given planes and fill the rest with the midpoint pattern 0111...

    The highest missing plane gets 0 and every lower missing plane gets 1.
    """
    kept = set(kept)
    missing = [b for b in range(N_PLANES) if b not in kept]
    out = np.zeros(values.shape, dtype=np.uint16)
    v = values.astype(np.uint16)
    for b in kept:
        out |= v & (1 << b)
    if missing:
        fill = sum(1 << b for b in missing) - (1 << max(missing))
        out |= fill
    return out.astype(np.uint8)


def decode_to_layer(layers: Sequence[Layer], k: int, n_tokens: int | None = None,
                    segment_id: int | None = None) -> TokenStream:
    """Reconstruct tokens from layers 1..k (k = 0 gives the all-midpoint stream)."""
    by_k = {l.k: l for l in layers}
    need = range(1, k + 1)
    gaps = [j for j in need if j not in by_k]
    if gaps:
        raise ProgressiveOrderError(f"cannot decode to layer {k}: layers {gaps} missing")
    if k == 0:
        if n_tokens is None:
            if not layers:
                raise ValueError("n_tokens required when no layers are given")
            n_tokens, segment_id = layers[0].n_tokens, layers[0].segment_id
        return TokenStream(segment_id if segment_id is not None else -1, np.full(n_tokens, 127, dtype=np.uint8))
    first = by_k[1]
    acc = np.zeros(first.n_tokens, dtype=np.uint8)
    kept = []
    for j in need:
        for p, bits in by_k[j].plane_bits().items():
            acc |= (bits.astype(np.uint8) & 1) << p
            kept.append(p)
    return TokenStream(first.segment_id, truncate_planes(acc, kept))


def receiver_distortion(x, x_hat) -> float:
    """Per-receiver squared-error distortion ``||x - x_hat||^2 / N``."""
    return empirical_sed(x, x_hat)


def satisfied(d_n: float, target: float) -> bool:
    return d_n <= target


def truncation_distortions(tokens: TokenStream, K: int) -> np.ndarray:
    """Noiseless distortion at every decode depth 0..K."""
    x = tokens.values
    groups = layer_planes(K)
    out = []
    for k in range(K + 1):
        kept = [p for g in groups[:k] for p in g]
        out.append(empirical_sed(x, truncate_planes(x, kept)))
    return np.array(out)


def min_depth_for_target(tokens: TokenStream, K: int, D_target: float) -> tuple[int, bool]:
    """Smallest depth whose noiseless distortion meets ``D_target``; (K, False) if none does."""
    d = truncation_distortions(tokens, K)
    ok = np.flatnonzero(d <= D_target)
    if ok.size == 0:
        return K, False
    return int(ok[0]), True


@dataclass(frozen=True)
class Frame:
    frame_id: int
    kind: str        # "map" | "layer"
    segment_id: int  # -1 for the map
    k: int           # 0 for the map
    bit_count: int


def schedule_progressive(layers_by_segment: dict[int, Sequence[Layer]], sli, map_bits: int) -> list[Frame]:
    """Map first, then layer 1 of every segment by descending importance, then layer 2, ..."""
    sli = np.asarray(sli, dtype=np.float64)
    order = sorted(layers_by_segment, key=lambda s: (-sli[s], s))
    frames = [Frame(0, "map", -1, 0, int(map_bits))]
    K = max(len(v) for v in layers_by_segment.values())
    for k in range(1, K + 1):
        for s in order:
            for layer in layers_by_segment[s]:
                if layer.k == k:
                    frames.append(Frame(len(frames), "layer", s, k, int(layer.payload.size)))
    return frames


def write_plan_csv(path, frames: Sequence[Frame]) -> None:
    with open(path, "w") as f:
        f.write("frame_id,kind,segment_id,k,bit_count\n")
        for fr in frames:
            f.write(f"{fr.frame_id},{fr.kind},{fr.segment_id},{fr.k},{fr.bit_count}\n")
