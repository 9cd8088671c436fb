"""Synthetic scenes, semantic maps and segment partitioning.

A scene is described by a list of labelled regions. Segment ids are the
positions of the regions in that list, so the default layout
``[base, stag, background]`` yields ids 0, 1 and 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as _rng
from .errors import ConfigError

HEADER_BITS = (16, 16, 8)  # width, height, L - 1


@dataclass(frozen=True)
class Rectangle:
    """Half-open pixel box ``[x0, x1) x [y0, y1)``."""

    x0: int
    y0: int
    x1: int
    y1: int

    def mask(self, height: int, width: int) -> np.ndarray:
        m = np.zeros((height, width), dtype=bool)
        m[max(self.y0, 0):min(self.y1, height), max(self.x0, 0):min(self.x1, width)] = True
        return m


@dataclass(frozen=True)
class Polygon:
    """Simple polygon; a pixel belongs to it when its centre is inside."""

    vertices: tuple[tuple[float, float], ...]

    def mask(self, height: int, width: int) -> np.ndarray:
        yy, xx = np.mgrid[0:height, 0:width]
        px = xx + 0.5
        py = yy + 0.5
        inside = np.zeros((height, width), dtype=bool)
        verts = list(self.vertices)
        for (xa, ya), (xb, yb) in zip(verts, verts[1:] + verts[:1]):
            if ya == yb:
                continue
            crosses = (ya > py) != (yb > py)
            x_at = xa + (py - ya) * (xb - xa) / (yb - ya)
            inside ^= crosses & (px < x_at)
        return inside


@dataclass(frozen=True)
class Remainder:
    """Every pixel not claimed by another region."""


Region = Rectangle | Polygon | Remainder


@dataclass(frozen=True)
class Texture:
    mean: float
    variance: float


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    segment_layout: tuple[tuple[str, Region], ...]
    texture_seed: int
    texture_params: dict[str, Texture]

    @property
    def labels(self) -> list[str]:
        return [name for name, _ in self.segment_layout]

    def validate(self) -> None:
        if self.width < 16 or self.height < 16:
            raise ConfigError(f"scene must be at least 16x16, got {self.width}x{self.height}")
        if self.width >= 1 << HEADER_BITS[0] or self.height >= 1 << HEADER_BITS[1]:
            raise ConfigError("scene dimensions exceed the semantic-map header range")
        names = self.labels
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate segment labels in layout: {names}")
        if not 1 <= len(names) <= 1 << HEADER_BITS[2]:
            raise ConfigError("layout must hold between 1 and 256 regions")
        n_rem = sum(isinstance(r, Remainder) for _, r in self.segment_layout)
        if n_rem != 1:
            raise ConfigError(f"layout needs exactly one remainder region, found {n_rem}")
        missing = [n for n in names if n not in self.texture_params]
        if missing:
            raise ConfigError(f"no texture parameters for labels {missing}")
        for name, tex in self.texture_params.items():
            if tex.variance < 0 or not 0 <= tex.mean <= 255:
                raise ConfigError(f"texture for {name!r} out of range: {tex}")


@dataclass(frozen=True)
class ImportanceProfile:
    """Segment weights, per-receiver distortion targets (segments x receivers) and the plane-weight base."""

    sli: tuple[float, ...]
    rsi_targets: tuple[tuple[float, ...], ...] = ()
    bli_exponent_base: float = 4.0

    def validate(self, n_segments: int | None = None) -> None:
        if any(w < 0 or w > 1 for w in self.sli) or abs(sum(self.sli) - 1.0) > 1e-9:
            raise ConfigError(f"segment weights must lie in [0, 1] and sum to 1, got {self.sli}")
        if n_segments is not None and len(self.sli) != n_segments:
            raise ConfigError(f"{len(self.sli)} segment weights for {n_segments} segments")
        if self.rsi_targets:
            if n_segments is not None and len(self.rsi_targets) != n_segments:
                raise ConfigError("rsi_targets needs one row per segment")
            if len({len(r) for r in self.rsi_targets}) != 1:
                raise ConfigError("rsi_targets rows must have equal length")
            if any(d < 0 for row in self.rsi_targets for d in row):
                raise ConfigError("distortion targets must be non-negative")
        if self.bli_exponent_base <= 0:
            raise ConfigError("bli_exponent_base must be positive")

    def targets_for(self, receiver: int) -> np.ndarray:
        return np.array([row[receiver] for row in self.rsi_targets], dtype=np.float64)


def default_scene_spec(width: int = 256, height: int = 256, texture_seed: int = 7) -> SceneSpec:
    """Base rectangle along the bottom quarter, a 12-gon stag above it, background elsewhere.

    The 12-gon has a quarter of the frame area (area of a regular 12-gon is
    ``3 R^2``) and is centred in the band above the base.
    """
    base_top = height - height // 4
    radius = math.sqrt(width * height / 4 / 3)
    cx, cy = width / 2, base_top / 2
    verts = tuple(
        (cx + radius * math.cos(math.pi / 6 * k), cy + radius * math.sin(math.pi / 6 * k))
        for k in range(12)
    )
    return SceneSpec(
        width=width,
        height=height,
        segment_layout=(
            ("base", Rectangle(0, base_top, width, height)),
            ("stag", Polygon(verts)),
            ("background", Remainder()),
        ),
        texture_seed=texture_seed,
        texture_params={
            "base": Texture(80.0, 900.0),
            "stag": Texture(160.0, 1600.0),
            "background": Texture(120.0, 100.0),
        },
    )


# ---------------------------------------------------------------------------
# semantic map and its run-length format


def _uint_bits(value: int, width: int) -> list[int]:
    return [(value >> (width - 1 - i)) & 1 for i in range(width)]


def _gamma_bits(n: int) -> list[int]:
    nb = n.bit_length()
    return [0] * (nb - 1) + _uint_bits(n, nb)


def label_width(n_segments: int) -> int:
    return math.ceil(math.log2(n_segments)) if n_segments > 1 else 0


def rle_encode(labels: np.ndarray, n_segments: int) -> np.ndarray:
    """Row-major run-length code: header, then (label, Elias-gamma run) pairs."""
    height, width = labels.shape
    flat = labels.ravel()
    starts = np.flatnonzero(np.r_[True, flat[1:] != flat[:-1]])
    runs = np.diff(np.r_[starts, flat.size])
    lw = label_width(n_segments)
    out = _uint_bits(width, HEADER_BITS[0]) + _uint_bits(height, HEADER_BITS[1])
    out += _uint_bits(n_segments - 1, HEADER_BITS[2])
    for lab, run in zip(flat[starts].tolist(), runs.tolist()):
        out += _uint_bits(lab, lw)
        out += _gamma_bits(run)
    return np.array(out, dtype=np.uint8)


def rle_decode(bits: np.ndarray) -> tuple[np.ndarray, int]:
    bits = [int(b) for b in np.asarray(bits)]
    pos = 0

    def take(n: int) -> int:
        nonlocal pos
        if pos + n > len(bits):
            raise ValueError("truncated semantic map")
        v = 0
        for b in bits[pos:pos + n]:
            v = (v << 1) | b
        pos += n
        return v

    width, height = take(HEADER_BITS[0]), take(HEADER_BITS[1])
    n_segments = take(HEADER_BITS[2]) + 1
    lw = label_width(n_segments)
    total = width * height
    flat = np.empty(total, dtype=np.int32)
    filled = 0
    while filled < total:
        lab = take(lw)
        zeros = 0
        while bits[pos] == 0:
            zeros += 1
            pos += 1
        run = take(zeros + 1)
        if filled + run > total or lab >= n_segments:
            raise ValueError("corrupt semantic map")
        flat[filled:filled + run] = lab
        filled += run
    return flat.reshape(height, width), n_segments


@dataclass(frozen=True)
class SemanticMap:
    labels: np.ndarray
    n_segments: int
    encoded_size_bits: int = field(init=False)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int32)
        if labels.ndim != 2:
            raise ValueError("semantic map must be 2-D")
        present = np.unique(labels)
        if present.tolist() != list(range(self.n_segments)):
            raise ValueError(f"labels must cover 0..{self.n_segments - 1} exactly, got {present.tolist()}")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "encoded_size_bits", int(rle_encode(labels, self.n_segments).size))

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def encode(self) -> np.ndarray:
        return rle_encode(self.labels, self.n_segments)

    @classmethod
    def decode(cls, bits: np.ndarray) -> SemanticMap:
        labels, n = rle_decode(bits)
        return cls(labels, n)


@dataclass(frozen=True)
class SemanticSegment:
    id: int
    pixel_coords: np.ndarray  # (N, 2) of (row, col), row-major order
    samples: np.ndarray       # (N,) uint8

    @property
    def length(self) -> int:
        return int(self.samples.size)

    def with_samples(self, samples) -> SemanticSegment:
        samples = np.asarray(samples)
        if samples.shape != self.samples.shape:
            raise ValueError(f"segment {self.id}: expected {self.samples.size} samples, got {samples.size}")
        return SemanticSegment(self.id, self.pixel_coords, np.clip(np.rint(samples), 0, 255).astype(np.uint8))


# ---------------------------------------------------------------------------
# operations


def generate_scene(spec: SceneSpec) -> tuple[np.ndarray, SemanticMap, list[SemanticSegment]]:
    spec.validate()
    h, w = spec.height, spec.width
    labels = np.full((h, w), -1, dtype=np.int32)
    remainder_id = None
    for sid, (name, region) in enumerate(spec.segment_layout):
        if isinstance(region, Remainder):
            remainder_id = sid
            continue
        m = region.mask(h, w)
        if not m.any():
            raise ConfigError(f"region {name!r} covers no pixels")
        if (labels[m] >= 0).any():
            raise ConfigError(f"region {name!r} overlaps an earlier region")
        labels[m] = sid
    rest = labels < 0
    if not rest.any():
        raise ConfigError("remainder region is empty")
    labels[rest] = remainder_id

    noise = _rng.substream(spec.texture_seed, _rng.TEXTURE).standard_normal((h, w))
    image = np.empty((h, w), dtype=np.float64)
    for sid, name in enumerate(spec.labels):
        tex = spec.texture_params[name]
        m = labels == sid
        image[m] = tex.mean + math.sqrt(tex.variance) * noise[m]
    image = np.clip(np.rint(image), 0, 255).astype(np.uint8)

    smap = SemanticMap(labels, len(spec.segment_layout))
    return image, smap, partition(image, smap)


def partition(image: np.ndarray, smap: SemanticMap) -> list[SemanticSegment]:
    image = np.asarray(image)
    if image.shape != smap.shape:
        raise ValueError(f"image shape {image.shape} does not match map shape {smap.shape}")
    segments = []
    for sid in range(smap.n_segments):
        m = smap.labels == sid
        segments.append(SemanticSegment(sid, np.argwhere(m), image[m].astype(np.uint8)))
    return segments


def reassemble(segments: list[SemanticSegment], smap: SemanticMap) -> np.ndarray:
    by_id = {s.id: s for s in segments}
    missing = sorted(set(range(smap.n_segments)) - by_id.keys())
    if missing:
        raise ValueError(f"segments {missing} missing from reconstruction")
    if len(by_id) != smap.n_segments or len(segments) != smap.n_segments:
        raise ValueError("unexpected or duplicate segment ids")
    out = np.empty(smap.shape, dtype=np.uint8)
    for sid in range(smap.n_segments):
        m = smap.labels == sid
        seg = by_id[sid]
        if seg.samples.size != int(m.sum()):
            raise ValueError(f"segment {sid} has {seg.samples.size} samples, map expects {int(m.sum())}")
        out[m] = seg.samples
    return out


def map_overhead(smap: SemanticMap, compressed_payload_bits: int) -> float:
    if compressed_payload_bits <= 0:
        raise ValueError("compressed payload must be positive")
    return smap.encoded_size_bits / compressed_payload_bits


# ---------------------------------------------------------------------------
# binary PGM (P5, maxval 255)


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(image.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos].decode("ascii"))
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic != "P5" or maxval != 255:
        raise ValueError(f"unsupported PGM: {magic} maxval={maxval}")
    pos += 1
    return np.frombuffer(data[pos:pos + w * h], dtype=np.uint8).reshape(h, w).copy()
