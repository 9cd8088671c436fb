"""Experiment configuration: strict JSON loading, defaults and hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .semantic_model import (
    ImportanceProfile, Polygon, Rectangle, Remainder, SceneSpec, Texture, default_scene_spec,
)
from .tokenizer import N_PLANES

POLICY_NAMES = ("equal", "waterfilling", "importance")


@dataclass(frozen=True)
class ChannelConfig:
    mode: str = "fixed"  # fixed | rayleigh
    avg_snr_db: float = 10.0
    n_subchannels: int = 24


@dataclass(frozen=True)
class CodingConfig:
    block_bits: int = 2048
    harq_max: int = 4


@dataclass(frozen=True)
class ReceiverConfig:
    id: int
    snr_db: float | None = None


@dataclass(frozen=True)
class RsiConfig:
    K: int = 4
    receivers: tuple[ReceiverConfig, ...] = ()


@dataclass(frozen=True)
class ExperimentConfig:
    scene: SceneSpec
    importance: ImportanceProfile
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    coding: CodingConfig = field(default_factory=CodingConfig)
    allocation: str = "all"
    rsi: RsiConfig = field(default_factory=RsiConfig)
    trials: int = 1
    seed: int = 42

    @property
    def policies(self) -> tuple[str, ...]:
        return POLICY_NAMES if self.allocation == "all" else (self.allocation,)

    def validate(self) -> None:
        self.scene.validate()
        n_seg = len(self.scene.segment_layout)
        self.importance.validate(n_seg)
        if self.channel.mode not in ("fixed", "rayleigh"):
            raise ConfigError(f"unknown channel mode {self.channel.mode!r}")
        if self.channel.n_subchannels != n_seg * N_PLANES:
            raise ConfigError(
                f"n_subchannels must equal segments x {N_PLANES} = {n_seg * N_PLANES}, got {self.channel.n_subchannels}")
        if self.coding.block_bits < 1 or self.coding.harq_max < 1:
            raise ConfigError("block_bits and harq_max must be at least 1")
        if self.allocation not in POLICY_NAMES + ("all",):
            raise ConfigError(f"unknown allocation policy {self.allocation!r}")
        if not 1 <= self.rsi.K <= N_PLANES:
            raise ConfigError(f"rsi.K must be in 1..{N_PLANES}")
        n_rx = len(self.importance.rsi_targets[0]) if self.importance.rsi_targets else 0
        if self.rsi.receivers and n_rx != len(self.rsi.receivers):
            raise ConfigError(f"{len(self.rsi.receivers)} receivers but rsi_targets has {n_rx} columns")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not 0 <= self.seed < 1 << 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def with_seed(self, seed: int) -> ExperimentConfig:
        return replace(self, seed=int(seed))

    def with_snr(self, snr_db: float) -> ExperimentConfig:
        return replace(self, channel=replace(self.channel, avg_snr_db=float(snr_db)))

    def to_dict(self) -> dict[str, Any]:
        return {
            "scene": _scene_to_dict(self.scene),
            "importance": {
                "sli": list(self.importance.sli),
                "rsi_targets": [list(r) for r in self.importance.rsi_targets],
                "bli_exponent_base": self.importance.bli_exponent_base,
            },
            "channel": asdict(self.channel),
            "coding": asdict(self.coding),
            "allocation": self.allocation,
            "rsi": {"K": self.rsi.K, "receivers": [asdict(r) for r in self.rsi.receivers]},
            "trials": self.trials,
            "seed": self.seed,
        }

    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# parsing


def _check_keys(d: Any, where: str, required: set[str], optional: set[str] = frozenset()) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(d) - required - optional
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    missing = required - set(d)
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")
    return d


def _num(v: Any, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    return float(v)


def _int(v: Any, where: str) -> int:
    if isinstance(v, bool) or not (isinstance(v, int) or (isinstance(v, float) and v.is_integer())):
        raise ConfigError(f"{where}: expected an integer, got {v!r}")
    return int(v)


def _region(d: dict, where: str):
    kind = d.get("kind") if isinstance(d, dict) else None
    if kind == "rectangle":
        _check_keys(d, where, {"kind", "x0", "y0", "x1", "y1"})
        return Rectangle(*(_int(d[k], f"{where}.{k}") for k in ("x0", "y0", "x1", "y1")))
    if kind == "polygon":
        _check_keys(d, where, {"kind", "vertices"})
        verts = tuple((_num(x, where), _num(y, where)) for x, y in d["vertices"])
        if len(verts) < 3:
            raise ConfigError(f"{where}: polygon needs at least 3 vertices")
        return Polygon(verts)
    if kind == "remainder":
        _check_keys(d, where, {"kind"})
        return Remainder()
    raise ConfigError(f"{where}: region kind must be rectangle, polygon or remainder, got {kind!r}")


def _region_to_dict(r) -> dict:
    if isinstance(r, Rectangle):
        return {"kind": "rectangle", "x0": r.x0, "y0": r.y0, "x1": r.x1, "y1": r.y1}
    if isinstance(r, Polygon):
        return {"kind": "polygon", "vertices": [[float(x), float(y)] for x, y in r.vertices]}
    return {"kind": "remainder"}


def _scene_to_dict(s: SceneSpec) -> dict:
    return {
        "width": s.width,
        "height": s.height,
        "segment_layout": [{"label": n, "region": _region_to_dict(r)} for n, r in s.segment_layout],
        "texture_seed": s.texture_seed,
        "texture_params": {k: {"mean": float(t.mean), "variance": float(t.variance)}
                           for k, t in s.texture_params.items()},
    }


def _scene(d: dict) -> SceneSpec:
    _check_keys(d, "scene", {"width", "height", "segment_layout", "texture_seed", "texture_params"})
    layout = []
    for i, item in enumerate(d["segment_layout"]):
        w = f"scene.segment_layout[{i}]"
        _check_keys(item, w, {"label", "region"})
        layout.append((str(item["label"]), _region(item["region"], w + ".region")))
    tex = {}
    for name, t in _check_keys(d["texture_params"], "scene.texture_params", set(d["texture_params"])).items():
        _check_keys(t, f"scene.texture_params.{name}", {"mean", "variance"})
        tex[name] = Texture(_num(t["mean"], name), _num(t["variance"], name))
    return SceneSpec(_int(d["width"], "scene.width"), _int(d["height"], "scene.height"),
                     tuple(layout), _int(d["texture_seed"], "scene.texture_seed"), tex)


def from_dict(d: dict) -> ExperimentConfig:
    _check_keys(d, "config", {"scene", "importance"},
                {"channel", "coding", "allocation", "rsi", "trials", "seed"})
    imp = _check_keys(d["importance"], "importance", {"sli"}, {"rsi_targets", "bli_exponent_base"})
    importance = ImportanceProfile(
        tuple(_num(w, "importance.sli") for w in imp["sli"]),
        tuple(tuple(_num(x, "importance.rsi_targets") for x in row) for row in imp.get("rsi_targets", [])),
        _num(imp.get("bli_exponent_base", 4.0), "importance.bli_exponent_base"),
    )
    ch = _check_keys(d.get("channel", {}), "channel", set(), {"mode", "avg_snr_db", "n_subchannels"})
    channel = ChannelConfig(str(ch.get("mode", "fixed")), _num(ch.get("avg_snr_db", 10.0), "channel.avg_snr_db"),
                            _int(ch.get("n_subchannels", 24), "channel.n_subchannels"))
    co = _check_keys(d.get("coding", {}), "coding", set(), {"block_bits", "harq_max"})
    coding = CodingConfig(_int(co.get("block_bits", 2048), "coding.block_bits"),
                          _int(co.get("harq_max", 4), "coding.harq_max"))
    rs = _check_keys(d.get("rsi", {}), "rsi", set(), {"K", "receivers"})
    receivers = []
    for i, r in enumerate(rs.get("receivers", [])):
        _check_keys(r, f"rsi.receivers[{i}]", {"id"}, {"snr_db"})
        snr = r.get("snr_db")
        receivers.append(ReceiverConfig(_int(r["id"], "id"), None if snr is None else _num(snr, "snr_db")))
    cfg = ExperimentConfig(
        scene=_scene(d["scene"]),
        importance=importance,
        channel=channel,
        coding=coding,
        allocation=str(d.get("allocation", "all")),
        rsi=RsiConfig(_int(rs.get("K", 4), "rsi.K"), tuple(receivers)),
        trials=_int(d.get("trials", 1), "trials"),
        seed=_int(d.get("seed", 42), "seed"),
    )
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON: {e}") from None
    return from_dict(data)


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")


def default_config(width: int = 256, height: int = 256, seed: int = 42) -> ExperimentConfig:
    """Three-segment, 24-stream desk-scale setup: base/stag/background at 49.75/49.75/0.5 %."""
    cfg = ExperimentConfig(
        scene=default_scene_spec(width, height),
        importance=ImportanceProfile(
            sli=(0.4975, 0.4975, 0.005),
            rsi_targets=((5.0, 400.0), (5.0, 400.0), (50.0, 400.0)),
            bli_exponent_base=4.0,
        ),
        rsi=RsiConfig(K=4, receivers=(ReceiverConfig(0, 20.0), ReceiverConfig(1, 12.0))),
        seed=seed,
    )
    cfg.validate()
    return cfg
