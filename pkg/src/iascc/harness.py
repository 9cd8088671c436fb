"""End-to-end experiments: the 24-stream power-allocation comparison, SNR sweeps,
the token-program demo and the multicast (receiver-specific) demo."""

from __future__ import annotations

import json
import logging
import math
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import rng as _rng
from .config import ExperimentConfig
from .errors import ProgramCorrupted
from .fec import (
    NASA_K7, ProtectionPolicy, conv_encode, crc_append, crc_check, decode_blocks,
    protect, unprotect,
)
from .metrics import ms_ssim, psnr, weighted_sed
from .multiuser import (
    ReceiverSpec, decode_to_layer, min_depth_for_target, rate_split, receiver_distortion,
    schedule_progressive, truncation_distortions, write_plan_csv,
)
from .phy import ChannelRealization, SubChannel, default_gains, qam16_modulate, rayleigh_gains, receive, transmit
from .power_allocation import POLICIES, AllocationProblem, stream_index, stream_weights, weighted_ber, write_allocation_csv
from .rate_distortion import empirical_sed
from .semantic_model import generate_scene, map_overhead, reassemble, write_pgm
from .tokenizer import (
    N_PLANES, BitPlaneStream, Count, classify_tli, flip_count_bit, group_tokens,
    kolmo_decode, kolmo_encode, merge_bitplanes, split_bitplanes, token_bits, tokenize_segment,
)

log = logging.getLogger(__name__)

CHANNEL_STREAM = 10  # substream id for Rayleigh gain draws


def fmt(v: float) -> str:
    return f"{v:.9g}"


def version_string() -> str:
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# ---------------------------------------------------------------------------
# the 24-stream link


@dataclass
class StreamPayload:
    stream_id: int
    segment: int
    plane: int
    bits: np.ndarray
    block_sizes: list[int]
    symbols: np.ndarray
    n_coded: int


def split_blocks(n: int, block_bits: int) -> list[int]:
    sizes = [block_bits] * (n // block_bits)
    if n % block_bits:
        sizes.append(n % block_bits)
    return sizes


def encode_stream(bits: np.ndarray, block_bits: int) -> tuple[list[int], np.ndarray]:
    """Zero-tail conv-code each block, concatenate, map to 16-QAM."""
    sizes = split_blocks(bits.size, block_bits)
    coded, pos = [], 0
    for s in sizes:
        coded.append(conv_encode(bits[pos:pos + s]))
        pos += s
    coded = np.concatenate(coded)
    symbols, _ = qam16_modulate(coded)
    return sizes, symbols, coded.size


def channel_realization(cfg: ExperimentConfig, trial: int) -> ChannelRealization:
    m, snr = cfg.channel.n_subchannels, cfg.channel.avg_snr_db
    if cfg.channel.mode == "rayleigh":
        return rayleigh_gains(_rng.substream(cfg.seed, CHANNEL_STREAM, trial), m, snr)
    return default_gains(m, snr)


@dataclass
class PolicyOutcome:
    policy: str
    powers: np.ndarray
    weighted_ber_objective: float
    segment_sed: np.ndarray
    weighted_sed: float
    ms_ssim: float
    psnr: float
    stream_ber: np.ndarray
    image: np.ndarray


@dataclass
class RunReport:
    config: ExperimentConfig
    weights: np.ndarray
    gains: np.ndarray
    original: np.ndarray
    outcomes: dict[str, PolicyOutcome]
    metadata: dict = field(default_factory=dict)

    def csv_rows(self) -> list[tuple[str, str, str, str, str]]:
        rows = []
        for name, o in self.outcomes.items():
            for seg, d in enumerate(o.segment_sed):
                rows.append((name, str(seg), "", "sed", fmt(d)))
            rows.append((name, "", "", "weighted_sed", fmt(o.weighted_sed)))
            rows.append((name, "", "", "ms_ssim", fmt(o.ms_ssim)))
            rows.append((name, "", "", "psnr", fmt(o.psnr)))
            rows.append((name, "", "", "weighted_ber_objective", fmt(o.weighted_ber_objective)))
            for sid, b in enumerate(o.stream_ber):
                seg, plane = divmod(sid, N_PLANES)
                rows.append((name, str(seg), str(N_PLANES - 1 - plane), "ber", fmt(b)))
        return rows


def _simulate_trial(cfg: ExperimentConfig, trial: int, image, smap, segments, payloads, policies):
    chan = channel_realization(cfg, trial)
    weights = stream_weights(cfg.importance.sli, exponent_base=cfg.importance.bli_exponent_base)
    prob = AllocationProblem(chan.gains, chan.n0, chan.total_power, weights,
                             coding_gain=NASA_K7.asymptotic_coding_gain)
    subchannels = chan.subchannels()
    results = {}
    for name in policies:
        alloc = POLICIES[name](prob)
        llr_blocks, owners = [], []
        for pl in payloads:
            p = float(alloc.powers[pl.stream_id])
            ch = subchannels[pl.stream_id]
            # common random numbers: the noise depends only on (seed, sub-channel, trial)
            noise_rng = _rng.substream(cfg.seed, _rng.SUBCHANNEL_NOISE + pl.stream_id, trial)
            y = transmit(pl.symbols, p, ch, noise_rng)
            llr, _ = receive(y, p, ch)
            llr = llr[:pl.n_coded]
            pos = 0
            for s in pl.block_sizes:
                n = 2 * (s + NASA_K7.memory)
                llr_blocks.append(llr[pos:pos + n])
                owners.append(pl.stream_id)
                pos += n
        decoded = decode_blocks(llr_blocks)
        per_stream: dict[int, list[np.ndarray]] = {}
        for sid, d in zip(owners, decoded):
            per_stream.setdefault(sid, []).append(d)
        stream_ber = np.zeros(len(payloads))
        rec_segments = []
        planes_by_seg: dict[int, list[BitPlaneStream]] = {}
        for pl in payloads:
            bits = np.concatenate(per_stream[pl.stream_id])
            stream_ber[pl.stream_id] = float(np.mean(bits != pl.bits))
            planes_by_seg.setdefault(pl.segment, []).append(BitPlaneStream(pl.segment, pl.plane, bits))
        seds = []
        for seg in segments:
            tokens = merge_bitplanes(planes_by_seg[seg.id])
            rec = seg.with_samples(tokens.values)
            rec_segments.append(rec)
            seds.append(empirical_sed(seg.samples, rec.samples))
        recon = reassemble(rec_segments, smap)
        seds = np.array(seds)
        results[name] = PolicyOutcome(
            policy=name,
            powers=alloc.powers,
            weighted_ber_objective=weighted_ber(prob, alloc.powers),
            segment_sed=seds,
            weighted_sed=weighted_sed(seds, cfg.importance.sli),
            ms_ssim=ms_ssim(image, recon),
            psnr=psnr(image, recon),
            stream_ber=stream_ber,
            image=recon,
        )
    return chan, weights, results


def _prepare(cfg: ExperimentConfig):
    image, smap, segments = generate_scene(cfg.scene)
    payloads = []
    for seg in segments:
        planes = split_bitplanes(tokenize_segment(seg))
        for b in range(N_PLANES - 1, -1, -1):
            sid = stream_index(seg.id, b)
            sizes, symbols, n_coded = encode_stream(planes[b].bits, cfg.coding.block_bits)
            payloads.append(StreamPayload(sid, seg.id, b, planes[b].bits, sizes, symbols, n_coded))
    payloads.sort(key=lambda p: p.stream_id)
    return image, smap, segments, payloads


def run_fig6(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> RunReport:
    """Scene -> 24 bit-plane streams -> conv code -> 16-QAM -> AWGN sub-channels, per policy.

    Metrics are averaged over ``cfg.trials``; the reconstructions written out
    are those of trial 0. All policies see the same noise realisation.
    """
    cfg.validate()
    image, smap, segments, payloads = _prepare(cfg)
    policies = cfg.policies
    acc: dict[str, list[PolicyOutcome]] = {p: [] for p in policies}
    chan0 = weights = None
    for trial in range(cfg.trials):
        chan, weights, res = _simulate_trial(cfg, trial, image, smap, segments, payloads, policies)
        if trial == 0:
            chan0 = chan
        for p, o in res.items():
            acc[p].append(o)

    outcomes = {}
    for p, runs in acc.items():
        outcomes[p] = PolicyOutcome(
            policy=p,
            powers=runs[0].powers,
            weighted_ber_objective=float(np.mean([r.weighted_ber_objective for r in runs])),
            segment_sed=np.mean([r.segment_sed for r in runs], axis=0),
            weighted_sed=float(np.mean([r.weighted_sed for r in runs])),
            ms_ssim=float(np.mean([r.ms_ssim for r in runs])),
            psnr=float(np.mean([r.psnr for r in runs])),
            stream_ber=np.mean([r.stream_ber for r in runs], axis=0),
            image=runs[0].image,
        )

    payload_bits = 2 * image.size
    meta = {
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "version": version_string(),
        "trials": cfg.trials,
        "average_snr_db": chan0.average_snr_db,
        "rng": "Philox4x64-10 keyed (seed, stream_id << 32 | trial_id)",
        "map_overhead_at_2bps": map_overhead(smap, payload_bits),
        "map_bits": smap.encoded_size_bits,
    }
    if {"equal", "waterfilling", "importance"} <= set(outcomes):
        imp = outcomes["importance"]
        bg = int(np.argmin(cfg.importance.sli))
        meta["importance_beats_baselines"] = bool(
            imp.weighted_sed < outcomes["equal"].weighted_sed and imp.weighted_sed < outcomes["waterfilling"].weighted_sed)
        meta["background_tradeoff_observed"] = bool(imp.segment_sed[bg] >= outcomes["equal"].segment_sed[bg])
        if not meta["background_tradeoff_observed"]:
            log.warning("background segment SED did not increase under importance allocation (seed %d)", cfg.seed)
    log.info("semantic map overhead at 2 bits/sample: %.4f", meta["map_overhead_at_2bps"])
    report = RunReport(cfg, weights, chan0.gains, image, outcomes, meta)
    if out_dir is not None:
        write_fig6_outputs(report, out_dir)
    return report


def write_fig6_outputs(report: RunReport, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.csv", "w") as f:
        f.write("policy,segment,plane,metric,value\n")
        for row in report.csv_rows():
            f.write(",".join(row) + "\n")
    alloc_rows = []
    n0 = 1.0
    for name, o in report.outcomes.items():
        for sid in range(report.weights.size):
            seg, k = divmod(sid, N_PLANES)
            snr = o.powers[sid] * report.gains[sid] / n0
            snr_db = 10 * math.log10(snr) if snr > 0 else float("-inf")
            alloc_rows.append((name, sid, seg, N_PLANES - 1 - k, report.weights[sid], report.gains[sid],
                               o.powers[sid], snr_db))
    write_allocation_csv(out / "alloc.csv", alloc_rows)
    for name, o in report.outcomes.items():
        write_pgm(out / f"recon_{name}.pgm", o.image)
    write_pgm(out / "original.pgm", report.original)
    meta = dict(report.metadata, config=report.config.to_dict())
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# SNR sweep


def sweep_snr(cfg: ExperimentConfig, snr_list, out_path: str | Path | None = None) -> list[tuple[float, str, str, float]]:
    """One row per (snr, policy, metric), metrics averaged over ``cfg.trials``."""
    snr_list = [float(s) for s in snr_list]
    if not snr_list:
        raise ValueError("snr_list must not be empty")
    rows = []
    for snr in snr_list:
        rep = run_fig6(cfg.with_snr(snr))
        for name, o in rep.outcomes.items():
            rows.append((snr, name, "weighted_sed", o.weighted_sed))
            rows.append((snr, name, "ms_ssim", o.ms_ssim))
            rows.append((snr, name, "psnr", o.psnr))
            rows.append((snr, name, "mean_ber", float(np.mean(o.stream_ber))))
    if out_path is not None:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w") as f:
            f.write("snr_db,policy,metric,value\n")
            for snr, name, metric, v in rows:
                f.write(f"{fmt(snr)},{name},{metric},{fmt(v)}\n")
    return rows


# ---------------------------------------------------------------------------
# token-program demo


@dataclass(frozen=True)
class FlipOutcome:
    label: str
    bit: int
    length: int
    deviation: int
    detected_by_crc: bool


def demo_tokens(n_repeats: int = 1_000_000) -> tuple[str, list[FlipOutcome], dict[str, str]]:
    """Run the ``repeat '10' a million times`` example with Count-token bit flips."""
    source = "10" * n_repeats
    program = kolmo_encode(source)
    clean = kolmo_decode(program).output
    lines = [f"program: {program.to_text()}",
             f"clean decode: {len(clean)} digits, exact={clean == source}"]

    count_tok = next(t for t in program.tokens if isinstance(t, Count))
    count_bits = crc_append(token_bits(count_tok))
    msb = count_tok.value.bit_length() - 1
    flips = []
    for label, bit in (("LSB", 0), ("MSB", msb)):
        bad = flip_count_bit(program, bit)
        try:
            out_len = len(kolmo_decode(bad).output)
        except ProgramCorrupted:
            out_len = -1
        # the count token travels CRC-protected (moderately robust class)
        rx = count_bits.copy()
        rx[len(rx) - 16 - 1 - bit] ^= 1
        flips.append(FlipOutcome(label, bit, out_len, abs(out_len - len(source)), not crc_check(rx)))
    for f in flips:
        lines.append(f"count {f.label} flip (bit {f.bit}): {f.length} digits, deviation {f.deviation}, "
                     f"CRC detected={f.detected_by_crc}")

    typo = program.replace(3, type(program.tokens[3])("timex"))
    res = kolmo_decode(typo)
    lines.append(f"keyword typo 'timex': status={res.status}, exact={res.output == source}")
    wrong = kolmo_decode(program.replace(1, type(program.tokens[1])("11")))
    lines.append(f"pattern '10'->'11': status={wrong.status}, exact={wrong.output == source} (undetected)")

    classes = {}
    for t in program.tokens:
        c = classify_tli(t, program)
        key = getattr(t, "text", None) or getattr(t, "bits", None) or str(t.value)
        classes[key] = c.name
    blocks = group_tokens(list(program.tokens), [classify_tli(t, program) for t in program.tokens])
    lines.append("token classes: " + ", ".join(f"{k}={v}" for k, v in classes.items()))
    for b in blocks:
        lines.append(f"block {b.tli_class.name}: {b.bits.size} bits, scheme "
                     f"{ProtectionPolicy().scheme(b.tli_class).value}")
    # round trip every block through its protection scheme on a clean channel
    for b in blocks:
        if not np.array_equal(unprotect(protect(b)).bits, b.bits):
            raise RuntimeError(f"{b.tli_class.name} block did not survive a clean channel")
    return "\n".join(lines), flips, classes


# ---------------------------------------------------------------------------
# multicast demo


@dataclass(frozen=True)
class ReceiverRow:
    receiver: int
    segment: int
    depth: int
    reachable: bool
    distortion: float
    target: float
    satisfied: bool


def _send_layer_bits(bits: np.ndarray, snr_db: float | None, rng: np.random.Generator, block_bits: int) -> np.ndarray:
    if bits.size == 0 or snr_db is None:
        return bits.copy()
    sizes, symbols, n_coded = encode_stream(bits, block_bits)
    ch = SubChannel(0, 10 ** (snr_db / 10), 1.0)
    llr, _ = receive(transmit(symbols, 1.0, ch, rng), 1.0, ch)
    llr = llr[:n_coded]
    blocks, pos = [], 0
    for s in sizes:
        n = 2 * (s + NASA_K7.memory)
        blocks.append(llr[pos:pos + n])
        pos += n
    return np.concatenate(decode_blocks(blocks)).astype(np.uint8)


def multicast_demo(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> list[ReceiverRow]:
    """Progressive multicast: each receiver decodes each segment only as deep as its target needs."""
    cfg.validate()
    if len(cfg.rsi.receivers) < 2:
        raise ValueError("multicast demo needs at least two receivers")
    image, smap, segments = generate_scene(cfg.scene)
    K = cfg.rsi.K
    tokens = {s.id: tokenize_segment(s) for s in segments}
    layers = {sid: rate_split(t, K) for sid, t in tokens.items()}
    plan = schedule_progressive(layers, cfg.importance.sli, smap.encoded_size_bits)
    rows = []
    for n, rcfg in enumerate(cfg.rsi.receivers):
        rx = ReceiverSpec(rcfg.id, rcfg.snr_db, cfg.importance.targets_for(n))
        for seg in segments:
            target = float(rx.targets[seg.id])
            depth, reachable = min_depth_for_target(tokens[seg.id], K, target)
            received = []
            for layer in layers[seg.id][:depth]:
                frame = next(f for f in plan if f.kind == "layer" and f.segment_id == seg.id and f.k == layer.k)
                noise = _rng.substream(cfg.seed, _rng.RECEIVER_NOISE + n * 4096 + frame.frame_id)
                received.append(layer.with_payload(_send_layer_bits(layer.payload, rx.snr_db, noise,
                                                                    cfg.coding.block_bits)))
            rec = decode_to_layer(received, depth, n_tokens=len(tokens[seg.id]), segment_id=seg.id)
            d = receiver_distortion(tokens[seg.id].values, rec.values)
            rows.append(ReceiverRow(rx.id, seg.id, depth, reachable, d, target, d <= target))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_plan_csv(out / "plan.csv", plan)
        with open(out / "multicast.csv", "w") as f:
            f.write("receiver,segment,depth,reachable,distortion,target,satisfied\n")
            for r in rows:
                f.write(f"{r.receiver},{r.segment},{r.depth},{int(r.reachable)},{fmt(r.distortion)},"
                        f"{fmt(r.target)},{int(r.satisfied)}\n")
    return rows


def truncation_table(cfg: ExperimentConfig) -> dict[int, np.ndarray]:
    """Noiseless distortion per segment at depths 0..K."""
    _, _, segments = generate_scene(cfg.scene)
    return {s.id: truncation_distortions(tokenize_segment(s), cfg.rsi.K) for s in segments}
