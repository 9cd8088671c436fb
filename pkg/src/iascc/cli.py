"""Command-line entry point.

    iascc simulate fig6 --config cfg.json --seed 42 --out runs/fig6
    iascc sweep --config cfg.json --snr 0,5,10,15,20 [--out sweep.csv]
    iascc demo tokens
    iascc multicast --config cfg.json [--out dir]
    iascc rd --variances 1,4 --rate 1.5 [--lengths 100,100]
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import default_config, load_config
from .errors import ConfigError
from .harness import demo_tokens, fmt, multicast_demo, run_fig6, sweep_snr
from .rate_distortion import RdModel, gaussian_rd, reverse_waterfill


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _config(path):
    return load_config(path) if path else default_config()


def cmd_simulate(args) -> int:
    cfg = _config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    rep = run_fig6(cfg, args.out)
    print("policy,weighted_sed,ms_ssim,psnr," + ",".join(f"sed_seg{i}" for i in range(len(cfg.importance.sli))))
    for name, o in rep.outcomes.items():
        print(",".join([name, fmt(o.weighted_sed), fmt(o.ms_ssim), fmt(o.psnr)] + [fmt(d) for d in o.segment_sed]))
    for k in ("importance_beats_baselines", "background_tradeoff_observed", "map_overhead_at_2bps"):
        if k in rep.metadata:
            print(f"# {k}: {rep.metadata[k]}")
    print(f"# outputs in {args.out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    rows = sweep_snr(cfg, args.snr, args.out)
    if args.out is None:
        print("snr_db,policy,metric,value")
        for snr, name, metric, v in rows:
            print(f"{fmt(snr)},{name},{metric},{fmt(v)}")
    return 0


def cmd_demo(args) -> int:
    text, _, _ = demo_tokens()
    print(text)
    return 0


def cmd_multicast(args) -> int:
    rows = multicast_demo(_config(args.config), args.out)
    print("receiver,segment,depth,reachable,distortion,target,satisfied")
    for r in rows:
        print(f"{r.receiver},{r.segment},{r.depth},{int(r.reachable)},{fmt(r.distortion)},{fmt(r.target)},{int(r.satisfied)}")
    return 0


def cmd_rd(args) -> int:
    lengths = args.lengths or [1.0] * len(args.variances)
    model = RdModel(args.variances, lengths)
    budget = reverse_waterfill(model, args.rate)
    print(f"# water level {fmt(budget.water_level)}")
    print("segment,variance,length,distortion,rate_bits_per_sample")
    for i, (v, n, d) in enumerate(zip(model.variances, model.lengths, budget.per_segment_D)):
        print(f"{i},{fmt(v)},{fmt(n)},{fmt(d)},{fmt(gaussian_rd(v, d))}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iascc", description="importance-aware source-channel coding simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run an experiment")
    sim.add_argument("experiment", choices=["fig6"])
    sim.add_argument("--config", type=Path)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out", type=Path, default=Path("out"))
    sim.set_defaults(func=cmd_simulate)

    sw = sub.add_parser("sweep", help="metric-vs-SNR curves")
    sw.add_argument("--config", type=Path)
    sw.add_argument("--snr", type=_floats, default=[0, 5, 10, 15, 20])
    sw.add_argument("--seed", type=int)
    sw.add_argument("--out", type=Path)
    sw.set_defaults(func=cmd_sweep)

    demo = sub.add_parser("demo", help="token-program demonstration")
    demo.add_argument("what", choices=["tokens"])
    demo.set_defaults(func=cmd_demo)

    mc = sub.add_parser("multicast", help="receiver-specific progressive decoding")
    mc.add_argument("--config", type=Path)
    mc.add_argument("--out", type=Path)
    mc.set_defaults(func=cmd_multicast)

    rd = sub.add_parser("rd", help="reverse water-filling of a rate budget")
    rd.add_argument("--variances", type=_floats, required=True)
    rd.add_argument("--lengths", type=_floats)
    rd.add_argument("--rate", type=float, required=True)
    rd.set_defaults(func=cmd_rd)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
