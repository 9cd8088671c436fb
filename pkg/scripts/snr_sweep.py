#!/usr/bin/env python3
"""Metric-vs-SNR curves for all three allocation policies."""

import argparse
from collections import defaultdict
from dataclasses import replace
from pathlib import Path

from iascc.config import default_config, load_config
from iascc.harness import sweep_snr


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path)
    ap.add_argument("--snr", default="0,5,10,15,20", help="comma-separated average SNRs in dB")
    ap.add_argument("--trials", type=int, default=3)
    ap.add_argument("--out", type=Path, default=Path("runs/sweep.csv"))
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else default_config()
    cfg = replace(cfg, trials=args.trials)
    rows = sweep_snr(cfg, [float(s) for s in args.snr.split(",")], args.out)

    table = defaultdict(dict)
    for snr, policy, metric, value in rows:
        if metric == "weighted_sed":
            table[snr][policy] = value
    policies = cfg.policies
    print("snr_db " + " ".join(f"{p:>14}" for p in policies))
    for snr, vals in table.items():
        print(f"{snr:6g} " + " ".join(f"{vals[p]:14.5g}" for p in policies))
    print(f"full table: {args.out}")


if __name__ == "__main__":
    main()
