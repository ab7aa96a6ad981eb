#!/usr/bin/env python3
"""Head-to-head comparison of the three algorithms on the desk-scale
grid scenarios. Prints final running-average welfare per seed and writes
metrics CSVs under out/benchmarks/."""

import argparse
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from nfsip import cli, trainer
from nfsip.config import parse_config

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scenarios", nargs="*", default=["box_v1_desk", "fire_v1_desk"])
    ap.add_argument("--algos", nargs="*", default=["nfsp", "nfsip", "acsil"])
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--out", default="out/benchmarks")
    args = ap.parse_args()

    for scenario in args.scenarios:
        path = os.path.join(CONFIG_DIR, scenario + ".cfg")
        for algo in args.algos:
            cfg = parse_config(path, {"algo": algo, "runs": str(args.runs)})
            metrics = trainer.run_experiment(cfg)
            out_dir = os.path.join(args.out, scenario, algo)
            cli.emit_metrics(metrics, out_dir)
            finals = [np.mean(m.welfare[-100:]) for m in metrics]
            print(
                f"{scenario:>14} {algo:>6}: final-100 welfare "
                f"mean={np.mean(finals):.3f} var={np.var(finals):.3f} "
                f"per-seed={[round(float(f), 2) for f in finals]}"
            )


if __name__ == "__main__":
    main()
