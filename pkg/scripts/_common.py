"""Shared driver for the benchmark scripts: run a small grid, report the best point."""
from __future__ import annotations

import argparse
import logging
import os
from pathlib import Path

from crsnet.bench import ExperimentConfig, export_report, grid_run
from crsnet.mllp import TrainConfig

DATA = Path(__file__).resolve().parents[1] / "data"


def run(name: str, archs: list[str], l0_lambdas: list[float], description: str) -> None:
    parser = argparse.ArgumentParser(description=description)
    parser.add_argument("--data", default=str(DATA / f"{name}.csv"))
    parser.add_argument("--spec", default=str(DATA / f"{name}.spec"))
    parser.add_argument("--arch", nargs="+", default=archs)
    parser.add_argument("--l0-lambda", nargs="+", type=float, default=l0_lambdas,
                        help="0 runs the ungated baseline")
    parser.add_argument("--epochs", type=int, default=400)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", default=None)
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    if not Path(args.data).is_file():
        raise SystemExit(f"{args.data} not found; see scripts/prepare_datasets.py")
    out = Path(args.out_dir or Path(os.environ.get("CRSNET_OUTPUT", "results")) / name)
    spec = args.spec if Path(args.spec).is_file() else None
    template = ExperimentConfig(args.data, spec, architecture=args.arch[0], seed=args.seed,
                                train=TrainConfig(epochs=args.epochs, rb_rate=0.0), out_dir=str(out))
    records, front = grid_run(template, {"architecture": args.arch, "l0_lambda": args.l0_lambda})
    print(f"{'run':<40} {'mllp f1':>8} {'crs f1':>8} {'complexity':>11}")
    for r in records:
        if r.error:
            print(f"{r.run_id:<40} failed: {r.error}")
            continue
        a = r.aggregate
        print(f"{r.run_id:<40} {a['mllp_f1_mean']:8.4f} {a['crs_f1_pruned_mean']:8.4f} {a['complexity_mean']:11.1f}")
    print("pareto:", ", ".join(r.run_id for r in front))
    paths = export_report([r for r in records if r.error is None], out / "report")
    print("report:", paths["summary"])
