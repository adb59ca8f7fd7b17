"""Command line entry point: ``crsnet {binarize,train,cv,grid,extract,report}``.

A JSON config file (``--config``) supplies ExperimentConfig defaults; explicit
flags override it.  Outputs go under ``$CRSNET_OUTPUT`` (default ``results``)
unless ``--out-dir`` is given.  Exit status is 0 on success, 1 on usage or
configuration errors and 2 on runtime failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .bench import (ExperimentConfig, export_report, grid_run, macro_f1, read_records,
                    run_experiment, write_pareto_csv)
from .crs import complexity, export_rules, extract_crs, prune
from .data import Binarizer, BinaryDataset, DiscretizationConfig, load_table
from .mllp import ConfigError, MllpModel, build_model, metrics_to_dicts, predict_classes, train

OUTPUT_ENV = "CRSNET_OUTPUT"

log = logging.getLogger("crsnet")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# flag dest -> (section of ExperimentConfig.to_dict(), key); section None is top level
FLAG_MAP = {
    "data": (None, "data_path"),
    "spec": (None, "spec_path"),
    "dataset": (None, "dataset"),
    "arch": (None, "architecture"),
    "use_l0": (None, "use_l0"),
    "T": (None, "T"),
    "T_prime": (None, "T_prime"),
    "k": (None, "k"),
    "seed": (None, "seed"),
    "epochs": ("train", "epochs"),
    "batch_size": ("train", "batch_size"),
    "lr": ("train", "learning_rate"),
    "lr_decay_factor": ("train", "lr_decay_factor"),
    "lr_decay_every": ("train", "lr_decay_every_epochs"),
    "weight_decay": ("train", "weight_decay"),
    "l0_lambda": ("train", "l0_lambda"),
    "rb_rate": ("train", "rb_rate"),
    "rb_threshold": ("train", "rb_threshold"),
    "rb_refresh": ("train", "rb_refresh_every_epochs"),
    "penalty_normalization": ("train", "penalty_normalization"),
    "optimizer": ("train", "optimizer"),
    "input_drop_rate": ("gates", "input_drop_rate"),
    "hidden_drop_rate": ("gates", "hidden_drop_rate"),
    "gate_output_layer": ("gates", "gate_output_layer"),
    "discretization": ("discretization", "method"),
    "fallback_bins": ("discretization", "fallback_bins"),
}


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _add_data_flags(p):
    p.add_argument("--config", help="JSON file with ExperimentConfig defaults")
    p.add_argument("--data", help="CSV data file")
    p.add_argument("--spec", help="column spec sidecar (name,kind[,values] per line)")
    p.add_argument("--dataset", help="dataset label used in run ids")
    p.add_argument("--discretization", choices=["mdlp", "quantile"])
    p.add_argument("--fallback-bins", type=int)


def _add_experiment_flags(p):
    _add_data_flags(p)
    p.add_argument("--arch", help='hidden widths, e.g. "64", "256x3" or "64,32,64"')
    p.add_argument("--use-l0", type=_bool, metavar="BOOL")
    p.add_argument("--T", type=float, help="weight threshold for extraction")
    p.add_argument("--T-prime", type=float, help="gate threshold for extraction")
    p.add_argument("--k", type=int, help="number of folds")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lr-decay-factor", type=float)
    p.add_argument("--lr-decay-every", type=int)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--l0-lambda", type=float)
    p.add_argument("--rb-rate", type=float)
    p.add_argument("--rb-threshold", type=float)
    p.add_argument("--rb-refresh", type=int)
    p.add_argument("--penalty-normalization", choices=["l0", "both", "none"])
    p.add_argument("--optimizer", choices=["adam", "sgd"])
    p.add_argument("--input-drop-rate", type=float)
    p.add_argument("--hidden-drop-rate", type=float)
    p.add_argument("--gate-output-layer", type=_bool, metavar="BOOL")
    p.add_argument("--out-dir")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crsnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("binarize", help="binarize a dataset into a cached .npz")
    _add_data_flags(p)
    p.add_argument("--out", help="output .npz path")

    p = sub.add_parser("train", help="train a single model on the whole dataset")
    _add_experiment_flags(p)

    p = sub.add_parser("cv", help="k-fold cross-validated experiment")
    _add_experiment_flags(p)

    p = sub.add_parser("grid", help="grid over architectures, RB rates and L0 lambdas")
    _add_experiment_flags(p)
    p.add_argument("--grid-arch", nargs="+")
    p.add_argument("--grid-rb-rate", nargs="+", type=float)
    p.add_argument("--grid-l0-lambda", nargs="+", type=float, help="0 means the ungated baseline")

    p = sub.add_parser("extract", help="extract and prune the rule set of a saved model")
    p.add_argument("--model", required=True, help="model.json written by `train`")
    p.add_argument("--T", type=float, default=0.5)
    p.add_argument("--T-prime", type=float, default=0.5)
    p.add_argument("--out-dir")

    p = sub.add_parser("report", help="summary, active-weight and rule files from records")
    p.add_argument("--records", nargs="+", help="records.jsonl files")
    p.add_argument("--out-dir")
    return parser


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "results"))


def resolve_config(args) -> ExperimentConfig:
    base: dict = {}
    if getattr(args, "config", None):
        try:
            base = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(base, dict):
            raise UsageError("config file must hold a JSON object")
    for dest, (section, key) in FLAG_MAP.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        if section is None:
            base[key] = value
        else:
            base.setdefault(section, {})[key] = value
    if getattr(args, "out_dir", None):
        base["out_dir"] = args.out_dir
    if "data_path" not in base:
        raise UsageError("--data is required (flag or config file)")
    try:
        cfg = ExperimentConfig.from_dict(base)
    except (TypeError, ValueError, FileNotFoundError) as exc:
        raise UsageError(str(exc)) from exc
    if cfg.out_dir is None:
        cfg.out_dir = str(output_root() / args.command)
    return cfg


def cmd_binarize(args) -> int:
    cfg = resolve_config(args)
    table = load_table(cfg.data_path, cfg.spec_path)
    ds = Binarizer(cfg.discretization).fit(table).transform(table)
    out = Path(args.out) if args.out else output_root() / f"{cfg.dataset}.npz"
    out.parent.mkdir(parents=True, exist_ok=True)
    ds.save(out)
    print(f"{cfg.dataset}: {len(ds)} rows, {ds.X.shape[1]} binary features, "
          f"{len(ds.class_names)} classes -> {out}")
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    table = load_table(cfg.data_path, cfg.spec_path)
    ds = Binarizer(cfg.discretization).fit(table).transform(table)
    model = build_model(ds.X.shape[1], cfg.architecture, len(ds.class_names),
                        use_l0=cfg.use_l0, gate_config=cfg.gates, seed=cfg.seed)
    trained, history = train(model, ds, cfg.train)
    f1 = macro_f1(predict_classes(trained, ds.X), ds.labels, len(ds.class_names))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"config": cfg.to_dict(), "model": trained.to_dict(),
               "feature_names": ds.feature_names, "class_names": list(ds.class_names),
               "history": metrics_to_dicts(history), "train_f1": f1}
    path = out / f"{cfg.run_id}.model.json"
    path.write_text(json.dumps(payload, sort_keys=True))
    print(f"{cfg.run_id}: training macro-F1 {f1:.4f} -> {path}")
    return 0


def _print_record(rec) -> None:
    a = rec.aggregate
    print(f"{rec.run_id}: CRS F1 {a['crs_f1_pruned_mean']:.4f} ± {a['crs_f1_pruned_std']:.4f}, "
          f"complexity {a['complexity_mean']:.1f}, MLLP F1 {a['mllp_f1_mean']:.4f}")
    for f in rec.folds:
        print(f"  fold {f['fold']}: mllp {f['mllp_f1']:.4f} crs {f['crs_f1_pruned']:.4f} "
              f"complexity {f['complexity']}")


def cmd_cv(args) -> int:
    cfg = resolve_config(args)
    rec = run_experiment(cfg)
    _print_record(rec)
    print(f"record appended to {Path(cfg.out_dir) / 'records.jsonl'}")
    return 0


def cmd_grid(args) -> int:
    cfg = resolve_config(args)
    grid = {"architecture": args.grid_arch, "rb_rate": args.grid_rb_rate, "l0_lambda": args.grid_l0_lambda}
    records, front = grid_run(cfg, grid)
    for r in records:
        if r.error is None:
            _print_record(r)
        else:
            print(f"{r.run_id}: FAILED {r.error}")
    path = write_pareto_csv(records, Path(cfg.out_dir) / "pareto.csv")
    print("pareto:", ", ".join(r.run_id for r in front) or "(none)")
    print(f"plot data -> {path}")
    return 2 if records and all(r.error is not None for r in records) else 0


def cmd_extract(args) -> int:
    try:
        payload = json.loads(Path(args.model).read_text())
        model = MllpModel.from_dict(payload["model"])
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise UsageError(f"cannot read model {args.model}: {exc}") from exc
    raw = extract_crs(model, args.T, args.T_prime, payload.get("feature_names"), payload.get("class_names"))
    pruned = prune(raw)
    out = Path(args.out_dir) if args.out_dir else output_root() / "extract"
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.model).name.removesuffix(".model.json").removesuffix(".json")
    (out / f"{stem}.crs.json").write_text(json.dumps(pruned.to_dict(), sort_keys=True))
    (out / f"{stem}.rules.txt").write_text(export_rules(pruned), encoding="utf-8")
    (out / f"{stem}.rules_raw.txt").write_text(export_rules(raw), encoding="utf-8")
    print(f"complexity raw {complexity(raw).total_literals}, pruned {complexity(pruned).total_literals} -> {out}")
    return 0


def cmd_report(args) -> int:
    paths = args.records or [str(output_root() / "cv" / "records.jsonl")]
    records = []
    for p in paths:
        if not Path(p).is_file():
            raise UsageError(f"no such records file: {p}")
        records.extend(read_records(p))
    out = Path(args.out_dir) if args.out_dir else output_root() / "report"
    written = export_report(records, out)
    for name, p in written.items():
        print(f"{name}: {p}")
    return 0


COMMANDS = {"binarize": cmd_binarize, "train": cmd_train, "cv": cmd_cv, "grid": cmd_grid,
            "extract": cmd_extract, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"crsnet: error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"crsnet: config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"crsnet: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
