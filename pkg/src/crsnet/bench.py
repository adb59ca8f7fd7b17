"""Cross-validated experiments, grids, Pareto sets and report files."""
from __future__ import annotations

import csv
import itertools
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .crs import CrsModel, complexity, crs_classify, export_rules, extract_crs, prune
from .data import Binarizer, DiscretizationConfig, load_table, make_folds
from .mllp import GateConfig, TrainConfig, build_model, metrics_to_dicts, parse_architecture, predict_classes, train

log = logging.getLogger(__name__)


def macro_f1(predicted, truth, class_count: int | None = None) -> float:
    """Unweighted mean of per-class F1.

    A class with neither support nor predictions is left out of the average; a
    class with support but no predictions scores 0.
    """
    predicted = np.asarray(predicted, dtype=int)
    truth = np.asarray(truth, dtype=int)
    if predicted.shape != truth.shape:
        raise ValueError("predicted and true labels differ in length")
    if predicted.size == 0:
        raise ValueError("macro_f1 of an empty sample")
    if class_count is None:
        class_count = int(max(predicted.max(), truth.max())) + 1
    scores = []
    for c in range(class_count):
        tp = int(np.sum((predicted == c) & (truth == c)))
        fp = int(np.sum((predicted == c) & (truth != c)))
        fn = int(np.sum((predicted != c) & (truth == c)))
        if tp + fp + fn == 0:
            continue
        scores.append(2 * tp / (2 * tp + fp + fn))
    return float(np.mean(scores)) if scores else 0.0


@dataclass
class ExperimentConfig:
    data_path: str
    spec_path: str | None = None
    dataset: str | None = None
    architecture: str = "64"
    use_l0: bool = False
    train: TrainConfig = field(default_factory=TrainConfig)
    gates: GateConfig = field(default_factory=GateConfig)
    discretization: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    T: float = 0.5
    T_prime: float = 0.5
    k: int = 5
    seed: int = 0
    out_dir: str | None = None

    def __post_init__(self):
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        if isinstance(self.gates, dict):
            self.gates = GateConfig(**self.gates)
        if isinstance(self.discretization, dict):
            self.discretization = DiscretizationConfig(**self.discretization)
        hidden = parse_architecture(self.architecture)
        if not hidden or len(hidden) % 2 == 0:
            raise ValueError(f"architecture {self.architecture!r} needs an odd number of hidden layers")
        if self.dataset is None:
            self.dataset = Path(self.data_path).stem
        if not (0 < self.T < 1 and 0 < self.T_prime < 1):
            raise ValueError("thresholds must lie strictly between 0 and 1")
        if self.k < 2:
            raise ValueError("need k >= 2 folds")
        for path in (self.data_path, self.spec_path):
            if path is not None and not Path(path).is_file():
                raise FileNotFoundError(f"no such file: {path}")

    @property
    def variant(self) -> str:
        return "l0" if self.use_l0 else "baseline"

    @property
    def run_id(self) -> str:
        lam = f"-lam{self.train.l0_lambda:g}" if self.use_l0 else ""
        return f"{self.dataset}-{self.variant}-{self.architecture}-P{self.train.rb_rate:g}{lam}-s{self.seed}"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class ExperimentRecord:
    config: dict
    folds: list[dict]
    aggregate: dict
    wall_clock_seconds: float
    code_version: str = __version__
    run_id: str = ""
    error: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ExperimentRecord":
        return cls(**json.loads(line))


FOLD_METRICS = ("mllp_f1", "crs_f1_raw", "crs_f1_pruned", "complexity", "complexity_raw", "active_weight_fraction")


def aggregate_folds(folds: list[dict]) -> dict:
    """Mean and population standard deviation of every per-fold metric."""
    agg = {}
    for key in FOLD_METRICS:
        values = np.array([f[key] for f in folds], dtype=np.float64)
        agg[f"{key}_mean"] = float(values.mean())
        agg[f"{key}_std"] = float(values.std())
    return agg


def _fold_seeds(seed: int, fold: int) -> tuple[int, int]:
    init, trainer = np.random.SeedSequence([seed, fold]).generate_state(2)
    return int(init), int(trainer)


def run_fold(config: ExperimentConfig, table, train_rows, test_rows, fold: int) -> dict:
    binarizer = Binarizer(config.discretization).fit(table.subset(train_rows), vocabulary_table=table)
    train_set = binarizer.transform(table.subset(train_rows))
    test_set = binarizer.transform(table.subset(test_rows))
    n_classes = len(train_set.class_names)
    init_seed, train_seed = _fold_seeds(config.seed, fold)
    model = build_model(train_set.X.shape[1], config.architecture, n_classes,
                        use_l0=config.use_l0, gate_config=config.gates, seed=init_seed)
    try:
        trained, history = train(model, train_set, replace(config.train, seed=train_seed))
    except Exception as exc:
        raise RuntimeError(f"{config.run_id} fold {fold}: {exc}") from exc

    truth = test_set.labels
    raw = extract_crs(trained, config.T, config.T_prime, train_set.feature_names, train_set.class_names)
    pruned = prune(raw)
    return {
        "fold": fold,
        "binary_features": int(train_set.X.shape[1]),
        "mllp_f1": macro_f1(predict_classes(trained, test_set.X), truth, n_classes),
        "crs_f1_raw": macro_f1(crs_classify(raw, test_set.X), truth, n_classes),
        "crs_f1_pruned": macro_f1(crs_classify(pruned, test_set.X), truth, n_classes),
        "complexity_raw": complexity(raw).total_literals,
        "complexity": complexity(pruned, pruned=True).total_literals,
        "active_weight_count": history[-1].active_weight_count if history else None,
        "active_weight_fraction": history[-1].active_weight_fraction if history else None,
        "epochs": metrics_to_dicts(history),
        "crs": pruned.to_dict(),
        "model": trained.to_dict(),
    }


def run_experiment(config: ExperimentConfig, persist: bool = True) -> ExperimentRecord:
    start = time.perf_counter()
    table = load_table(config.data_path, config.spec_path)
    plan = make_folds(table.labels, config.k, config.seed)
    folds = []
    for f, (train_rows, test_rows) in enumerate(plan):
        result = run_fold(config, table, train_rows, test_rows, f)
        log.info("%s fold %d: crs f1 %.4f, complexity %d", config.run_id, f,
                 result["crs_f1_pruned"], result["complexity"])
        folds.append(result)
    record = ExperimentRecord(config.to_dict(), folds, aggregate_folds(folds),
                              time.perf_counter() - start, run_id=config.run_id)
    if persist and config.out_dir:
        append_records(Path(config.out_dir) / "records.jsonl", [record])
    return record


def append_records(path, records) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_records(path) -> list[ExperimentRecord]:
    with open(path) as fh:
        return [ExperimentRecord.from_json(line) for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# grids and Pareto sets


def pareto_front(points) -> list[int]:
    """Indices of (f1, complexity) points not dominated by any other point."""
    pts = [(float(f), float(c)) for f, c in points]
    front = []
    for i, (fi, ci) in enumerate(pts):
        dominated = any(
            fj >= fi and cj <= ci and (fj > fi or cj < ci)
            for j, (fj, cj) in enumerate(pts) if j != i
        )
        if not dominated:
            front.append(i)
    return front


def expand_grid(template: ExperimentConfig, grid: dict) -> list[ExperimentConfig]:
    """Grid over ``architecture``, ``rb_rate`` and ``l0_lambda``; lambda 0 means no gates."""
    for key, values in grid.items():
        if values is not None and len(values) == 0:
            raise ValueError(f"empty grid axis {key!r}")
    archs = grid.get("architecture") or [template.architecture]
    rates = grid.get("rb_rate") or [template.train.rb_rate]
    lambdas = grid.get("l0_lambda") or [template.train.l0_lambda if template.use_l0 else 0.0]
    configs = []
    for arch, rate, lam in itertools.product(archs, rates, lambdas):
        lam = float(lam)
        tc = replace(template.train, rb_rate=float(rate), l0_lambda=lam if lam > 0 else template.train.l0_lambda)
        configs.append(replace(template, architecture=str(arch), use_l0=lam > 0, train=tc))
    return configs


def grid_run(template: ExperimentConfig, grid: dict):
    configs = expand_grid(template, grid)
    if not configs:
        raise ValueError("empty grid")
    records = []
    for cfg in configs:
        try:
            records.append(run_experiment(cfg))
        except Exception as exc:  # keep going; the failure is recorded
            log.error("grid point %s failed: %s", cfg.run_id, exc)
            rec = ExperimentRecord(cfg.to_dict(), [], {}, 0.0, run_id=cfg.run_id, error=str(exc))
            records.append(rec)
            if cfg.out_dir:
                append_records(Path(cfg.out_dir) / "records.jsonl", [rec])
    ok = [r for r in records if r.error is None]
    front = pareto_front([(r.aggregate["crs_f1_pruned_mean"], r.aggregate["complexity_mean"]) for r in ok])
    return records, [ok[i] for i in front]


# ---------------------------------------------------------------------------
# reports


def _variant(record: ExperimentRecord) -> str:
    return "l0" if record.config.get("use_l0") else "baseline"


def summary_rows(records) -> list[dict]:
    """Best run per (dataset, variant): highest mean CRS F1, then lowest complexity."""
    best: dict[tuple, ExperimentRecord] = {}
    for r in records:
        if r.error is not None:
            continue
        key = (r.config["dataset"], _variant(r))
        score = (r.aggregate["crs_f1_pruned_mean"], -r.aggregate["complexity_mean"])
        if key not in best or score > (best[key].aggregate["crs_f1_pruned_mean"],
                                       -best[key].aggregate["complexity_mean"]):
            best[key] = r
    rows = []
    for (dataset, variant), r in sorted(best.items()):
        a = r.aggregate
        rows.append({
            "dataset": dataset,
            "variant": variant,
            "crs_f1_mean": round(a["crs_f1_pruned_mean"], 6),
            "crs_f1_std": round(a["crs_f1_pruned_std"], 6),
            "complexity_mean": round(a["complexity_mean"], 3),
            "mllp_f1_mean": round(a["mllp_f1_mean"], 6),
            "rb_rate": r.config["train"]["rb_rate"],
            "architecture": r.config["architecture"],
            "l0_lambda": r.config["train"]["l0_lambda"] if r.config.get("use_l0") else 0.0,
            "run_id": r.run_id,
        })
    return rows


def _write_csv(path: Path, rows: list[dict], header: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def write_pareto_csv(records, path) -> Path:
    """Plot-ready (complexity, F1, variant) table with a Pareto membership flag."""
    ok = [r for r in records if r.error is None]
    front = set(pareto_front([(r.aggregate["crs_f1_pruned_mean"], r.aggregate["complexity_mean"]) for r in ok]))
    rows = [{"run_id": r.run_id, "variant": _variant(r), "complexity": r.aggregate["complexity_mean"],
             "f1": r.aggregate["crs_f1_pruned_mean"], "pareto": int(i in front)} for i, r in enumerate(ok)]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(path, rows, ["run_id", "variant", "complexity", "f1", "pareto"])
    return path


def export_report(records, out_dir) -> dict[str, Path]:
    records = list(records)
    if not records:
        raise ValueError("no records to report")
    out = Path(out_dir)
    (out / "rules").mkdir(parents=True, exist_ok=True)
    paths = {}

    rows = summary_rows(records)
    paths["summary"] = out / "summary.csv"
    _write_csv(paths["summary"], rows, list(rows[0]) if rows else ["dataset"])

    series = []
    for r in records:
        for f in r.folds:
            for m in f.get("epochs", []):
                series.append({"run_id": r.run_id, "fold": f["fold"], "epoch": m["epoch"],
                               "active_weight_count": m["active_weight_count"],
                               "active_weight_fraction": m["active_weight_fraction"],
                               "loss": m["loss"]})
    paths["active_weights"] = out / "active_weights.csv"
    _write_csv(paths["active_weights"], series,
               ["run_id", "fold", "epoch", "active_weight_count", "active_weight_fraction", "loss"])

    paths["pareto"] = write_pareto_csv(records, out / "pareto.csv")

    for r in records:
        if r.error is not None:
            continue
        for f in r.folds:
            if "crs" in f:
                text = export_rules(CrsModel.from_dict(f["crs"]))
                (out / "rules" / f"{r.run_id}_fold{f['fold']}.txt").write_text(text, encoding="utf-8")
    paths["rules"] = out / "rules"
    return paths
