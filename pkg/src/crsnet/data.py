"""Tabular ingestion, binarization and stratified folds."""
from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

MISSING = "missing"
MISSING_TOKENS = {"", "?", "na", "nan", "null", "none"}
KINDS = ("categorical", "continuous", "label")


class DataError(ValueError):
    pass


@dataclass
class ColumnSpec:
    name: str
    kind: str
    values: list[str] | None = None  # categorical vocabulary (or class names for the label)
    cuts: list[float] | None = None  # continuous cut points, learned by the binarizer

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.cuts is not None and any(b <= a for a, b in zip(self.cuts, self.cuts[1:])):
            raise DataError(f"column {self.name!r}: cut points must be strictly increasing")


@dataclass
class FeatureSpec:
    columns: list[ColumnSpec]

    def __post_init__(self):
        labels = [c for c in self.columns if c.kind == "label"]
        if len(labels) != 1:
            raise DataError(f"exactly one label column required, found {len(labels)}")

    @property
    def label(self) -> ColumnSpec:
        return next(c for c in self.columns if c.kind == "label")

    @property
    def features(self) -> list[ColumnSpec]:
        return [c for c in self.columns if c.kind != "label"]


def read_spec(path) -> FeatureSpec:
    """One ``name,kind[,value,...]`` line per column; ``#`` starts a comment."""
    columns = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].strip().startswith("#"):
                continue
            row = [r.strip() for r in row]
            if len(row) < 2:
                raise DataError(f"{path}:{lineno}: expected 'name,kind[,values]'")
            values = row[2:] or None
            try:
                columns.append(ColumnSpec(row[0], row[1], values))
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not columns:
        raise DataError(f"{path}: empty spec file")
    return FeatureSpec(columns)


def write_spec(spec: FeatureSpec, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for c in spec.columns:
            w.writerow([c.name, c.kind] + list(c.values or []))


def infer_spec(frame: pd.DataFrame) -> FeatureSpec:
    """Last column is the label; a column is continuous if every present value parses as a number."""
    columns = []
    for i, name in enumerate(frame.columns):
        if i == len(frame.columns) - 1:
            columns.append(ColumnSpec(name, "label"))
            continue
        present = frame[name][~frame[name].str.strip().str.lower().isin(MISSING_TOKENS)]
        numeric = pd.to_numeric(present, errors="coerce").notna().all() and len(present) > 0
        columns.append(ColumnSpec(name, "continuous" if numeric else "categorical"))
    return FeatureSpec(columns)


@dataclass
class Table:
    frame: pd.DataFrame  # categorical/label columns as str, continuous as float
    spec: FeatureSpec
    dropped_rows: int = 0

    def __len__(self) -> int:
        return len(self.frame)

    def subset(self, rows) -> "Table":
        return Table(self.frame.iloc[np.asarray(rows)].reset_index(drop=True), self.spec, 0)

    @property
    def labels(self) -> np.ndarray:
        return self.frame[self.spec.label.name].to_numpy()


def load_table(data_path, spec_path=None) -> Table:
    data_path = Path(data_path)
    try:
        frame = pd.read_csv(data_path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise DataError(f"{data_path}: empty file") from None
    except pd.errors.ParserError as exc:
        raise DataError(f"{data_path}: {exc}") from None
    if frame.empty:
        raise DataError(f"{data_path}: no data rows")
    spec = read_spec(spec_path) if spec_path is not None else infer_spec(frame)
    names = [c.name for c in spec.columns]
    if len(names) != frame.shape[1]:
        raise DataError(f"{data_path}: {frame.shape[1]} columns but the column spec lists {len(names)}")
    if list(frame.columns) != names:
        # positional match when the header differs from the column spec
        frame.columns = names

    keep = np.ones(len(frame), dtype=bool)
    out = {}
    for col in spec.columns:
        raw = frame[col.name].str.strip()
        missing = raw.str.lower().isin(MISSING_TOKENS)
        if col.kind == "continuous":
            values = pd.to_numeric(raw.where(~missing), errors="coerce")
            bad = values.isna() & ~missing
            if bad.any():
                row = int(np.flatnonzero(bad.to_numpy())[0])
                raise DataError(
                    f"{data_path}: row {row + 2}, column {col.name!r}: cannot parse {raw.iloc[row]!r} as a number"
                )
            keep &= ~missing.to_numpy()
            out[col.name] = values.astype(np.float64)
        elif col.kind == "categorical":
            values = raw.where(~missing, MISSING)
            if col.values is not None:
                values = values.where(values.isin(col.values), MISSING)
            out[col.name] = values
        else:
            if missing.any():
                row = int(np.flatnonzero(missing.to_numpy())[0])
                raise DataError(f"{data_path}: row {row + 2}: missing label")
            out[col.name] = raw
    frame = pd.DataFrame(out)
    dropped = int((~keep).sum())
    if dropped:
        log.warning("%s: dropped %d rows with missing continuous values", data_path, dropped)
        frame = frame[keep].reset_index(drop=True)
    return Table(frame, spec, dropped)


# ---------------------------------------------------------------------------
# discretization


def _entropy(counts: np.ndarray) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum(axis=-1, keepdims=True)
    p = np.divide(counts, total, out=np.zeros_like(counts), where=total > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log2(p), 0.0)
    return terms.sum(axis=-1)


def mdlp_cut_points(x, y, max_depth: int = 32) -> list[float]:
    """Recursive minimum-entropy splits with the MDL stopping rule (Fayyad & Irani)."""
    x = np.asarray(x, dtype=np.float64)
    _, y = np.unique(np.asarray(y), return_inverse=True)
    order = np.argsort(x, kind="mergesort")
    x, y = x[order], y[order]
    n_classes = int(y.max()) + 1 if len(y) else 0
    cuts: list[float] = []

    def split(lo: int, hi: int, depth: int) -> None:
        n = hi - lo
        if n < 2 or depth > max_depth:
            return
        xs, ys = x[lo:hi], y[lo:hi]
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), ys] = 1.0
        left = np.cumsum(onehot, axis=0)[:-1]
        total = left[-1] + onehot[-1]
        right = total - left
        valid = xs[1:] != xs[:-1]  # boundaries only between distinct values
        if not valid.any():
            return
        n_left = np.arange(1, n)
        ent = (n_left * _entropy(left) + (n - n_left) * _entropy(right)) / n
        ent = np.where(valid, ent, np.inf)
        b = int(np.argmin(ent))
        ent_s = float(_entropy(total))
        e1, e2 = float(_entropy(left[b])), float(_entropy(right[b]))
        k = int((total > 0).sum())
        k1, k2 = int((left[b] > 0).sum()), int((right[b] > 0).sum())
        gain = ent_s - ent[b]
        delta = math.log2(3 ** k - 2) - (k * ent_s - k1 * e1 - k2 * e2)
        if gain <= (math.log2(n - 1) + delta) / n:
            return
        cuts.append(_short_cut(xs[b], xs[b + 1]))
        split(lo, lo + b + 1, depth + 1)
        split(lo + b + 1, hi, depth + 1)

    split(0, len(x), 0)
    return sorted(cuts)


def _short_cut(a: float, b: float) -> float:
    """Shortest decimal c with a <= c < b, so ``x <= c`` separates the two values."""
    for digits in range(0, 16):
        for c in (round((a + b) / 2, digits), round(a, digits)):
            if a <= c < b:
                return float(c)
    return float(a)


def quantile_cut_points(x, bins: int) -> list[float]:
    x = np.sort(np.asarray(x, dtype=np.float64))
    distinct = np.unique(x)
    cuts = set()
    for q in np.arange(1, bins) / bins:
        v = np.quantile(x, q)
        i = np.searchsorted(distinct, v, side="right") - 1
        if 0 <= i < len(distinct) - 1:
            cuts.add(_short_cut(distinct[i], distinct[i + 1]))
    return sorted(cuts)


@dataclass
class DiscretizationConfig:
    method: str = "mdlp"  # "mdlp" or "quantile"
    fallback_bins: int = 5

    def __post_init__(self):
        if self.method not in ("mdlp", "quantile"):
            raise DataError(f"unknown discretization method {self.method!r}")
        if self.fallback_bins < 1:
            raise DataError("fallback_bins must be >= 1")


# ---------------------------------------------------------------------------
# binarization


@dataclass(frozen=True)
class Literal:
    feature: str
    kind: str
    value: str | None = None
    low: float | None = None   # open lower bound
    high: float | None = None  # closed upper bound

    def render(self) -> str:
        if self.kind == "categorical":
            return f"{self.feature} = {self.value}"
        if self.low is None and self.high is None:
            return f"{self.feature} = any"
        if self.low is None:
            return f"{self.feature} <= {self.high!r}"
        if self.high is None:
            return f"{self.feature} > {self.low!r}"
        return f"{self.low!r} < {self.feature} <= {self.high!r}"


_LITERAL_PATTERNS = [
    (re.compile(r"^(?P<low>\S+) < (?P<f>.+) <= (?P<high>\S+)$"), "interval"),
    (re.compile(r"^(?P<f>.+) <= (?P<high>\S+)$"), "upper"),
    (re.compile(r"^(?P<f>.+) > (?P<low>\S+)$"), "lower"),
    (re.compile(r"^(?P<f>.+?) = (?P<v>.*)$"), "equal"),
]


def parse_literal(text: str, provenance: list[Literal]) -> int:
    """Column index of a rendered literal."""
    text = text.strip().strip("()").strip()
    for pattern, form in _LITERAL_PATTERNS:
        m = pattern.match(text)
        if not m:
            continue
        g = m.groupdict()
        for j, lit in enumerate(provenance):
            if lit.feature != g["f"]:
                continue
            if form == "equal" and (lit.kind == "categorical" and lit.value == g["v"]
                                    or lit.kind == "continuous" and g["v"] == "any"
                                    and lit.low is None and lit.high is None):
                return j
            if lit.kind != "continuous":
                continue
            low = float(g["low"]) if g.get("low") else None
            high = float(g["high"]) if g.get("high") else None
            if form in ("interval", "upper", "lower") and lit.low == low and lit.high == high:
                return j
    raise DataError(f"no binary column matches literal {text!r}")


@dataclass
class BinaryDataset:
    X: np.ndarray  # (n, |J|) uint8
    Y: np.ndarray  # (n, |C|) uint8 one-hot
    spec: FeatureSpec
    provenance: list[Literal]
    class_names: list[str]

    @property
    def feature_names(self) -> list[str]:
        return [lit.render() for lit in self.provenance]

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.Y, axis=1)

    def __len__(self) -> int:
        return self.X.shape[0]

    def subset(self, rows) -> "BinaryDataset":
        rows = np.asarray(rows)
        return BinaryDataset(self.X[rows], self.Y[rows], self.spec, self.provenance, self.class_names)

    def save(self, path) -> None:
        meta = {
            "spec": [asdict(c) for c in self.spec.columns],
            "provenance": [asdict(p) for p in self.provenance],
            "class_names": self.class_names,
        }
        np.savez_compressed(path, X=self.X, Y=self.Y, meta=np.array(json.dumps(meta)))

    @classmethod
    def load(cls, path) -> "BinaryDataset":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            spec = FeatureSpec([ColumnSpec(**c) for c in meta["spec"]])
            return cls(z["X"], z["Y"], spec, [Literal(**p) for p in meta["provenance"]], meta["class_names"])


class Binarizer:
    """One-hot encoder for categoricals and interval encoder for continuous columns.

    Cut points are learned by ``fit`` (training rows only); vocabularies come
    from the column spec when given, otherwise from the rows seen by ``fit``.
    """

    def __init__(self, config: DiscretizationConfig | None = None):
        self.config = config or DiscretizationConfig()
        self.spec: FeatureSpec | None = None
        self.class_names: list[str] = []

    def fit(self, table: Table, vocabulary_table: Table | None = None) -> "Binarizer":
        vocab_frame = (table if vocabulary_table is None else vocabulary_table).frame
        frame = table.frame
        label = table.spec.label
        y = frame[label.name].to_numpy()
        columns = []
        for col in table.spec.columns:
            if col.kind == "categorical":
                values = col.values or sorted(vocab_frame[col.name].unique())
                if MISSING in set(vocab_frame[col.name]) and MISSING not in values:
                    values = list(values) + [MISSING]
                columns.append(ColumnSpec(col.name, col.kind, list(values)))
            elif col.kind == "continuous":
                columns.append(ColumnSpec(col.name, col.kind, cuts=self._cuts(col.name, frame[col.name], y)))
            else:
                classes = col.values or sorted(vocab_frame[col.name].unique())
                self.class_names = list(classes)
                columns.append(ColumnSpec(col.name, col.kind, list(classes)))
        self.spec = FeatureSpec(columns)
        return self

    def _cuts(self, name, values, y) -> list[float]:
        x = values.to_numpy(dtype=np.float64)
        if len(np.unique(x)) < 2:
            log.warning("continuous column %r has fewer than 2 distinct values; using one constant bin", name)
            return []
        cuts = mdlp_cut_points(x, y) if self.config.method == "mdlp" else []
        if not cuts:
            cuts = quantile_cut_points(x, self.config.fallback_bins)
        return cuts

    @property
    def provenance(self) -> list[Literal]:
        lits = []
        for col in self.spec.features:
            if col.kind == "categorical":
                lits += [Literal(col.name, "categorical", value=v) for v in col.values]
            else:
                bounds = [None] + list(col.cuts) + [None]
                lits += [Literal(col.name, "continuous", low=lo, high=hi) for lo, hi in zip(bounds, bounds[1:])]
        return lits

    def transform(self, table: Table) -> BinaryDataset:
        if self.spec is None:
            raise RuntimeError("Binarizer.transform called before fit")
        frame = table.frame
        n = len(frame)
        blocks = []
        for col in self.spec.features:
            if col.kind == "categorical":
                index = {v: i for i, v in enumerate(col.values)}
                codes = frame[col.name].map(index)
                if codes.isna().any():
                    # unseen value: route to the missing entry when present
                    if MISSING not in index:
                        bad = frame[col.name][codes.isna()].iloc[0]
                        raise DataError(f"column {col.name!r}: value {bad!r} not in the vocabulary")
                    codes = codes.fillna(index[MISSING])
                block = np.zeros((n, len(col.values)), dtype=np.uint8)
            else:
                codes = np.searchsorted(np.asarray(col.cuts, dtype=np.float64),
                                        frame[col.name].to_numpy(dtype=np.float64), side="left")
                block = np.zeros((n, len(col.cuts) + 1), dtype=np.uint8)
            block[np.arange(n), np.asarray(codes, dtype=int)] = 1
            blocks.append(block)
        X = np.concatenate(blocks, axis=1) if blocks else np.zeros((n, 0), dtype=np.uint8)
        label = self.spec.label
        index = {v: i for i, v in enumerate(self.class_names)}
        y = frame[label.name].map(index)
        if y.isna().any():
            raise DataError(f"unknown class label {frame[label.name][y.isna()].iloc[0]!r}")
        Y = np.zeros((n, len(self.class_names)), dtype=np.uint8)
        Y[np.arange(n), y.to_numpy(dtype=int)] = 1
        return BinaryDataset(X, Y, self.spec, self.provenance, list(self.class_names))


def binarize(table: Table, config: DiscretizationConfig | None = None, fit_rows=None) -> BinaryDataset:
    """Binarize ``table``; cut points are learned on ``fit_rows`` (all rows by default)."""
    fit_table = table if fit_rows is None else table.subset(fit_rows)
    return Binarizer(config).fit(fit_table, vocabulary_table=table).transform(table)


# ---------------------------------------------------------------------------
# folds


@dataclass
class FoldPlan:
    k: int
    seed: int
    folds: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def __iter__(self):
        return iter(self.folds)

    def __len__(self) -> int:
        return len(self.folds)


def make_folds(labels, k: int, seed: int = 0) -> FoldPlan:
    """Stratified k-fold split; ``labels`` may be a label array or a dataset/table."""
    if hasattr(labels, "labels"):
        labels = labels.labels
    labels = np.asarray(labels)
    n = len(labels)
    if k < 2:
        raise DataError("k must be >= 2")
    if n < k:
        raise DataError(f"cannot make {k} folds from {n} instances")
    rng = np.random.default_rng(seed)
    assignment = np.empty(n, dtype=int)
    offset = 0
    for cls in sorted(np.unique(labels), key=str):
        members = np.flatnonzero(labels == cls)
        if len(members) < k:
            log.warning("class %r has %d < k=%d instances; it cannot appear in every fold", cls, len(members), k)
        members = rng.permutation(members)
        assignment[members] = (offset + np.arange(len(members))) % k
        offset += len(members)
    folds = []
    for f in range(k):
        test = np.flatnonzero(assignment == f)
        train = np.flatnonzero(assignment != f)
        folds.append((train, test))
    return FoldPlan(k, seed, folds)
