"""Acceptance checks, one test per criterion.

Each test reports a single PASS/FAIL line (collected in the terminal summary)
and then asserts the criterion at its stated tolerance.
"""
import itertools
from pathlib import Path

import numpy as np
import pytest
from _gradcheck import check_gradients

from crsnet import l0gates
from crsnet.bench import ExperimentConfig, run_experiment, run_fold
from crsnet.crs import CrsModel, complexity, crs_predict, extract_crs, prune
from crsnet.data import load_table, make_folds
from crsnet.mllp import TrainConfig, build_model, forward_eval

DATA = Path(__file__).resolve().parents[1] / "data"


def dataset(name):
    csv, spec = DATA / f"{name}.csv", DATA / f"{name}.spec"
    if not csv.exists():
        pytest.skip(f"{csv.name} not available")
    return str(csv), str(spec) if spec.exists() else None


@pytest.fixture(scope="module")
def mushroom_l0():
    csv, spec = dataset("mushroom")
    cfg = ExperimentConfig(csv, spec, architecture="64", use_l0=True, train=TrainConfig(rb_rate=0.0, l0_lambda=1e-3))
    return cfg, run_experiment(cfg, persist=False)


def test_criterion_01_gradient_correctness(criterion):
    worst = [check_gradients(seed, binary_inputs=False, rb_rate=0.3) for seed in range(100)]
    ok = max(worst) < 1e-4
    criterion(1, ok, f"100 models, worst relative FD error {max(worst):.2e} (tol 1e-4)")
    assert ok


def test_criterion_02_mllp_crs_equivalence(criterion):
    mismatches = 0
    for seed in range(50):
        rng = np.random.default_rng(10_000 + seed)
        widths = [int(w) for w in rng.integers(1, 17, 3)]
        m = build_model(int(rng.integers(1, 13)), widths, int(rng.integers(2, 5)), seed=seed)
        for layer in m.layers:
            layer.W[:] = rng.random(layer.W.shape) < rng.uniform(0.1, 0.6)
        X = (rng.random((200, m.input_width)) < 0.5).astype(float)
        mismatches += not np.array_equal(forward_eval(m, X), crs_predict(extract_crs(m), X).astype(float))
    criterion(2, mismatches == 0, f"{mismatches}/50 binary-weight models disagree on 200 inputs")
    assert mismatches == 0


def _rows(n_in, sets):
    W = np.zeros((len(sets), n_in), dtype=bool)
    for i, s in enumerate(sets):
        W[i, list(s)] = True
    return W


def test_criterion_03_complexity_oracle(criterion):
    graph = CrsModel([
        _rows(6, [{0, 1}, {2, 3}, {3, 4, 5}]),
        _rows(3, [{0, 1}, {1}, {1, 2}]),
        _rows(3, [{0, 1}, {1, 2}]),
        _rows(2, [{0}, {0, 1}]),
    ])
    total = complexity(graph).total_literals
    criterion(3, total == 19, f"example graph complexity {total} (expected 19)")
    assert total == 19


def test_criterion_04_hard_concrete_statistics(criterion):
    # closed form: sigmoid(log_alpha - beta * log(-gamma / zeta)) at log_alpha = 0
    closed = 1.0 / (1.0 + np.exp(2 / 3 * np.log(0.1 / 1.1)))
    assert abs(closed - 0.8318) < 5e-5
    params = l0gates.GateParams(np.zeros(100_000), 1)
    z = l0gates.sample_gates(params, np.random.default_rng(0)).z
    frac = float(np.mean(z > 0))
    ok = abs(frac - 0.8318) <= 0.01
    criterion(4, ok, f"P(z>0) empirical {frac:.4f}, closed form {closed:.4f}")
    assert ok


def test_criterion_05_mushroom(criterion, mushroom_l0):
    _, rec = mushroom_l0
    f1, c = rec.aggregate["crs_f1_pruned_mean"], rec.aggregate["complexity_mean"]
    ok = f1 >= 0.99 and c <= 100
    criterion(5, ok, f"mushroom L0 lambda=1e-3 arch 64: CRS F1 {f1:.4f} (>=0.99), complexity {c:.1f} (<=100)")
    assert ok


def test_criterion_06_wine(criterion):
    csv, spec = dataset("wine")
    scores = {}
    for arch in ("64", "128"):
        cfg = ExperimentConfig(csv, spec, architecture=arch, use_l0=False, train=TrainConfig(rb_rate=0.0))
        scores[arch] = run_experiment(cfg, persist=False).aggregate["crs_f1_pruned_mean"]
    best = max(scores.values())
    ok = best >= 0.85
    criterion(6, ok, "wine CRS F1 " + ", ".join(f"arch {a}: {s:.4f}" for a, s in scores.items()) + " (best >=0.85)")
    assert ok


def test_criterion_07_sparsity(criterion, mushroom_l0):
    cfg, rec = mushroom_l0
    table = load_table(cfg.data_path, cfg.spec_path)
    train_rows, test_rows = next(iter(make_folds(table.labels, cfg.k, cfg.seed)))
    base_cfg = ExperimentConfig(cfg.data_path, cfg.spec_path, architecture=cfg.architecture, use_l0=False,
                                train=TrainConfig(rb_rate=0.0), seed=cfg.seed)
    base = run_fold(base_cfg, table, train_rows, test_rows, 0)
    reg = rec.folds[0]

    base_frac = np.array([e["active_weight_fraction"] for e in base["epochs"]])
    reg_frac = np.array([e["active_weight_fraction"] for e in reg["epochs"]])
    tail = base_frac[-50:]
    drift = (tail.max() - tail.min()) / tail.mean()
    plateau = reg_frac[:10].max()
    lower = reg["active_weight_count"] < base["active_weight_count"]
    ok = lower and drift < 0.01 and reg_frac[-1] <= 0.8 * plateau
    criterion(7, ok, f"active weights {reg['active_weight_count']} (L0) vs {base['active_weight_count']} (baseline); "
                     f"baseline drift {drift:.2%} over last 50 epochs; L0 final {reg_frac[-1]:.3f} vs plateau {plateau:.3f}")
    assert ok


@pytest.mark.slow
def test_criterion_08_connect4(criterion):
    csv, spec = dataset("connect-4")
    cfg = ExperimentConfig(csv, spec, architecture="256", use_l0=True, train=TrainConfig(rb_rate=0.0))
    rec = run_experiment(cfg, persist=False)
    f1, c = rec.aggregate["crs_f1_pruned_mean"], rec.aggregate["complexity_mean"]
    ok = f1 >= 0.55 and c < 7687.4
    criterion(8, ok, f"connect-4 CRS F1 {f1:.4f} (>=0.55), complexity {c:.1f} (<7687.4)")
    assert ok


def test_criterion_09_determinism(criterion):
    keys = ["mllp_f1", "crs_f1_raw", "crs_f1_pruned", "complexity_raw", "complexity"]
    runs = []
    csv, spec = dataset("wine")
    runs.append(ExperimentConfig(csv, spec, architecture="64", use_l0=True, train=TrainConfig(rb_rate=0.5), seed=7))
    csv, spec = dataset("mushroom")
    runs.append(ExperimentConfig(csv, spec, architecture="16", use_l0=True, train=TrainConfig(epochs=15, rb_rate=0.3)))
    same = True
    for cfg in runs:
        a = run_experiment(cfg, persist=False)
        b = run_experiment(ExperimentConfig.from_dict(a.config), persist=False)
        same &= [[f[k] for k in keys] for f in a.folds] == [[f[k] for k in keys] for f in b.folds]
    criterion(9, same, f"{len(runs)} cv configurations repeated; per-fold F1 and complexity "
                       f"{'identical' if same else 'differ'}")
    assert same


def test_criterion_10_prune_soundness(criterion):
    failures = 0
    for seed in range(50):
        rng = np.random.default_rng(20_000 + seed)
        n_in = int(rng.integers(1, 13))
        widths = [n_in] + [int(w) for w in rng.integers(1, 9, 3)] + [int(rng.integers(1, 5))]
        density = rng.uniform(0.05, 0.6)
        crs = CrsModel([rng.random((widths[i + 1], widths[i])) < density for i in range(4)])
        X = np.array(list(itertools.product([0, 1], repeat=n_in)), dtype=np.uint8)
        p = prune(crs)
        ok = np.array_equal(crs_predict(p, X), crs_predict(crs, X))
        ok &= complexity(p).total_literals <= complexity(crs).total_literals
        failures += not ok
    criterion(10, failures == 0, f"{failures}/50 random rule sets changed by pruning (inputs up to 12)")
    assert failures == 0
