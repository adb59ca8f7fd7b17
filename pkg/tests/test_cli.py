import csv
import json

import pytest

from crsnet import cli

TOY = """colour,shape,size,label
red,round,small,yes
red,square,small,yes
blue,round,large,no
blue,square,large,no
red,round,large,yes
blue,round,small,no
red,square,large,yes
blue,square,small,no
red,round,small,yes
blue,square,large,no
"""

FAST = ["--arch", "4", "--epochs", "5", "--batch-size", "4", "--k", "2"]


@pytest.fixture
def toy(tmp_path, monkeypatch):
    p = tmp_path / "toy.csv"
    p.write_text(TOY)
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "results"))
    return p


def test_usage_errors_exit_1(toy, capsys):
    assert cli.main([]) == 1
    assert cli.main(["nope"]) == 1
    assert cli.main(["cv"]) == 1  # no data
    assert cli.main(["cv", "--data", str(toy), "--arch", "4,4"]) == 1
    assert cli.main(["cv", "--data", str(toy), "--epochs", "many"]) == 1
    assert cli.main(["cv", "--data", str(toy.parent / "missing.csv")]) == 1
    assert "error" in capsys.readouterr().err


def test_bad_config_file_exit_1(toy, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["cv", "--config", str(bad)]) == 1
    bad.write_text("[1, 2]")
    assert cli.main(["cv", "--config", str(bad)]) == 1
    bad.write_text(json.dumps({"data_path": str(toy), "train": {"rb_rate": 3.0}}))
    assert cli.main(["cv", "--config", str(bad)]) == 1


def test_runtime_failure_exit_2(toy, monkeypatch):
    def boom(*a, **kw):
        raise RuntimeError("diverged")

    monkeypatch.setattr(cli, "run_experiment", boom)
    assert cli.main(["cv", "--data", str(toy)] + FAST) == 2


def test_config_defaults_and_flag_override(toy, tmp_path):
    cfg_file = tmp_path / "exp.json"
    cfg_file.write_text(json.dumps({"data_path": str(toy), "architecture": "8", "seed": 3,
                                    "train": {"epochs": 7, "l0_lambda": 0.01}}))
    parser = cli.build_parser()
    cfg = cli.resolve_config(parser.parse_args(["cv", "--config", str(cfg_file), "--arch", "4"]))
    assert cfg.architecture == "4" and cfg.seed == 3
    assert cfg.train.epochs == 7 and cfg.train.l0_lambda == 0.01
    assert cfg.out_dir == str(tmp_path / "results" / "cv")
    cfg = cli.resolve_config(parser.parse_args(["cv", "--config", str(cfg_file), "--out-dir", str(tmp_path / "x")]))
    assert cfg.out_dir == str(tmp_path / "x")


def test_binarize(toy, tmp_path):
    assert cli.main(["binarize", "--data", str(toy)]) == 0
    from crsnet.data import BinaryDataset
    ds = BinaryDataset.load(tmp_path / "results" / "toy.npz")
    assert ds.X.shape == (10, 6)


def test_train_then_extract(toy, tmp_path):
    assert cli.main(["train", "--data", str(toy), "--use-l0", "true"] + FAST) == 0
    models = list((tmp_path / "results" / "train").glob("*.model.json"))
    assert len(models) == 1
    payload = json.loads(models[0].read_text())
    assert len(payload["history"]) == 5 and payload["class_names"] == ["no", "yes"]
    assert cli.main(["extract", "--model", str(models[0])]) == 0
    out = tmp_path / "results" / "extract"
    assert {p.suffixes[-1] for p in out.iterdir()} == {".json", ".txt"}
    assert len(list(out.glob("*.rules.txt"))) == 1
    assert cli.main(["extract", "--model", str(tmp_path / "nope.json")]) == 1


def test_cv_and_report(toy, tmp_path, capsys):
    assert cli.main(["cv", "--data", str(toy)] + FAST) == 0
    assert cli.main(["cv", "--data", str(toy), "--use-l0", "1"] + FAST) == 0
    records = tmp_path / "results" / "cv" / "records.jsonl"
    assert len(records.read_text().splitlines()) == 2
    assert "fold 1" in capsys.readouterr().out
    assert cli.main(["report"]) == 0
    with open(tmp_path / "results" / "report" / "summary.csv") as fh:
        assert {r["variant"] for r in csv.DictReader(fh)} == {"baseline", "l0"}
    assert cli.main(["report", "--records", str(tmp_path / "none.jsonl")]) == 1


def test_grid(toy, tmp_path):
    out = tmp_path / "g"
    argv = ["grid", "--data", str(toy), "--out-dir", str(out), "--grid-arch", "3", "5",
            "--grid-l0-lambda", "0", "0.001"] + FAST
    assert cli.main(argv) == 0
    with open(out / "pareto.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert cli.main(["grid", "--data", str(toy), "--grid-arch"]) == 1
