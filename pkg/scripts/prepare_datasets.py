"""Write the benchmark datasets used by the acceptance suite into ``data/``.

Each dataset becomes ``<name>.csv`` (header row, label last) plus a
``<name>.spec`` sidecar with one ``name,kind[,values]`` line per column.

* wine: the UCI wine data bundled with scikit-learn.
* mushroom: the UCI agaricus-lepiota file if given via ``--mushroom-uci``;
  otherwise the KEEL copy shipped in the ``keel_ds`` wheel (``--keel-wheel``),
  which drops the 2480 rows with a missing stalk-root value (5644 rows left).
* connect-4: only from a local UCI ``connect-4.data`` file (``--connect4-uci``).
"""
from __future__ import annotations

import argparse
import csv
import zipfile
from pathlib import Path

MUSHROOM_COLUMNS = [
    "cap-shape", "cap-surface", "cap-color", "bruises", "odor",
    "gill-attachment", "gill-spacing", "gill-size", "gill-color",
    "stalk-shape", "stalk-root", "stalk-surface-above-ring",
    "stalk-surface-below-ring", "stalk-color-above-ring",
    "stalk-color-below-ring", "veil-type", "veil-color", "ring-number",
    "ring-type", "spore-print-color", "population", "habitat",
]

CONNECT4_SQUARES = [f"{col}{row}" for col in "abcdefg" for row in range(1, 7)]


def write_dataset(out_dir: Path, name: str, header, rows, kinds) -> None:
    with open(out_dir / f"{name}.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    with open(out_dir / f"{name}.spec", "w") as fh:
        for column, kind in zip(header, kinds):
            fh.write(f"{column},{kind}\n")
    print(f"{name}: {len(rows)} rows -> {out_dir / (name + '.csv')}")


def prepare_wine(out_dir: Path) -> None:
    from sklearn.datasets import load_wine

    bunch = load_wine()
    header = list(bunch.feature_names) + ["class"]
    rows = [
        [repr(float(v)) for v in x] + [f"class_{int(t)}"]
        for x, t in zip(bunch.data, bunch.target)
    ]
    kinds = ["continuous"] * len(bunch.feature_names) + ["label"]
    write_dataset(out_dir, "wine", header, rows, kinds)


def prepare_mushroom(out_dir: Path, uci_file: Path | None, keel_wheel: Path | None) -> None:
    if uci_file is not None:
        # UCI order: label first.
        lines = uci_file.read_text().split()
        rows = [line.split(",")[1:] + [line.split(",")[0]] for line in lines if line]
    elif keel_wheel is not None:
        with zipfile.ZipFile(keel_wheel) as zf:
            text = zf.read("keel_ds/data/balanced/raw/mushroom.dat").decode()
        rows = [line.strip().split(",") for line in text.splitlines() if line.strip()]
    else:
        print("mushroom: no source given, skipped")
        return
    header = MUSHROOM_COLUMNS + ["class"]
    kinds = ["categorical"] * len(MUSHROOM_COLUMNS) + ["label"]
    write_dataset(out_dir, "mushroom", header, rows, kinds)


def prepare_connect4(out_dir: Path, uci_file: Path | None) -> None:
    if uci_file is None:
        print("connect-4: no source given, skipped")
        return
    rows = [line.split(",") for line in uci_file.read_text().split() if line]
    header = CONNECT4_SQUARES + ["class"]
    kinds = ["categorical"] * len(CONNECT4_SQUARES) + ["label"]
    write_dataset(out_dir, "connect4", header, rows, kinds)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "data")
    parser.add_argument("--mushroom-uci", type=Path)
    parser.add_argument("--keel-wheel", type=Path)
    parser.add_argument("--connect4-uci", type=Path)
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    prepare_wine(args.out)
    prepare_mushroom(args.out, args.mushroom_uci, args.keel_wheel)
    prepare_connect4(args.out, args.connect4_uci)


if __name__ == "__main__":
    main()
