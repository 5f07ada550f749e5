#!/usr/bin/env python3
"""Rebuild a StatLog-style ``dna`` dataset from the UCI splice-junction data.

StatLog ``dna`` is the splice-junction data with each of the 60 nucleotides
one-hot coded into 3 binary features (A=100, C=010, G=001, T=000), giving
180 features and classes EI=1, IE=2, N=3. This script applies the same
coding and writes LIBSVM files split 1400 / 600 / rest like the LIBSVM
``dna.scale.tr`` / ``dna.scale.val`` / ``dna.scale.t`` triple.

Rows containing ambiguous nucleotide codes (D, N, R, S) are dropped, which
leaves 3175 rows instead of the 3186 of the StatLog release, so the test
file has 1175 rows.

The source may be the UCI ``splice.data`` file (``class, name, SEQUENCE``),
a comma-separated file with one nucleotide per column and the class last,
or a zip/wheel containing such a file (e.g. the ``keel-ds`` wheel).
"""

from __future__ import annotations

import argparse
import zipfile
from pathlib import Path

import numpy as np

from vcprune.dataio import Dataset, to_libsvm

CODE = {"A": (1.0, 0.0, 0.0), "C": (0.0, 1.0, 0.0), "G": (0.0, 0.0, 1.0), "T": (0.0, 0.0, 0.0)}
CLASSES = {"EI": 1, "IE": 2, "N": 3}
SIZES = (1400, 600)


def read_source(path: Path, member: str | None) -> str:
    if path.suffix in (".whl", ".zip"):
        with zipfile.ZipFile(path) as zf:
            names = [member] if member else [n for n in zf.namelist() if n.endswith("splice.dat")]
            if not names:
                raise SystemExit(f"no splice.dat inside {path}; pass --member")
            return zf.read(names[0]).decode("utf-8")
    return path.read_text(encoding="utf-8")


def parse_rows(text: str):
    """Yield (label, sequence) pairs; header and blank lines are skipped."""
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("@"):
            continue
        tokens = [t.strip() for t in line.split(",")]
        if len(tokens) == 3:
            label, _, seq = tokens
        else:
            label, seq = tokens[-1], "".join(tokens[:-1])
        yield label.upper(), seq.upper()


def encode(text: str) -> tuple[Dataset, int]:
    X, y, dropped = [], [], 0
    for label, seq in parse_rows(text):
        if len(seq) != 60:
            raise SystemExit(f"expected 60 nucleotides, got {len(seq)}")
        if set(seq) - set(CODE):
            dropped += 1
            continue
        X.append([v for c in seq for v in CODE[c]])
        y.append(CLASSES[label] - 1)
    label_map = {float(v): v - 1 for v in CLASSES.values()}
    return Dataset(np.array(X), np.array(y), 3, label_map), dropped


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source", type=Path)
    ap.add_argument("--member", help="file name inside a zip/wheel source")
    ap.add_argument("--out", type=Path, default=Path("data"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    ds, dropped = encode(read_source(args.source, args.member))
    order = np.random.default_rng(args.seed).permutation(ds.n_samples)
    cuts = np.cumsum(SIZES)
    parts = np.split(order, cuts)
    args.out.mkdir(parents=True, exist_ok=True)
    for suffix, rows in zip(("tr", "val", "t"), parts):
        path = args.out / f"dna.scale.{suffix}"
        path.write_text(to_libsvm(ds.subset(np.sort(rows))), encoding="utf-8")
        print(f"{path}: {rows.size} rows")
    print(f"dropped {dropped} rows with ambiguous nucleotides")


if __name__ == "__main__":
    main()
