#!/usr/bin/env python3
"""Write a small MNIST subset as IDX files.

The source is the 5,000-digit MNIST sample bundled in the mlxtend wheel
(500 digits per class, sorted by class). Digits are interleaved by class so
that any contiguous slice of the output files is class-balanced, then
written as

    train-images-idx3-ubyte / train-labels-idx1-ubyte   (400 per class)
    t10k-images-idx3-ubyte  / t10k-labels-idx1-ubyte    (100 per class)

Usage: make_mnist_subset.py OUT_DIR [--wheel path/to/mlxtend.whl]
If no wheel is given it is fetched with `pip download`.
"""

import argparse
import gzip
import io
import pathlib
import struct
import subprocess
import sys
import tempfile
import zipfile

import numpy as np

PER_CLASS = 500
TRAIN_PER_CLASS = 400


def load_csv(wheel: pathlib.Path) -> np.ndarray:
    with zipfile.ZipFile(wheel) as z:
        raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz"))
    return np.loadtxt(io.BytesIO(raw), delimiter=",").astype(np.int64)


def write_idx(out: pathlib.Path, stem: str, images: np.ndarray, labels: np.ndarray) -> None:
    n = images.shape[0]
    with open(out / f"{stem}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(images.astype(np.uint8).tobytes())
    with open(out / f"{stem}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels.astype(np.uint8).tobytes())


def interleave(rows: np.ndarray, labels: np.ndarray, lo: int, hi: int):
    by_class = [rows[labels == c][lo:hi] for c in range(10)]
    order = [by_class[c][i] for i in range(hi - lo) for c in range(10)]
    lab = [c for _ in range(hi - lo) for c in range(10)]
    return np.stack(order), np.array(lab)


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("out_dir", type=pathlib.Path)
    parser.add_argument("--wheel", type=pathlib.Path)
    args = parser.parse_args()

    wheel = args.wheel
    if wheel is None:
        tmp = pathlib.Path(tempfile.mkdtemp())
        subprocess.check_call([sys.executable, "-m", "pip", "download", "--no-deps",
                               "-q", "-d", str(tmp), "mlxtend==0.24.0"])
        wheel = next(tmp.glob("mlxtend-*.whl"))

    table = load_csv(wheel)
    pixels, labels = table[:, :-1], table[:, -1]
    assert pixels.shape == (10 * PER_CLASS, 784)
    assert np.all(np.bincount(labels) == PER_CLASS)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_idx(args.out_dir, "train", *interleave(pixels, labels, 0, TRAIN_PER_CLASS))
    write_idx(args.out_dir, "t10k", *interleave(pixels, labels, TRAIN_PER_CLASS, PER_CLASS))
    return 0


if __name__ == "__main__":
    sys.exit(main())
