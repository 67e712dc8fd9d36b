#!/usr/bin/env python3
"""Regenerate the bundled datasets under data/.

wine.csv            UCI Wine (178 x 13 + class), taken from scikit-learn's copy.
mnist-subset/*      2000 train / 500 test MNIST digits in IDX format, balanced per
                    class, drawn from the 5000-sample MNIST excerpt shipped with
                    mlxtend (mnist_5k.csv.gz).

Usage: python3 scripts/make_datasets.py [--mnist-csv PATH_TO_mnist_5k.csv.gz]
"""

import argparse
import gzip
import os
import struct

import numpy as np

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")


def write_wine():
    from sklearn.datasets import load_wine

    d = load_wine()
    path = os.path.join(ROOT, "wine.csv")
    with open(path, "w") as f:
        f.write(",".join(d.feature_names + ["class"]) + "\n")
        for row, label in zip(d.data, d.target):
            f.write(",".join(repr(float(v)).rstrip("0").rstrip(".") if float(v) != int(v) else str(int(v)) for v in row))
            f.write(",%d\n" % (label + 1))
    print("wrote", path)


def write_idx_images(path, images):
    n = images.shape[0]
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, labels.shape[0]))
        f.write(labels.astype(np.uint8).tobytes())


def write_mnist(csv_path):
    with gzip.open(csv_path, "rt") as f:
        tmp = np.loadtxt(f, delimiter=",")
    x, y = tmp[:, :-1], tmp[:, -1].astype(int)
    rng = np.random.default_rng(20190301)
    train_idx, test_idx = [], []
    for c in range(10):
        idx = rng.permutation(np.flatnonzero(y == c))
        train_idx.extend(idx[:200])
        test_idx.extend(idx[200:250])
    train_idx = rng.permutation(train_idx)
    test_idx = rng.permutation(test_idx)
    out = os.path.join(ROOT, "mnist-subset")
    os.makedirs(out, exist_ok=True)
    write_idx_images(os.path.join(out, "train-images-idx3-ubyte"), x[train_idx])
    write_idx_labels(os.path.join(out, "train-labels-idx1-ubyte"), y[train_idx])
    write_idx_images(os.path.join(out, "test-images-idx3-ubyte"), x[test_idx])
    write_idx_labels(os.path.join(out, "test-labels-idx1-ubyte"), y[test_idx])
    print("wrote", out)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--mnist-csv", help="path to mlxtend's mnist_5k.csv.gz")
    args = ap.parse_args()
    os.makedirs(ROOT, exist_ok=True)
    write_wine()
    csv = args.mnist_csv
    if csv is None:
        import mlxtend.data

        csv = os.path.join(os.path.dirname(mlxtend.data.__file__), "data", "mnist_5k.csv.gz")
    write_mnist(csv)


if __name__ == "__main__":
    main()
