#!/usr/bin/env python3
"""Convert ODDS `.mat` files (arrays `X` and `y`) to the CSV layout ssadvae reads.

Output: a header row `x0,...,x{d-1},label`, one row per sample, label 1 for
anomalies and 0 for normals.

    python scripts/odds_to_csv.py thyroid.mat cardio.mat --out data/odds

Needs numpy and scipy; files saved in MATLAB v7.3 format also need h5py.
"""

import argparse
import csv
import pathlib
import sys

import numpy as np


def load_mat(path):
    try:
        from scipy.io import loadmat

        mat = loadmat(path)
        return np.asarray(mat["X"], dtype=float), np.asarray(mat["y"]).ravel()
    except NotImplementedError:
        import h5py  # v7.3 files are HDF5 and store arrays transposed

        with h5py.File(path, "r") as f:
            return np.asarray(f["X"], dtype=float).T, np.asarray(f["y"]).ravel()


def convert(src, out_dir):
    x, y = load_mat(src)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"{src}: {x.shape[0]} feature rows but {y.shape[0]} labels")
    if not np.isfinite(x).all():
        raise ValueError(f"{src}: non-finite feature values")
    dest = out_dir / (pathlib.Path(src).stem + ".csv")
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(x.shape[1])] + ["label"])
        for row, label in zip(x, y):
            w.writerow([repr(float(v)) for v in row] + [int(label != 0)])
    return dest, x.shape, int((y != 0).sum())


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("mat", nargs="+", help="ODDS .mat files")
    p.add_argument("--out", default="data/odds", help="output directory (default: data/odds)")
    args = p.parse_args(argv)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for src in args.mat:
        dest, shape, anomalies = convert(src, out)
        print(f"{dest}: {shape[0]} rows, {shape[1]} features, {anomalies} anomalies")
    return 0


if __name__ == "__main__":
    sys.exit(main())
