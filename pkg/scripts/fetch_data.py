#!/usr/bin/env python3
"""Populate a qdiff data directory.

Layout expected by ``qdiff`` (root: ``$QDIFF_DATA_DIR``, default ``./data``)::

    digits/optdigits.tra, digits/optdigits.tes      (optional; scikit-learn's copy is the fallback)
    mnist/train-images-idx3-ubyte[.gz], mnist/train-labels-idx1-ubyte[.gz]
    fashion/train-images-idx3-ubyte[.gz], fashion/train-labels-idx1-ubyte[.gz]

Sources:

    optdigits      https://archive.ics.uci.edu/ml/machine-learning-databases/optdigits/
    MNIST          https://storage.googleapis.com/cvdf-datasets/mnist/
    Fashion-MNIST  http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/

``--offline`` writes ``mnist/`` from the 5,000-image MNIST subset bundled
with the ``mlxtend`` package (500 images per digit), converted to IDX.
"""
from __future__ import annotations

import argparse
import gzip
import shutil
import sys
import urllib.request
from pathlib import Path

import numpy as np

from qdiff.data import data_dir, write_idx

URLS = {
    "digits": [
        "https://archive.ics.uci.edu/ml/machine-learning-databases/optdigits/optdigits.tra",
        "https://archive.ics.uci.edu/ml/machine-learning-databases/optdigits/optdigits.tes",
    ],
    "mnist": [
        "https://storage.googleapis.com/cvdf-datasets/mnist/train-images-idx3-ubyte.gz",
        "https://storage.googleapis.com/cvdf-datasets/mnist/train-labels-idx1-ubyte.gz",
    ],
    "fashion": [
        "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/train-images-idx3-ubyte.gz",
        "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/train-labels-idx1-ubyte.gz",
    ],
}


def write_mlxtend_mnist(target: Path) -> Path:
    """Convert mlxtend's bundled MNIST subset to a gzip IDX pair under ``target``."""
    from mlxtend.data import mnist_data

    x, y = mnist_data()
    images = np.clip(np.rint(x), 0, 255).astype(np.uint8).reshape(-1, 28, 28)
    target.mkdir(parents=True, exist_ok=True)
    (target / "train-images-idx3-ubyte.gz").write_bytes(gzip.compress(write_idx(images), mtime=0))
    (target / "train-labels-idx1-ubyte.gz").write_bytes(gzip.compress(write_idx(y.astype(np.uint8)), mtime=0))
    return target


def download(name: str, root: Path):
    target = root / name
    target.mkdir(parents=True, exist_ok=True)
    for url in URLS[name]:
        dest = target / url.rsplit("/", 1)[1]
        if dest.exists():
            print(f"exists  {dest}")
            continue
        print(f"fetch   {url}")
        with urllib.request.urlopen(url) as resp, dest.open("wb") as fh:
            shutil.copyfileobj(resp, fh)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("datasets", nargs="*", help=f"any of {sorted(URLS)}; default: mnist")
    ap.add_argument("--data-dir", help="defaults to $QDIFF_DATA_DIR or ./data")
    ap.add_argument("--offline", action="store_true", help="MNIST only, from the mlxtend subset")
    args = ap.parse_args(argv)
    unknown = sorted(set(args.datasets) - set(URLS))
    if unknown:
        ap.error(f"unknown datasets {unknown}")
    root = data_dir(args.data_dir)
    if args.offline:
        print(f"wrote   {write_mlxtend_mnist(root / 'mnist')}")
        return 0
    for name in args.datasets or ["mnist"]:
        download(name, root)
    return 0


if __name__ == "__main__":
    sys.exit(main())
