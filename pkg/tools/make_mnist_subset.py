"""Write the 5,000-digit MNIST sample shipped with mlxtend as gzipped IDX files.

The first 400 digits of every class become the training split, the remaining
100 the test split.  Usage::

    python tools/make_mnist_subset.py data/mnist-subset
"""

import gzip
import struct
import sys
from importlib import resources
from pathlib import Path

import numpy as np

TRAIN_PER_CLASS = 400


def write_idx(path: Path, array: np.ndarray, type_code: int) -> None:
    header = struct.pack(">BBBB", 0, 0, type_code, array.ndim)
    header += struct.pack(f">{array.ndim}I", *array.shape)
    with gzip.GzipFile(path, "wb", mtime=0) as fh:
        fh.write(header + array.astype(np.uint8).tobytes())


def main(out_dir: str) -> None:
    src = resources.files("mlxtend.data") / "data" / "mnist_5k.csv.gz"
    with resources.as_file(src) as p:
        table = np.loadtxt(p, delimiter=",", dtype=np.int64)
    images = table[:, :-1].reshape(-1, 28, 28)
    labels = table[:, -1]
    train_idx, test_idx = [], []
    for c in range(10):
        idx = np.flatnonzero(labels == c)
        train_idx += list(idx[:TRAIN_PER_CLASS])
        test_idx += list(idx[TRAIN_PER_CLASS:])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for split, idx in (("train", train_idx), ("t10k", test_idx)):
        write_idx(out / f"{split}-images-idx3-ubyte.gz", images[idx], 0x08)
        write_idx(out / f"{split}-labels-idx1-ubyte.gz", labels[idx], 0x08)
        print(split, len(idx))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/mnist-subset")
