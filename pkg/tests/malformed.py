"""Crafted malformed IDX and CIFAR files, each paired with the error it must raise.

Shared by the data-io unit tests and the acceptance suite.
"""

import gzip
import struct

import numpy as np

from flipdistill.dataio import (
    BadMagicError,
    CountMismatchError,
    LabelRangeError,
    RecordSizeError,
    TrailingDataError,
    TruncatedHeaderError,
    TruncatedPayloadError,
    load_cifar_bin,
    load_dataset,
    load_idx,
)


def idx_bytes(arr: np.ndarray, type_code: int = 0x08) -> bytes:
    head = bytes([0, 0, type_code, arr.ndim]) + struct.pack(f">{arr.ndim}I", *arr.shape)
    return head + arr.astype(np.uint8).tobytes()


def good_images(n=3):
    return idx_bytes(np.arange(n * 4 * 4, dtype=np.uint8).reshape(n, 4, 4))


def good_labels(n=3):
    return idx_bytes(np.arange(n, dtype=np.uint8) % 10)


def cifar_bytes(labels, label_bytes=1) -> bytes:
    r = np.random.default_rng(len(labels))
    rows = []
    for lab in labels:
        head = bytes([0] * (label_bytes - 1) + [lab])
        rows.append(head + r.integers(0, 256, 3072, dtype=np.uint8).tobytes())
    return b"".join(rows)


def _idx_case(images: bytes, labels: bytes):
    def run(tmp):
        (tmp / "img").write_bytes(images)
        (tmp / "lab").write_bytes(labels)
        load_idx(tmp / "img", tmp / "lab")

    return run


def _cifar_case(raw: bytes, **kw):
    def run(tmp):
        (tmp / "batch.bin").write_bytes(raw)
        load_cifar_bin(tmp / "batch.bin", **kw)

    return run


def _cifar_short_splits(tmp):
    for i in range(1, 6):
        (tmp / f"data_batch_{i}.bin").write_bytes(cifar_bytes([i % 10]))
    (tmp / "test_batch.bin").write_bytes(cifar_bytes([0]))
    load_dataset("cifar10", tmp)


IDX_CASES = [
    ("three-byte file", _idx_case(b"\x00\x00\x08", good_labels()), TruncatedHeaderError),
    ("nonzero leading byte", _idx_case(b"\x01" + good_images()[1:], good_labels()), BadMagicError),
    ("unknown type code", _idx_case(good_images()[:2] + b"\x07" + good_images()[3:], good_labels()), BadMagicError),
    ("label magic in image file", _idx_case(good_labels(), good_labels()), BadMagicError),
    ("zero dimensions", _idx_case(b"\x00\x00\x08\x00", good_labels()), BadMagicError),
    ("dimensions cut short", _idx_case(good_images()[:10], good_labels()), TruncatedHeaderError),
    ("payload cut short", _idx_case(good_images()[:-5], good_labels()), TruncatedPayloadError),
    ("trailing byte", _idx_case(good_images() + b"\x00", good_labels()), TrailingDataError),
    ("image/label count mismatch", _idx_case(good_images(3), good_labels(2)), CountMismatchError),
    ("label ten", _idx_case(good_images(2), idx_bytes(np.array([3, 10]))), LabelRangeError),
    ("corrupt gzip", _idx_case(gzip.compress(good_images())[:-12], good_labels()), TruncatedPayloadError),
]

CIFAR_CASES = [
    ("empty file", _cifar_case(b""), RecordSizeError),
    ("one byte extra", _cifar_case(cifar_bytes([1, 2]) + b"\x00"), RecordSizeError),
    ("one byte short", _cifar_case(cifar_bytes([1, 2])[:-1]), RecordSizeError),
    ("half a record", _cifar_case(cifar_bytes([4])[:1536]), RecordSizeError),
    ("label ten", _cifar_case(cifar_bytes([0, 10])), LabelRangeError),
    ("label 255", _cifar_case(cifar_bytes([255])), LabelRangeError),
    ("CIFAR-100 record read as CIFAR-10", _cifar_case(cifar_bytes([1, 5], label_bytes=2)), RecordSizeError),
    ("CIFAR-100 fine label 100", _cifar_case(cifar_bytes([100], label_bytes=2), classes=100, label_bytes=2), LabelRangeError),
    ("corrupt gzip", _cifar_case(gzip.compress(cifar_bytes([1]))[:-20]), TruncatedPayloadError),
    ("undersized splits", _cifar_short_splits, CountMismatchError),
]
