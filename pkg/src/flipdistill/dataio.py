"""Dataset ingestion, normalisation and the on-disk synthetic-set container.

Parsers are strict: every malformed input raises a specific subclass of
:class:`FormatError` instead of silently truncating.
"""

from __future__ import annotations

import gzip
import zlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# -- errors ------------------------------------------------------------------


class FormatError(ValueError):
    """Base class for malformed binary inputs."""


class BadMagicError(FormatError):
    """Leading magic bytes do not identify the expected format."""


class UnsupportedVersionError(FormatError):
    pass


class TruncatedHeaderError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class TrailingDataError(FormatError):
    """Bytes remain after the payload the header describes."""


class CountMismatchError(FormatError):
    """Image and label files disagree on the number of records."""


class RecordSizeError(FormatError):
    """File size is not a whole number of fixed-size records."""


class LabelRangeError(FormatError):
    pass


class ShapeMismatchError(FormatError):
    """Header dimensions have the wrong rank for the requested content."""


# -- containers ----------------------------------------------------------------


@dataclass
class ImageBatch:
    images: np.ndarray  # N x C x H x W float64
    labels: np.ndarray  # N int64

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "ImageBatch":
        return ImageBatch(self.images[idx], self.labels[idx])


@dataclass
class DatasetMeta:
    name: str
    channels: int
    height: int
    width: int
    classes: int
    counts: dict[str, int]
    mean: tuple[float, ...]
    std: tuple[float, ...]


@dataclass
class RealSet:
    """Real images grouped by class; ``by_class[c]`` is N_c x C x H x W."""

    by_class: list[np.ndarray]
    meta: DatasetMeta | None = None

    @property
    def classes(self) -> int:
        return len(self.by_class)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.by_class[0].shape[1:])

    def counts(self) -> list[int]:
        return [len(x) for x in self.by_class]

    @classmethod
    def from_batch(cls, batch: ImageBatch, classes: int | None = None, meta=None) -> "RealSet":
        k = int(batch.labels.max()) + 1 if classes is None else classes
        return cls([batch.images[batch.labels == c] for c in range(k)], meta)

    def to_batch(self) -> ImageBatch:
        labels = np.concatenate([np.full(len(x), c) for c, x in enumerate(self.by_class)])
        return ImageBatch(np.concatenate(self.by_class), labels.astype(np.int64))


# -- IDX ---------------------------------------------------------------------

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
_IDX_TYPES = {
    0x08: np.dtype(np.uint8),
    0x09: np.dtype(np.int8),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (EOFError, OSError, zlib.error) as exc:
            raise TruncatedPayloadError(f"{path}: corrupt gzip stream ({exc})") from exc
    return raw


def parse_idx(raw: bytes, expect_magic: int | None = None, source: str = "<bytes>") -> np.ndarray:
    """Decode an IDX byte string into an array with its header's shape."""
    if len(raw) < 4:
        raise TruncatedHeaderError(f"{source}: {len(raw)} bytes, IDX header needs at least 4")
    if raw[0] != 0 or raw[1] != 0 or raw[2] not in _IDX_TYPES or raw[3] == 0:
        raise BadMagicError(f"{source}: bad IDX magic {raw[:4].hex()}")
    magic = struct.unpack(">I", raw[:4])[0]
    if expect_magic is not None and magic != expect_magic:
        raise BadMagicError(f"{source}: magic 0x{magic:08x}, expected 0x{expect_magic:08x}")
    ndim = raw[3]
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedHeaderError(f"{source}: header needs {header} bytes, file has {len(raw)}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    dtype = _IDX_TYPES[raw[2]]
    need = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    have = len(raw) - header
    if have < need:
        raise TruncatedPayloadError(f"{source}: payload has {have} bytes, header promises {need}")
    if have > need:
        raise TrailingDataError(f"{source}: {have - need} bytes after the payload")
    return np.frombuffer(raw, dtype=dtype, offset=header).reshape(dims)


def read_idx(path, expect_magic: int | None = None) -> np.ndarray:
    return parse_idx(_read_bytes(path), expect_magic, str(path))


def load_idx(
    images_path,
    labels_path,
    classes: int = 10,
    mean=None,
    std=None,
) -> ImageBatch:
    """Read an IDX image/label pair as N x 1 x H x W pixels in [0, 1].

    With ``mean``/``std`` given the pixels are also channel-normalised.
    """
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    if images.ndim != 3:
        raise ShapeMismatchError(f"{images_path}: image file has rank {images.ndim}, expected 3")
    labels = read_idx(labels_path, IDX_LABELS_MAGIC)
    if labels.ndim != 1:
        raise ShapeMismatchError(f"{labels_path}: label file has rank {labels.ndim}, expected 1")
    if len(labels) != len(images):
        raise CountMismatchError(f"{len(images)} images but {len(labels)} labels")
    labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise LabelRangeError(f"{labels_path}: labels outside [0, {classes})")
    x = images.astype(np.float64)[:, None] / 255.0
    if mean is not None:
        x = normalize(x, mean, std)
    return ImageBatch(x, labels)


# -- CIFAR binary ----------------------------------------------------------------


def load_cifar_bin(path, classes: int = 10, label_bytes: int = 1, mean=None, std=None) -> ImageBatch:
    """Read a CIFAR binary batch: records of label byte(s) + 3072 CHW pixel bytes.

    CIFAR-100 files carry a coarse and a fine label (``label_bytes=2``); the
    fine label is returned.
    """
    raw = _read_bytes(path)
    rec = label_bytes + 3072
    if len(raw) == 0 or len(raw) % rec:
        raise RecordSizeError(f"{path}: {len(raw)} bytes is not a multiple of {rec}")
    table = np.frombuffer(raw, dtype=np.uint8).reshape(-1, rec)
    labels = table[:, label_bytes - 1].astype(np.int64)
    if labels.max() >= classes:
        raise LabelRangeError(f"{path}: label {labels.max()} outside [0, {classes})")
    x = table[:, label_bytes:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0
    if mean is not None:
        x = normalize(x, mean, std)
    return ImageBatch(x, labels)


# -- normalisation -------------------------------------------------------------


def channel_stats(x: np.ndarray) -> tuple[tuple[float, ...], tuple[float, ...]]:
    return tuple(float(v) for v in x.mean(axis=(0, 2, 3))), tuple(
        float(v) for v in x.std(axis=(0, 2, 3))
    )


def normalize(x: np.ndarray, mean, std) -> np.ndarray:
    m = np.asarray(mean, dtype=np.float64).reshape(1, -1, 1, 1)
    s = np.asarray(std, dtype=np.float64).reshape(1, -1, 1, 1)
    return (x - m) / s


def denormalize(x: np.ndarray, mean, std) -> np.ndarray:
    m = np.asarray(mean, dtype=np.float64).reshape(1, -1, 1, 1)
    s = np.asarray(std, dtype=np.float64).reshape(1, -1, 1, 1)
    return x * s + m


def pad_to(x: np.ndarray, size: int) -> np.ndarray:
    """Zero-pad N x C x H x W images symmetrically to size x size."""
    h, w = x.shape[2:]
    if (h, w) == (size, size):
        return x
    top, left = (size - h) // 2, (size - w) // 2
    return np.pad(x, ((0, 0), (0, 0), (top, size - h - top), (left, size - w - left)))


_IDX_DATASETS = {"mnist", "fashion-mnist"}
CIFAR10_SPLITS = (50_000, 10_000)


def _find(data_dir: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (data_dir / name).exists():
            return data_dir / name
    raise FileNotFoundError(f"{stem}[.gz] not found in {data_dir}")


def load_dataset(name: str, data_dir) -> tuple[ImageBatch, ImageBatch, DatasetMeta]:
    """Load train and test splits, normalised with training-split statistics.

    MNIST-style 28x28 digits are zero-padded to 32x32 before normalising, so
    the padding matches the background.
    """
    data_dir = Path(data_dir)
    key = name.lower()
    if key in _IDX_DATASETS:
        train = load_idx(
            _find(data_dir, "train-images-idx3-ubyte"), _find(data_dir, "train-labels-idx1-ubyte")
        )
        test = load_idx(
            _find(data_dir, "t10k-images-idx3-ubyte"), _find(data_dir, "t10k-labels-idx1-ubyte")
        )
        mean, std = channel_stats(train.images)
        train.images, test.images = pad_to(train.images, 32), pad_to(test.images, 32)
        classes = 10
    elif key in ("cifar10", "cifar-10"):
        root = data_dir / "cifar-10-batches-bin" if (data_dir / "cifar-10-batches-bin").exists() else data_dir
        parts = [load_cifar_bin(root / f"data_batch_{i}.bin") for i in range(1, 6)]
        train = ImageBatch(
            np.concatenate([p.images for p in parts]), np.concatenate([p.labels for p in parts])
        )
        test = load_cifar_bin(root / "test_batch.bin")
        if (len(train), len(test)) != CIFAR10_SPLITS:
            raise CountMismatchError(
                f"{root}: CIFAR-10 splits hold {len(train)}/{len(test)} images, expected {CIFAR10_SPLITS}"
            )
        mean, std = channel_stats(train.images)
        classes = 10
    else:
        raise ValueError(f"unknown dataset {name!r}")
    train.images = normalize(train.images, mean, std)
    test.images = normalize(test.images, mean, std)
    c, h, w = train.images.shape[1:]
    meta = DatasetMeta(key, c, h, w, classes, {"train": len(train), "test": len(test)}, mean, std)
    return train, test, meta


# -- flip-closed construction ----------------------------------------------------


def make_flip_closed(real):
    """Extend a set with the mirror image of every member (2N images).

    Accepts a :class:`RealSet` (each class extended) or an :class:`ImageBatch`.
    """
    if isinstance(real, ImageBatch):
        return ImageBatch(
            np.concatenate([real.images, real.images[..., ::-1]]),
            np.concatenate([real.labels, real.labels]),
        )
    return RealSet([np.concatenate([x, x[..., ::-1]]) for x in real.by_class], real.meta)


# -- synthetic-set container -------------------------------------------------------

DFRG_MAGIC = b"DFRG"
DFRG_VERSION = 1
_DFRG_HEAD = struct.Struct("<4sH5I")


@dataclass
class SyntheticArrays:
    """Plain-array view of a synthetic set: ``images`` is classes x ipc x C x H x W."""

    images: np.ndarray
    mean: tuple[float, ...] = ()
    std: tuple[float, ...] = ()
    extra: dict = field(default_factory=dict)

    @property
    def classes(self) -> int:
        return self.images.shape[0]

    @property
    def ipc(self) -> int:
        return self.images.shape[1]

    def as_batch(self) -> ImageBatch:
        k, m = self.images.shape[:2]
        return ImageBatch(
            self.images.reshape(k * m, *self.images.shape[2:]), np.repeat(np.arange(k), m)
        )


def encode_dfrg(images: np.ndarray, mean=(), std=()) -> bytes:
    """Serialise class-major pixels: header, per-channel mean/std, float64 LE payload."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 5:
        raise ValueError(f"expected classes x ipc x C x H x W, got shape {images.shape}")
    k, m, c, h, w = images.shape
    mean = tuple(mean) if len(mean) else (0.0,) * c
    std = tuple(std) if len(std) else (1.0,) * c
    if len(mean) != c or len(std) != c:
        raise ValueError("normalisation constants must have one entry per channel")
    head = _DFRG_HEAD.pack(DFRG_MAGIC, DFRG_VERSION, k, m, c, h, w)
    norm = np.asarray(mean + std, dtype="<f8").tobytes()
    return head + norm + images.astype("<f8").tobytes()


def decode_dfrg(raw: bytes, source: str = "<bytes>") -> SyntheticArrays:
    if len(raw) < _DFRG_HEAD.size:
        raise TruncatedHeaderError(f"{source}: {len(raw)} bytes is shorter than the DFRG header")
    magic, version, k, m, c, h, w = _DFRG_HEAD.unpack_from(raw)
    if magic != DFRG_MAGIC:
        raise BadMagicError(f"{source}: magic {magic!r}, expected {DFRG_MAGIC!r}")
    if version != DFRG_VERSION:
        raise UnsupportedVersionError(f"{source}: version {version}, this reader handles {DFRG_VERSION}")
    offset = _DFRG_HEAD.size
    norm_bytes = 16 * c
    if len(raw) < offset + norm_bytes:
        raise TruncatedHeaderError(f"{source}: normalisation block truncated")
    norm = np.frombuffer(raw, dtype="<f8", count=2 * c, offset=offset)
    offset += norm_bytes
    need = k * m * c * h * w * 8
    have = len(raw) - offset
    if have < need:
        raise TruncatedPayloadError(f"{source}: payload has {have} bytes, expected {need}")
    if have > need:
        raise TrailingDataError(f"{source}: {have - need} bytes after the payload")
    images = np.frombuffer(raw, dtype="<f8", offset=offset).astype(np.float64).reshape(k, m, c, h, w)
    return SyntheticArrays(images, tuple(norm[:c].tolist()), tuple(norm[c:].tolist()))


def save_synthetic(path, images: np.ndarray, mean=(), std=()) -> None:
    Path(path).write_bytes(encode_dfrg(images, mean, std))


def load_synthetic(path) -> SyntheticArrays:
    return decode_dfrg(Path(path).read_bytes(), str(path))


# -- image export ------------------------------------------------------------------


def _to_uint8(x: np.ndarray) -> np.ndarray:
    return np.round(np.clip(x, 0.0, 1.0) * 255.0).astype(np.uint8)


def tile_grid(images: np.ndarray, mean=(), std=()) -> np.ndarray:
    """Arrange classes x ipc x C x H x W images as one H*classes x W*ipc x C picture in [0, 1]."""
    k, m, c, h, w = images.shape
    flat = images.reshape(k * m, c, h, w)
    if len(mean):
        flat = denormalize(flat, mean, std)
    grid = flat.reshape(k, m, c, h, w).transpose(0, 3, 1, 4, 2).reshape(k * h, m * w, c)
    return np.clip(grid, 0.0, 1.0)


def write_pgm(path, gray: np.ndarray) -> None:
    """Binary (P5) 8-bit greyscale image from values in [0, 1]."""
    pixels = _to_uint8(gray)
    h, w = pixels.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise BadMagicError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    return np.frombuffer(parts[4], dtype=np.uint8, count=w * h).reshape(h, w) / float(maxval)


def export_grid(path, images: np.ndarray, mean=(), std=()) -> tuple[int, int]:
    """Write synthetic images as a grid, one row per class; returns (height, width).

    ``.pgm`` output is greyscale (RGB is averaged over channels); ``.png``
    keeps colour.
    """
    grid = tile_grid(images, mean, std)
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        write_pgm(path, grid.mean(axis=2))
    elif suffix == ".png":
        from PIL import Image

        pixels = _to_uint8(grid)
        img = Image.fromarray(pixels[..., 0] if pixels.shape[2] == 1 else pixels)
        img.save(path)
    else:
        raise ValueError(f"unsupported grid format {suffix!r} (use .pgm or .png)")
    return grid.shape[0], grid.shape[1]
