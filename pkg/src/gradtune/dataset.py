"""Labelled image datasets and the "GTDS" binary container.

A dataset holds three splits (train / valid / test) of uint8 grayscale
images plus integer labels.  Training code consumes the ``x`` / ``y``
views: ``x`` dequantises pixels to float64 in [0, 1] (value / 255) and
flattens each image to one row.

GTDS layout (little-endian):

    magic "GTDS" | u16 version | u8 task-id length | task-id bytes (ascii)
    | u32 train count | u32 valid count | u32 test count | u16 height
    | u16 width | per split in order train, valid, test: n*h*w pixel bytes
    (row-major per image) then n label bytes.

Round trips are bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

GTDS_MAGIC = b"GTDS"
GTDS_VERSION = 1


@dataclass
class ImageSplit:
    images: np.ndarray  # uint8, (n, h, w)
    labels: np.ndarray  # uint8, (n,)
    _x: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.uint8)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if self.images.ndim != 3 or self.labels.shape != (self.images.shape[0],):
            raise ValueError(
                f"expected (n, h, w) images with (n,) labels, got {self.images.shape} / {self.labels.shape}"
            )

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def x(self) -> np.ndarray:
        if self._x is None:
            n = self.images.shape[0]
            self._x = self.images.reshape(n, -1).astype(np.float64) / 255.0
        return self._x

    @property
    def y(self) -> np.ndarray:
        return self.labels.astype(np.int64)


@dataclass
class LabeledDataset:
    task: str
    train: ImageSplit
    valid: ImageSplit
    test: ImageSplit

    def splits(self):
        return (("train", self.train), ("valid", self.valid), ("test", self.test))

    @property
    def image_shape(self) -> tuple[int, int]:
        return self.train.images.shape[1:]


def class_counts(split: ImageSplit) -> dict[int, int]:
    values, counts = np.unique(split.labels, return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts)}


def write_gtds(ds: LabeledDataset, path) -> None:
    h, w = ds.image_shape
    task = ds.task.encode("ascii")
    if len(task) > 255:
        raise ValueError("task id too long")
    with open(path, "wb") as f:
        f.write(GTDS_MAGIC)
        f.write(struct.pack("<HB", GTDS_VERSION, len(task)))
        f.write(task)
        f.write(struct.pack("<IIIHH", len(ds.train), len(ds.valid), len(ds.test), h, w))
        for _, part in ds.splits():
            if part.images.shape[1:] != (h, w):
                raise ValueError("split image shapes differ")
            f.write(part.images.tobytes())
            f.write(part.labels.tobytes())


def read_gtds(path) -> LabeledDataset:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != GTDS_MAGIC:
        raise ValueError(f"bad GTDS magic {data[:4]!r} in {path}")
    version, task_len = struct.unpack_from("<HB", data, 4)
    if version != GTDS_VERSION:
        raise ValueError(f"unsupported GTDS version {version}")
    off = 7
    task = data[off : off + task_len].decode("ascii")
    off += task_len
    n_train, n_valid, n_test, h, w = struct.unpack_from("<IIIHH", data, off)
    off += 16

    def take(n):
        nonlocal off
        pixels = np.frombuffer(data, dtype=np.uint8, count=n * h * w, offset=off)
        off += n * h * w
        labels = np.frombuffer(data, dtype=np.uint8, count=n, offset=off)
        off += n
        return ImageSplit(pixels.reshape(n, h, w).copy(), labels.copy())

    splits = [take(n) for n in (n_train, n_valid, n_test)]
    if off != len(data):
        raise ValueError(f"GTDS file has {len(data) - off} trailing bytes")
    return LabeledDataset(task, *splits)


def write_pgm(pixels: np.ndarray, path) -> None:
    """Single image as binary PGM (P5, maxval 255) for visual inspection."""
    img = np.asarray(pixels)
    if img.dtype != np.uint8:
        img = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    if img.ndim != 2:
        raise ValueError(f"expected a single (h, w) image, got {img.shape}")
    with open(path, "wb") as f:
        f.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        f.write(img.tobytes())
