"""IDX-format ingestion and digit-range splits (MNIST-04 / MNIST-59).

Reads plain or gzip-compressed IDX files (big-endian headers, magic 2051
for images and 2049 for labels).  ``build_split`` filters one digit range
out of a pool, relabels digits to 0..k-1, and partitions a seeded shuffle
into train / valid / test; the resulting dataset uses the same container
as the synthetic tasks so the trainer has a single ingestion path.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import ImageSplit, LabeledDataset
from .numerics import SeededRng, derive_seed

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049

_TRAIN_IMAGE_NAMES = ("train-images-idx3-ubyte", "train-images.idx3-ubyte")
_TRAIN_LABEL_NAMES = ("train-labels-idx1-ubyte", "train-labels.idx1-ubyte")


def locate_training_pair(directory) -> tuple[Path, Path] | None:
    """Paths of the official training image/label IDX files, if present.

    Accepts the usual file-name spellings, raw or gzipped.  The env var
    GRADTUNE_MNIST_DIR overrides ``directory`` when set.
    """
    directory = Path(os.environ.get("GRADTUNE_MNIST_DIR", directory))

    def find(names):
        for name in names:
            for suffix in ("", ".gz"):
                p = directory / (name + suffix)
                if p.is_file():
                    return p
        return None

    images = find(_TRAIN_IMAGE_NAMES)
    labels = find(_TRAIN_LABEL_NAMES)
    if images is None or labels is None:
        return None
    return images, labels


def _read_file(path) -> bytes:
    with open(path, "rb") as f:
        data = f.read()
    if data[:2] == b"\x1f\x8b":
        return gzip.decompress(data)
    return data


def read_idx(path) -> np.ndarray:
    """Parse an IDX file: (n, rows, cols) uint8 for images, (n,) for labels."""
    data = _read_file(path)
    if len(data) < 8:
        raise ValueError(f"{path}: truncated header, {len(data)} bytes at offset 0")
    (magic,) = struct.unpack_from(">I", data, 0)
    if magic == IMAGE_MAGIC:
        if len(data) < 16:
            raise ValueError(f"{path}: truncated image header at offset {len(data)}")
        count, rows, cols = struct.unpack_from(">III", data, 4)
        expected = 16 + count * rows * cols
        if len(data) != expected:
            raise ValueError(
                f"{path}: payload ends at offset {len(data)}, expected {expected}"
            )
        return np.frombuffer(data, dtype=np.uint8, offset=16).reshape(count, rows, cols).copy()
    if magic == LABEL_MAGIC:
        (count,) = struct.unpack_from(">I", data, 4)
        expected = 8 + count
        if len(data) != expected:
            raise ValueError(
                f"{path}: payload ends at offset {len(data)}, expected {expected}"
            )
        return np.frombuffer(data, dtype=np.uint8, offset=8).copy()
    raise ValueError(f"{path}: bad IDX magic 0x{magic:08X} at offset 0")


def read_idx_images(path) -> np.ndarray:
    arr = read_idx(path)
    if arr.ndim != 3:
        raise ValueError(f"{path} is a label file, not images")
    return arr


def read_idx_labels(path) -> np.ndarray:
    arr = read_idx(path)
    if arr.ndim != 1:
        raise ValueError(f"{path} is an image file, not labels")
    return arr


@dataclass(frozen=True)
class DigitRangeSpec:
    lo: int
    hi: int

    def __post_init__(self):
        if not 0 <= self.lo <= self.hi <= 9:
            raise ValueError(f"need 0 <= lo <= hi <= 9, got {self.lo}..{self.hi}")

    @property
    def classes(self) -> int:
        return self.hi - self.lo + 1

    @property
    def task(self) -> str:
        return f"mnist{self.lo}{self.hi}"

    def relabel(self, digits: np.ndarray) -> np.ndarray:
        return digits - self.lo

    def original_digit(self, label: int) -> int:
        return label + self.lo


def build_split(
    images: np.ndarray,
    labels: np.ndarray,
    spec: DigitRangeSpec,
    sizes: tuple[int, int, int] = (20_000, 5_000, 5_000),
    seed: int = 0,
) -> LabeledDataset:
    """Filter a digit range, relabel to 0..k-1, and partition by seeded shuffle."""
    if images.shape[0] != labels.shape[0]:
        raise ValueError(f"{images.shape[0]} images vs {labels.shape[0]} labels")
    pool = np.flatnonzero((labels >= spec.lo) & (labels <= spec.hi))
    need = sum(sizes)
    if len(pool) < need:
        raise ValueError(
            f"insufficient digits {spec.lo}..{spec.hi}: have {len(pool)}, need {need}"
        )
    order = SeededRng(derive_seed(seed, "mnist-split", spec.lo, spec.hi)).permutation(len(pool))
    chosen = pool[order]
    parts = []
    offset = 0
    for n in sizes:
        idx = chosen[offset : offset + n]
        offset += n
        parts.append(ImageSplit(images[idx], spec.relabel(labels[idx]).astype(np.uint8)))
    return LabeledDataset(spec.task, *parts)
