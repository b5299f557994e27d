import gzip
import struct

import numpy as np
import pytest

from gradtune.mnist import (
    DigitRangeSpec,
    build_split,
    locate_training_pair,
    read_idx,
    read_idx_images,
    read_idx_labels,
)
from gradtune.numerics import SeededRng


def idx_image_bytes(images: np.ndarray) -> bytes:
    n, rows, cols = images.shape
    return struct.pack(">IIII", 2051, n, rows, cols) + images.astype(np.uint8).tobytes()


def idx_label_bytes(labels: np.ndarray) -> bytes:
    return struct.pack(">II", 2049, len(labels)) + labels.astype(np.uint8).tobytes()


def fake_mnist(n=400, seed=1):
    rng = SeededRng(seed)
    images = (rng.uniform_block(n * 28 * 28) * 256).astype(np.uint8).reshape(n, 28, 28)
    labels = np.array([rng.below(10) for _ in range(n)], dtype=np.uint8)
    return images, labels


class TestReadIdx:
    def test_image_round_trip(self, tmp_path):
        images, _ = fake_mnist(20)
        p = tmp_path / "images-idx3-ubyte"
        p.write_bytes(idx_image_bytes(images))
        back = read_idx_images(p)
        assert back.shape == (20, 28, 28)
        assert back.tobytes() == images.tobytes()

    def test_label_round_trip(self, tmp_path):
        _, labels = fake_mnist(20)
        p = tmp_path / "labels-idx1-ubyte"
        p.write_bytes(idx_label_bytes(labels))
        assert read_idx_labels(p).tobytes() == labels.tobytes()

    def test_gzip_transparent(self, tmp_path):
        images, _ = fake_mnist(5)
        p = tmp_path / "images-idx3-ubyte.gz"
        p.write_bytes(gzip.compress(idx_image_bytes(images)))
        assert read_idx_images(p).tobytes() == images.tobytes()

    def test_zero_count_is_empty(self, tmp_path):
        p = tmp_path / "empty"
        p.write_bytes(struct.pack(">IIII", 2051, 0, 28, 28))
        back = read_idx(p)
        assert back.shape == (0, 28, 28)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad"
        p.write_bytes(struct.pack(">IIII", 0xDEADBEEF, 1, 28, 28) + bytes(784))
        with pytest.raises(ValueError, match="0xDEADBEEF"):
            read_idx(p)

    def test_truncated_payload_names_offset(self, tmp_path):
        images, _ = fake_mnist(3)
        p = tmp_path / "short"
        p.write_bytes(idx_image_bytes(images)[:-10])
        with pytest.raises(ValueError, match="offset"):
            read_idx(p)

    def test_type_mismatch_helpers(self, tmp_path):
        images, labels = fake_mnist(3)
        pi = tmp_path / "i"
        pl = tmp_path / "l"
        pi.write_bytes(idx_image_bytes(images))
        pl.write_bytes(idx_label_bytes(labels))
        with pytest.raises(ValueError):
            read_idx_images(pl)
        with pytest.raises(ValueError):
            read_idx_labels(pi)


class TestDigitRangeSpec:
    def test_relabel_and_inverse(self):
        spec = DigitRangeSpec(5, 9)
        digits = np.array([5, 7, 9])
        relabeled = spec.relabel(digits)
        assert relabeled.tolist() == [0, 2, 4]
        assert [spec.original_digit(v) for v in relabeled] == [5, 7, 9]
        assert spec.classes == 5
        assert spec.task == "mnist59"

    def test_validation(self):
        with pytest.raises(ValueError):
            DigitRangeSpec(5, 2)
        with pytest.raises(ValueError):
            DigitRangeSpec(0, 10)


class TestBuildSplit:
    def test_sizes_and_labels(self):
        images, labels = fake_mnist(600)
        ds = build_split(images, labels, DigitRangeSpec(0, 4), sizes=(100, 40, 40), seed=3)
        assert (len(ds.train), len(ds.valid), len(ds.test)) == (100, 40, 40)
        for _, part in ds.splits():
            assert part.labels.max() <= 4
        assert ds.task == "mnist04"

    def test_deterministic_assignment(self):
        images, labels = fake_mnist(600)
        a = build_split(images, labels, DigitRangeSpec(0, 4), sizes=(100, 40, 40), seed=3)
        b = build_split(images, labels, DigitRangeSpec(0, 4), sizes=(100, 40, 40), seed=3)
        assert a.train.images.tobytes() == b.train.images.tobytes()
        c = build_split(images, labels, DigitRangeSpec(0, 4), sizes=(100, 40, 40), seed=4)
        assert a.train.images.tobytes() != c.train.images.tobytes()

    def test_splits_disjoint_and_from_pool(self):
        images, labels = fake_mnist(600, seed=8)
        # tag each image with a unique id in its first pixels to track identity
        for i in range(len(images)):
            images[i, 0, 0] = i % 256
            images[i, 0, 1] = i // 256
        ds = build_split(images, labels, DigitRangeSpec(5, 9), sizes=(80, 30, 30), seed=5)
        ids = []
        for _, part in ds.splits():
            ids.extend((int(a) + 256 * int(b)) for a, b in part.images[:, 0, :2])
        assert len(ids) == len(set(ids))
        for i in ids:
            assert 5 <= labels[i] <= 9

    def test_insufficient_pool(self):
        images, labels = fake_mnist(100)
        with pytest.raises(ValueError, match="insufficient"):
            build_split(images, labels, DigitRangeSpec(0, 0), sizes=(100, 40, 40))

    def test_pixel_scaling(self):
        images = np.full((30, 28, 28), 255, dtype=np.uint8)
        labels = np.zeros(30, dtype=np.uint8)
        ds = build_split(images, labels, DigitRangeSpec(0, 0), sizes=(10, 10, 10))
        assert ds.train.x.max() == 1.0
        assert ds.train.x.min() == 1.0


@pytest.mark.skipif(
    locate_training_pair("data/mnist") is None,
    reason="official MNIST IDX files not available (set GRADTUNE_MNIST_DIR)",
)
class TestOfficialFiles:
    def test_training_file_counts(self):
        images_path, labels_path = locate_training_pair("data/mnist")
        images = read_idx_images(images_path)
        labels = read_idx_labels(labels_path)
        assert images.shape == (60_000, 28, 28)
        assert labels.shape == (60_000,)

    def test_mnist04_pool_size(self):
        _, labels_path = locate_training_pair("data/mnist")
        labels = read_idx_labels(labels_path)
        assert int(((labels >= 0) & (labels <= 4)).sum()) == 30_596
