import struct

import numpy as np
import pytest

from respriv.datasets import (DatasetError, load_csv, load_idx_images, load_idx_labels,
                              load_idx_pair, make_blobs, make_moons, subsample,
                              train_test_split)


class TestSynthetic:
    def test_blobs_exact_counts(self):
        x, y = make_blobs(200, 2, np.random.default_rng(7))
        assert x.shape == (200, 2)
        assert (y == 0).sum() == 100 and (y == 1).sum() == 100

    def test_blobs_deterministic(self):
        a = make_blobs(50, 3, np.random.default_rng(1))
        b = make_blobs(50, 3, np.random.default_rng(1))
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_blobs_balance(self):
        _, y = make_blobs(100, 2, np.random.default_rng(2), balance=0.3)
        assert (y == 1).sum() == 30

    def test_blobs_separation_moves_centers(self):
        x, y = make_blobs(4000, 2, np.random.default_rng(3), separation=8.0, spread=0.5)
        centers = [x[y == c].mean(axis=0) for c in (0, 1)]
        assert np.linalg.norm(centers[1] - centers[0]) == pytest.approx(8.0, rel=0.1)

    def test_moons_shape(self):
        x, y = make_moons(101, np.random.default_rng(4))
        assert x.shape == (101, 2)
        assert {0, 1} == set(np.unique(y))


class TestCsv:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("a,b,label\n1.5,2.5,0\n-1.0,0.25,1\n")
        x, y = load_csv(path)
        np.testing.assert_array_equal(x, [[1.5, 2.5], [-1.0, 0.25]])
        np.testing.assert_array_equal(y, [0, 1])

    def test_mismatched_row_cites_row_number(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,label\n1,2,0\n3,4\n")
        with pytest.raises(DatasetError, match="row 3"):
            load_csv(path)

    def test_missing_label_column(self, tmp_path):
        path = tmp_path / "nolabel.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(DatasetError, match="label"):
            load_csv(path)

    def test_non_numeric_cites_row(self, tmp_path):
        path = tmp_path / "text.csv"
        path.write_text("a,label\n1,0\nfoo,1\n")
        with pytest.raises(DatasetError, match="row 3"):
            load_csv(path)


def build_idx_fixture(tmp_path, n=10, rows=28, cols=28):
    """Hand-built IDX image/label pair."""
    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 256, size=(n, rows, cols), dtype=np.uint8)
    labels = rng.integers(0, 10, size=n, dtype=np.uint8)
    img_path = tmp_path / "images.idx"
    lbl_path = tmp_path / "labels.idx"
    img_path.write_bytes(struct.pack(">IIII", 0x00000803, n, rows, cols) + pixels.tobytes())
    lbl_path.write_bytes(struct.pack(">II", 0x00000801, n) + labels.tobytes())
    return img_path, lbl_path, pixels, labels


class TestIdx:
    def test_fixture_round_trip(self, tmp_path):
        img_path, lbl_path, pixels, labels = build_idx_fixture(tmp_path)
        x, y = load_idx_pair(img_path, lbl_path)
        assert x.shape == (10, 784)
        assert x.min() >= 0.0 and x.max() <= 1.0
        np.testing.assert_allclose(x, pixels.reshape(10, 784) / 255.0)
        np.testing.assert_array_equal(y, labels)

    def test_bad_magic_reports_offset(self, tmp_path):
        path = tmp_path / "bad.idx"
        path.write_bytes(struct.pack(">IIII", 0xDEADBEEF, 1, 2, 2) + b"\x00" * 4)
        with pytest.raises(DatasetError, match="byte offset 0"):
            load_idx_images(path)

    def test_truncated_pixels_reports_offset(self, tmp_path):
        path = tmp_path / "short.idx"
        path.write_bytes(struct.pack(">IIII", 0x00000803, 2, 4, 4) + b"\x00" * 10)
        with pytest.raises(DatasetError, match="byte offset"):
            load_idx_images(path)

    def test_count_mismatch(self, tmp_path):
        img_path, _, _, _ = build_idx_fixture(tmp_path, n=10)
        lbl_path = tmp_path / "short_labels.idx"
        lbl_path.write_bytes(struct.pack(">II", 0x00000801, 4) + b"\x01" * 4)
        with pytest.raises(DatasetError, match="mismatch"):
            load_idx_pair(img_path, lbl_path)

    def test_limit(self, tmp_path):
        img_path, lbl_path, _, _ = build_idx_fixture(tmp_path, n=10)
        x, y = load_idx_pair(img_path, lbl_path, limit=4)
        assert x.shape[0] == 4 and y.shape[0] == 4


class TestSplits:
    def test_train_test_split_sizes(self):
        x = np.arange(40).reshape(20, 2).astype(float)
        y = np.arange(20) % 2
        (xtr, ytr), (xte, yte) = train_test_split(x, y, 0.25, np.random.default_rng(0))
        assert len(yte) == 5 and len(ytr) == 15
        assert len(np.intersect1d(xtr[:, 0], xte[:, 0])) == 0

    def test_subsample_stratified(self):
        x = np.arange(100).reshape(100, 1).astype(float)
        y = np.array([0] * 50 + [1] * 50)
        xs, ys = subsample(x, y, 20, np.random.default_rng(1))
        assert len(ys) == 20 and (ys == 0).sum() == 10
