"""Dataset generation and ingestion: synthetic generators, CSV, and IDX files."""

import csv
import struct

import numpy as np

__all__ = [
    "DatasetError",
    "make_blobs",
    "make_moons",
    "load_csv",
    "load_idx_images",
    "load_idx_labels",
    "load_idx_pair",
    "train_test_split",
    "subsample",
]

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801


class DatasetError(ValueError):
    pass


def make_blobs(n, d, rng, separation=2.0, spread=1.0, balance=0.5):
    """Two Gaussian blobs at +-(separation/2) along the diagonal direction.

    Class counts are exact: round(n*balance) points get label 1. The rows
    come back shuffled.
    """
    if n < 2 or d < 1:
        raise DatasetError("need n >= 2 and d >= 1")
    n1 = int(round(n * balance))
    n0 = n - n1
    direction = np.ones(d) / np.sqrt(d)
    center = 0.5 * separation * direction
    x0 = -center + spread * rng.standard_normal((n0, d))
    x1 = center + spread * rng.standard_normal((n1, d))
    x = np.vstack([x0, x1])
    y = np.concatenate([np.zeros(n0, dtype=int), np.ones(n1, dtype=int)])
    order = rng.permutation(n)
    return x[order], y[order]


def make_moons(n, rng, noise=0.1):
    """Classic interleaved half-circles in 2-D, n//2 points per class."""
    n1 = n // 2
    n0 = n - n1
    t0 = np.pi * rng.random(n0)
    t1 = np.pi * rng.random(n1)
    x0 = np.column_stack([np.cos(t0), np.sin(t0)])
    x1 = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    x = np.vstack([x0, x1]) + noise * rng.standard_normal((n, 2))
    y = np.concatenate([np.zeros(n0, dtype=int), np.ones(n1, dtype=int)])
    order = rng.permutation(n)
    return x[order], y[order]


def load_csv(path, label_column="label"):
    """Numeric feature matrix plus integer labels from a headered CSV."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        if label_column not in header:
            raise DatasetError(f"{path}: no column named {label_column!r}")
        label_idx = header.index(label_column)
        xs, ys = [], []
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DatasetError(
                    f"{path}: row {row_no} has {len(row)} fields, expected {len(header)}")
            try:
                ys.append(int(float(row[label_idx])))
                xs.append([float(v) for i, v in enumerate(row) if i != label_idx])
            except ValueError as exc:
                raise DatasetError(f"{path}: row {row_no}: {exc}") from None
    if not xs:
        raise DatasetError(f"{path}: no data rows")
    return np.asarray(xs, dtype=float), np.asarray(ys, dtype=int)


def _read_exact(fh, count, path, what):
    data = fh.read(count)
    if len(data) != count:
        raise DatasetError(
            f"{path}: truncated {what} at byte offset {fh.tell() - len(data)}"
            f" (wanted {count} bytes, got {len(data)})")
    return data


def load_idx_images(path, limit=None):
    """(n, rows*cols) float matrix scaled to [0, 1] from an IDX image file."""
    with open(path, "rb") as fh:
        magic, n, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, path, "header"))
        if magic != IDX_MAGIC_IMAGES:
            raise DatasetError(f"{path}: bad image magic 0x{magic:08x} at byte offset 0")
        if limit is not None:
            n = min(n, limit)
        raw = _read_exact(fh, n * rows * cols, path, "pixel data")
    pixels = np.frombuffer(raw, dtype=np.uint8).astype(float) / 255.0
    return pixels.reshape(n, rows * cols)


def load_idx_labels(path, limit=None):
    with open(path, "rb") as fh:
        magic, n = struct.unpack(">II", _read_exact(fh, 8, path, "header"))
        if magic != IDX_MAGIC_LABELS:
            raise DatasetError(f"{path}: bad label magic 0x{magic:08x} at byte offset 0")
        if limit is not None:
            n = min(n, limit)
        raw = _read_exact(fh, n, path, "label data")
    return np.frombuffer(raw, dtype=np.uint8).astype(int)


def load_idx_pair(images_path, labels_path, limit=None):
    x = load_idx_images(images_path, limit=limit)
    y = load_idx_labels(labels_path, limit=limit)
    if x.shape[0] != y.shape[0]:
        raise DatasetError(
            f"image/label count mismatch: {x.shape[0]} images vs {y.shape[0]} labels")
    return x, y


def train_test_split(x, y, test_fraction, rng):
    """Shuffled split; the first ceil(n*test_fraction) rows become the test set."""
    n = len(y)
    n_test = int(np.ceil(n * test_fraction))
    order = rng.permutation(n)
    test_idx, train_idx = order[:n_test], order[n_test:]
    return (x[train_idx], y[train_idx]), (x[test_idx], y[test_idx])


def subsample(x, y, n, rng, stratified=True):
    """Take n rows at random, optionally class-balanced."""
    total = len(y)
    if n >= total:
        return x, y
    if not stratified:
        idx = rng.permutation(total)[:n]
        return x[np.sort(idx)], y[np.sort(idx)]
    picks = []
    classes = np.unique(y)
    per = n // len(classes)
    for c in classes:
        pool = np.flatnonzero(y == c)
        picks.append(pool[rng.permutation(pool.size)[:per]])
    idx = np.sort(np.concatenate(picks))
    return x[idx], y[idx]
