"""Synthetic 28x28 digit corpus for tests: slanted strokes render "1"s, the
same strokes plus a top bar render "7"s.  Bar length distributions overlap,
so a small fraction of images is genuinely ambiguous and the two classes
nearly touch along that morph direction.  Images can be written as IDX files
to drive the binary loader end to end.
"""

import struct

import numpy as np

from boundarylab.datasets import LabeledDataset

SIZE = 28

_YY, _XX = np.mgrid[0:SIZE, 0:SIZE]
_PIX = np.column_stack([_XX.ravel(), _YY.ravel()]).astype(float)


def _segment_distance(p0, p1):
    """Distance of every pixel center to the segment p0-p1."""
    v = np.asarray(p1, dtype=float) - np.asarray(p0, dtype=float)
    L2 = float(v @ v)
    if L2 == 0.0:
        return np.linalg.norm(_PIX - p0, axis=1)
    t = np.clip((_PIX - p0) @ v / L2, 0.0, 1.0)
    proj = p0 + t[:, None] * v
    return np.linalg.norm(_PIX - proj, axis=1)


def render_digit(kind: int, rng: np.random.Generator) -> np.ndarray:
    """One flattened [0,1] image; kind 0 draws a '1', kind 1 draws a '7'."""
    cx = rng.uniform(11.0, 17.0)
    slant = rng.normal(2.0, 1.5)
    y0, y1 = 5.0, 23.0
    thick = rng.uniform(0.8, 1.5)
    contrast = rng.uniform(0.85, 1.0)
    top = np.array([cx + slant / 2.0, y0])
    bottom = np.array([cx - slant / 2.0, y1])
    segments = [(top, bottom)]
    if kind == 0:
        bar = min(abs(rng.normal(0.0, 1.0)), 3.0)
    else:
        bar = float(np.clip(rng.normal(6.5, 2.0), 0.0, 10.0))
    if bar > 0.05:
        segments.append((np.array([top[0] - bar, y0]), top))
    img = np.zeros(SIZE * SIZE)
    for p0, p1 in segments:
        d = _segment_distance(p0, p1)
        img = np.maximum(img, np.exp(-2.0 * (d / thick) ** 2))
    img = contrast * img + rng.normal(0.0, 0.04, img.shape)
    return np.clip(img, 0.0, 1.0)


def make_digit_images(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """n images, alternating classes, with raw digit labels 1 and 7."""
    rng = np.random.default_rng(seed)
    X = np.empty((n, SIZE * SIZE))
    digits = np.empty(n, dtype=np.int64)
    for i in range(n):
        kind = i % 2
        X[i] = render_digit(kind, rng)
        digits[i] = 1 if kind == 0 else 7
    return X, digits


def make_digit_corpus(n_train=1000, n_test=500, n_pool=1500, seed=0):
    """(train, test, pool) LabeledDatasets with binary labels 1->0, 7->1."""
    total = n_train + n_test + n_pool
    X, digits = make_digit_images(total, seed)
    y = (digits == 7).astype(np.int64)
    train = LabeledDataset(X[:n_train], y[:n_train], role="train", name="digits1v7")
    test = LabeledDataset(
        X[n_train : n_train + n_test], y[n_train : n_train + n_test],
        role="test", name="digits1v7",
    )
    pool = LabeledDataset(X[n_train + n_test :], y[n_train + n_test :],
                          role="adversary", name="digits1v7")
    return train, test, pool


def write_idx_files(dirpath, X: np.ndarray, digits: np.ndarray, prefix: str):
    """Write images/labels in the big-endian IDX format the loader expects."""
    images = np.clip(np.round(X * 255.0), 0, 255).astype(np.uint8)
    img_path = dirpath / f"{prefix}-images-idx3-ubyte"
    lab_path = dirpath / f"{prefix}-labels-idx1-ubyte"
    with open(img_path, "wb") as fh:
        fh.write(struct.pack(">iiii", 0x803, len(images), SIZE, SIZE))
        fh.write(images.reshape(len(images), SIZE, SIZE).tobytes())
    with open(lab_path, "wb") as fh:
        fh.write(struct.pack(">ii", 0x801, len(digits)))
        fh.write(digits.astype(np.uint8).tobytes())
    return img_path, lab_path
