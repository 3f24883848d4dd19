#!/usr/bin/env python3
"""Build the IDX digit corpus under data/digits.

Upscales the bundled scikit-learn handwritten digits (8x8) to 28x28, augments
each base image with deterministic pixel shifts and noise, and writes
MNIST-layout IDX files (big-endian magic 2051/2049). Train and test pools use
disjoint base images so augmented copies never leak across the split.

The generated files are checked in; rerun only to regenerate them:
    python3 tools/make_digits_idx.py
"""

import struct
import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits

SEED = 20240817
TRAIN_N = 1500
TEST_N = 1500
SIZE = 28


def upscale(img8: np.ndarray) -> np.ndarray:
    # 8x8 -> 24x24 by pixel tripling, then pad to 28x28
    big = np.kron(img8, np.ones((3, 3)))
    out = np.zeros((SIZE, SIZE))
    out[2:26, 2:26] = big
    return out


def augment(base: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    dx, dy = rng.integers(-2, 3, size=2)
    img = np.roll(np.roll(base, dx, axis=0), dy, axis=1)
    img = img + rng.normal(0.0, 6.0, size=img.shape)
    return np.clip(img, 0.0, 255.0)


def write_idx(images: np.ndarray, labels: np.ndarray, img_path: Path, lab_path: Path) -> None:
    count = images.shape[0]
    with open(img_path, "wb") as f:
        f.write(struct.pack(">IIII", 2051, count, SIZE, SIZE))
        f.write(images.astype(np.uint8).tobytes())
    with open(lab_path, "wb") as f:
        f.write(struct.pack(">II", 2049, count))
        f.write(labels.astype(np.uint8).tobytes())


def build_pool(bases: list[tuple[np.ndarray, int]], n: int, rng: np.random.Generator):
    images = np.zeros((n, SIZE, SIZE))
    labels = np.zeros(n, dtype=np.uint8)
    for i in range(n):
        base, digit = bases[rng.integers(0, len(bases))]
        images[i] = augment(base, rng)
        labels[i] = digit
    return images, labels


def main() -> int:
    rng = np.random.default_rng(SEED)
    digits = load_digits()
    keep = np.isin(digits.target, (3, 5))
    raw = digits.images[keep] * (255.0 / 16.0)
    targets = digits.target[keep]

    bases = [(upscale(raw[i]), int(targets[i])) for i in range(raw.shape[0])]
    order = rng.permutation(len(bases))
    split = int(0.6 * len(bases))
    train_bases = [bases[i] for i in order[:split]]
    test_bases = [bases[i] for i in order[split:]]

    out_dir = Path(__file__).resolve().parent.parent / "data" / "digits"
    out_dir.mkdir(parents=True, exist_ok=True)

    train_images, train_labels = build_pool(train_bases, TRAIN_N, rng)
    test_images, test_labels = build_pool(test_bases, TEST_N, rng)
    write_idx(train_images.reshape(TRAIN_N, -1), train_labels,
              out_dir / "train-images.idx", out_dir / "train-labels.idx")
    write_idx(test_images.reshape(TEST_N, -1), test_labels,
              out_dir / "test-images.idx", out_dir / "test-labels.idx")
    print(f"wrote {TRAIN_N}+{TEST_N} samples to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
