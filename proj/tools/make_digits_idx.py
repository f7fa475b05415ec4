#!/usr/bin/env python3
"""Build MNIST-format IDX files from scikit-learn's bundled handwritten digits.

For machines without the real MNIST files (or network access), this converts
the 1797 8x8 handwritten digits that ship inside scikit-learn into the exact
IDX container the pipeline ingests: each digit is bilinearly upsampled to the
MNIST geometry (a 20x20 glyph centered in a 28x28 frame) and written as
train-images-idx3-ubyte / train-labels-idx1-ubyte plus the t10k pair.

Usage: make_digits_idx.py OUT_DIR [--test-fraction 0.17]
"""

import argparse
import os
import struct

import numpy as np
from sklearn.datasets import load_digits


def upsample_to_mnist(img8: np.ndarray) -> np.ndarray:
    """8x8 in [0,16] -> 28x28 bytes with a 20x20 glyph and 4 px margins."""
    src = img8 / 16.0
    glyph = 20
    out = np.zeros((glyph, glyph), dtype=np.float64)
    scale = 8.0 / glyph
    for y in range(glyph):
        for x in range(glyph):
            sy = (y + 0.5) * scale - 0.5
            sx = (x + 0.5) * scale - 0.5
            iy, ix = int(np.floor(sy)), int(np.floor(sx))
            fy, fx = sy - iy, sx - ix
            acc = 0.0
            for dy in (0, 1):
                for dx in (0, 1):
                    yy, xx = iy + dy, ix + dx
                    if 0 <= yy < 8 and 0 <= xx < 8:
                        w = (fy if dy else 1 - fy) * (fx if dx else 1 - fx)
                        acc += w * src[yy, xx]
            out[y, x] = acc
    frame = np.zeros((28, 28), dtype=np.float64)
    frame[4:24, 4:24] = out
    return np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)


def write_idx_images(path: str, images: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 2051, images.shape[0], 28, 28))
        f.write(images.tobytes())


def write_idx_labels(path: str, labels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 2049, labels.shape[0]))
        f.write(labels.astype(np.uint8).tobytes())


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out_dir")
    ap.add_argument("--test-fraction", type=float, default=0.17)
    args = ap.parse_args()

    data = load_digits()
    images = np.stack([upsample_to_mnist(img) for img in data.images])
    labels = data.target.astype(np.uint8)

    # Deterministic interleaved split so both halves cover all writers/classes.
    n = images.shape[0]
    stride = max(2, int(round(1.0 / args.test_fraction)))
    test_mask = (np.arange(n) % stride) == 0

    os.makedirs(args.out_dir, exist_ok=True)
    write_idx_images(os.path.join(args.out_dir, "train-images-idx3-ubyte"), images[~test_mask])
    write_idx_labels(os.path.join(args.out_dir, "train-labels-idx1-ubyte"), labels[~test_mask])
    write_idx_images(os.path.join(args.out_dir, "t10k-images-idx3-ubyte"), images[test_mask])
    write_idx_labels(os.path.join(args.out_dir, "t10k-labels-idx1-ubyte"), labels[test_mask])
    print(f"wrote {int((~test_mask).sum())} train / {int(test_mask.sum())} test digits "
          f"to {args.out_dir}")


if __name__ == "__main__":
    main()
