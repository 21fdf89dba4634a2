#!/usr/bin/env python3
"""Builds the bundled handwritten-digits IDX fixture.

Takes scikit-learn's packaged 8x8 digits corpus (1797 samples of real
handwriting from the UCI optical-digits collection), upsamples each image
bilinearly to 28x28, and writes IDX files with the standard big-endian
layout (magic 2051/2049). The result ships in data/ so the test suite and
the CLI run without any downloads; point MNIST_DIR at genuine MNIST files
to run the same experiments at full scale.
"""
import struct
import sys

import numpy as np
from sklearn.datasets import load_digits


def upsample(img8: np.ndarray) -> np.ndarray:
    # Bilinear 8x8 -> 28x28.
    src = img8 / 16.0  # load_digits pixels are 0..16
    ys = np.linspace(0, 7, 28)
    xs = np.linspace(0, 7, 28)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, 7)
    x1 = np.minimum(x0 + 1, 7)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    a = src[np.ix_(y0, x0)]
    b = src[np.ix_(y0, x1)]
    c = src[np.ix_(y1, x0)]
    d = src[np.ix_(y1, x1)]
    out = a * (1 - wy) * (1 - wx) + b * (1 - wy) * wx + c * wy * (1 - wx) + d * wy * wx
    return np.clip(out * 255.0, 0, 255).astype(np.uint8)


def write_idx(images: np.ndarray, labels: np.ndarray, img_path: str, lab_path: str) -> None:
    n, rows, cols = images.shape
    with open(img_path, "wb") as f:
        f.write(struct.pack(">IIII", 2051, n, rows, cols))
        f.write(images.tobytes())
    with open(lab_path, "wb") as f:
        f.write(struct.pack(">II", 2049, n))
        f.write(labels.astype(np.uint8).tobytes())


def main(out_dir: str) -> None:
    digits = load_digits()
    rng = np.random.RandomState(12345)
    order = rng.permutation(len(digits.images))
    images = np.stack([upsample(digits.images[i]) for i in order])
    labels = digits.target[order]

    split = 1437  # 80/20
    write_idx(images[:split], labels[:split],
              f"{out_dir}/digits-train-images.idx3-ubyte",
              f"{out_dir}/digits-train-labels.idx1-ubyte")
    write_idx(images[split:], labels[split:],
              f"{out_dir}/digits-test-images.idx3-ubyte",
              f"{out_dir}/digits-test-labels.idx1-ubyte")
    print(f"wrote {split} train / {len(images) - split} test images to {out_dir}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data")
