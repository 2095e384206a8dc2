#!/usr/bin/env python3
"""Build a 28x28 digit dataset in (gzipped) IDX format.

Upsamples the 8x8 scikit-learn digits to 28x28 and grows the two splits with
seeded shift/intensity augmentation. Fully deterministic for a given seed,
including the gzip bytes.
"""

import argparse
import gzip
import struct
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits


def write_idx(path, magic, dims, payload):
    raw = struct.pack(">I" + "I" * len(dims), magic, *dims) + payload
    with open(path, "wb") as f:
        with gzip.GzipFile(fileobj=f, mode="wb", compresslevel=6, mtime=0) as gz:
            gz.write(raw)


def upsample(images8):
    # 8x8 -> 24x24 by pixel tripling, then a 2px border to reach 28x28
    big = np.kron(images8, np.ones((1, 3, 3)))
    out = np.zeros((big.shape[0], 28, 28))
    out[:, 2:26, 2:26] = big
    return out * (255.0 / 16.0)


def augment(rng, images, labels, n):
    idx = rng.integers(0, images.shape[0], size=n)
    dx = rng.integers(-2, 3, size=n)
    dy = rng.integers(-2, 3, size=n)
    gain = rng.uniform(0.85, 1.1, size=n)
    canvas = np.zeros((n, 32, 32))
    canvas[:, 2:30, 2:30] = images[idx]
    out = np.empty((n, 28, 28))
    for i in range(n):
        out[i] = canvas[i, 2 + dy[i] : 30 + dy[i], 2 + dx[i] : 30 + dx[i]] * gain[i]
    # steep ramp around mid-gray: near-binary intensities, like mnist strokes
    out = (out - 127.5) * 4.0 + 127.5
    return np.clip(out, 0.0, 255.0), labels[idx]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data/digits", help="output directory")
    ap.add_argument("--train-n", type=int, default=10000)
    ap.add_argument("--test-n", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    digits = load_digits()
    images = upsample(digits.images)
    labels = digits.target.astype(np.uint8)

    order = rng.permutation(images.shape[0])
    cut = int(images.shape[0] * 5 / 6)
    train_x, train_y = augment(rng, images[order[:cut]], labels[order[:cut]], args.train_n)
    test_x, test_y = augment(rng, images[order[cut:]], labels[order[cut:]], args.test_n)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for stem, x, y in [("train", train_x, train_y), ("t10k", test_x, test_y)]:
        xb = np.rint(x).astype(np.uint8)
        write_idx(out / f"{stem}-images-idx3-ubyte.gz", 0x803, xb.shape, xb.tobytes())
        write_idx(out / f"{stem}-labels-idx1-ubyte.gz", 0x801, (len(y),), y.tobytes())
        print(f"{stem}: {xb.shape[0]} examples -> {out}/{stem}-*.gz")


if __name__ == "__main__":
    main()
