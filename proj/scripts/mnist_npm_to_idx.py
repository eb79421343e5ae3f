#!/usr/bin/env python3
"""Convert the `mnist` npm package's bundled digits into IDX files.

The package (https://www.npmjs.com/package/mnist) ships 10,000 real MNIST
images as per-digit JSON arrays of [0,1] grayscale values. This script
deterministically shuffles them, splits into train/test and writes the four
standard IDX files (big-endian headers, uint8 pixels).

Usage:
  npm pack mnist && tar xzf mnist-*.tgz
  python3 scripts/mnist_npm_to_idx.py --digits package/src/digits --out data/mnist
"""

import argparse
import json
import random
import struct
from pathlib import Path


def write_idx(images, labels, images_path: Path, labels_path: Path) -> None:
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", 2051, len(images), 28, 28))
        for img in images:
            f.write(bytes(round(p * 255) for p in img))
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", 2049, len(labels)))
        f.write(bytes(labels))


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--digits", required=True, help="package/src/digits directory")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--train", type=int, default=8000)
    ap.add_argument("--test", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=1234)
    args = ap.parse_args()

    samples = []
    for digit in range(10):
        flat = json.loads((Path(args.digits) / f"{digit}.json").read_text())["data"]
        assert len(flat) % 784 == 0
        for i in range(len(flat) // 784):
            samples.append((flat[i * 784 : (i + 1) * 784], digit))
    print(f"loaded {len(samples)} images")
    assert len(samples) >= args.train + args.test

    rng = random.Random(args.seed)
    rng.shuffle(samples)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train = samples[: args.train]
    test = samples[args.train : args.train + args.test]
    write_idx([s[0] for s in train], [s[1] for s in train],
              out / "train-images-idx3-ubyte", out / "train-labels-idx1-ubyte")
    write_idx([s[0] for s in test], [s[1] for s in test],
              out / "t10k-images-idx3-ubyte", out / "t10k-labels-idx1-ubyte")
    print(f"wrote {len(train)} train / {len(test)} test samples to {out}")


if __name__ == "__main__":
    main()
