#!/usr/bin/env python3
"""Build the 8,000-train / 2,000-test Fashion-MNIST subset as IDX files.

Source: the `fashion-mnist` npm package, which ships the 70,000 images as
per-class JSON arrays of 784 pixel bytes.

    npm pack fashion-mnist && tar xzf fashion-mnist-*.tgz
    python3 scripts/make_fmnist_subset.py package/src/clothes data/fmnist-subset
"""
import json
import random
import struct
import sys
from pathlib import Path

TRAIN_PER_CLASS = 800
TEST_PER_CLASS = 200
SEED = 20240101


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 2051, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 2049, len(labels)))
        f.write(bytes(labels))


def main():
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    dst.mkdir(parents=True, exist_ok=True)
    rng = random.Random(SEED)
    train, test = [], []
    for c in range(10):
        data = json.loads((src / f"{c}.json").read_text())["data"]
        idx = list(range(len(data)))
        rng.shuffle(idx)
        train += [(data[i], c) for i in idx[:TRAIN_PER_CLASS]]
        test += [(data[i], c) for i in idx[TRAIN_PER_CLASS:TRAIN_PER_CLASS + TEST_PER_CLASS]]
    rng.shuffle(train)
    rng.shuffle(test)
    for name, rows in (("train", train), ("t10k", test)):
        write_images(dst / f"{name}-images-idx3-ubyte", [r[0] for r in rows])
        write_labels(dst / f"{name}-labels-idx1-ubyte", [r[1] for r in rows])


if __name__ == "__main__":
    main()
