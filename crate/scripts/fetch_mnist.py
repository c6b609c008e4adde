#!/usr/bin/env python3
"""Build IDX files from the 10,000 MNIST digits bundled in the npm `mnist` package.

The package stores normalized pixels with three decimals; they are mapped back
to bytes with round(v * 255). Digits are shuffled with a fixed seed and split
into 9,000 training and 1,000 test images.

Usage: scripts/fetch_mnist.py [OUT_DIR]   (default: data/mnist)
"""
import json
import os
import random
import struct
import subprocess
import sys
import tarfile
import tempfile

TRAIN = 9000


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "data/mnist"
    os.makedirs(out, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=tmp, check=True,
                       stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
        with tarfile.open(os.path.join(tmp, "mnist-1.1.0.tgz")) as tar:
            tar.extractall(tmp)
        samples = []
        for digit in range(10):
            with open(os.path.join(tmp, "package", "src", "digits", f"{digit}.json")) as f:
                flat = json.load(f)["data"]
            for start in range(0, len(flat), 784):
                px = [min(255, max(0, round(v * 255))) for v in flat[start:start + 784]]
                samples.append((px, digit))
    random.Random(0).shuffle(samples)
    train, test = samples[:TRAIN], samples[TRAIN:]
    write_images(os.path.join(out, "train-images.idx3-ubyte"), [s[0] for s in train])
    write_labels(os.path.join(out, "train-labels.idx1-ubyte"), [s[1] for s in train])
    write_images(os.path.join(out, "test-images.idx3-ubyte"), [s[0] for s in test])
    write_labels(os.path.join(out, "test-labels.idx1-ubyte"), [s[1] for s in test])
    print(f"wrote {len(train)} train / {len(test)} test digits to {out}")


if __name__ == "__main__":
    main()
