#!/usr/bin/env python3
"""Convert the digits bundled with the npm `mnist` package into gzipped IDX files.

The package ships 10,000 MNIST digits as JSON arrays of grey levels in [0,1]
(three decimals), grouped by digit. This script restores byte intensities,
interleaves the digits with a fixed permutation and writes the standard IDX
layout (magic 2051 / 2049, big-endian counts).

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/make_mnist_idx.py package/src/digits data/mnist
"""
import argparse
import gzip
import json
import pathlib
import random
import struct


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir", type=pathlib.Path)
    ap.add_argument("out_dir", type=pathlib.Path)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    samples = []
    for digit in range(10):
        values = json.loads((args.digits_dir / f"{digit}.json").read_text())["data"]
        assert len(values) % 784 == 0
        for i in range(len(values) // 784):
            pixels = bytes(min(255, max(0, round(v * 255))) for v in values[i * 784:(i + 1) * 784])
            samples.append((pixels, digit))

    random.Random(args.seed).shuffle(samples)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    with gzip.GzipFile(args.out_dir / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 2051, len(samples), 28, 28))
        for pixels, _ in samples:
            f.write(pixels)
    with gzip.GzipFile(args.out_dir / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 2049, len(samples)))
        f.write(bytes(label for _, label in samples))
    print(f"wrote {len(samples)} examples to {args.out_dir}")


if __name__ == "__main__":
    main()
