#!/usr/bin/env python3
"""Convert the digit JSON files shipped with the `mnist` npm package into
gzip-compressed IDX files (train/test split), so the pipeline can be run
end-to-end without network access.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/make_proxy_dataset.py package/src/digits data/mnist-proxy
"""
import argparse
import gzip
import json
import random
import struct
from pathlib import Path


def write_idx_images(path, images, rows, cols):
    header = struct.pack(">IIII", 0x00000803, len(images), rows, cols)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header)
        for img in images:
            f.write(bytes(img))


def write_idx_labels(path, labels):
    header = struct.pack(">II", 0x00000801, len(labels))
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header)
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir", type=Path)
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--test-fraction", type=float, default=0.2)
    ap.add_argument("--seed", type=int, default=2025)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    train, test = [], []
    for digit in range(10):
        data = json.loads((args.digits_dir / f"{digit}.json").read_text())["data"]
        n = len(data) // 784
        items = []
        for i in range(n):
            px = data[i * 784:(i + 1) * 784]
            items.append(([min(255, max(0, round(v * 255))) for v in px], digit))
        rng.shuffle(items)
        n_test = round(n * args.test_fraction)
        test.extend(items[:n_test])
        train.extend(items[n_test:])
    rng.shuffle(train)
    rng.shuffle(test)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    for name, split in (("train", train), ("t10k", test)):
        write_idx_images(args.out_dir / f"{name}-images-idx3-ubyte.gz", [x for x, _ in split], 28, 28)
        write_idx_labels(args.out_dir / f"{name}-labels-idx1-ubyte.gz", [y for _, y in split])
        print(f"{name}: {len(split)} images")


if __name__ == "__main__":
    main()
