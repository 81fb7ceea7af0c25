"""Rebuild the bundled IDX files from the `mnist` npm package (v1.1.0, MIT).

The package ships 10,000 MNIST digits as JSON, one file per class, with
pixels stored as value/255 rounded to three decimals. This script restores
the 8-bit pixels, interleaves the classes round-robin and writes gzipped
IDX files in the original MNIST layout.

usage: python3 convert.py <path-to-package/src/digits>
"""
import gzip
import json
import os
import struct
import sys


def main(src):
    per_class = []
    for d in range(10):
        with open(os.path.join(src, f"{d}.json")) as f:
            flat = json.load(f)["data"]
        assert len(flat) % 784 == 0
        per_class.append([flat[i:i + 784] for i in range(0, len(flat), 784)])
    images, labels = [], []
    depth = max(len(c) for c in per_class)
    for i in range(depth):
        for d in range(10):
            if i < len(per_class[d]):
                images.append(per_class[d][i])
                labels.append(d)
    n = len(images)
    here = os.path.dirname(os.path.abspath(__file__))
    with gzip.GzipFile(os.path.join(here, "images-idx3-ubyte.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(bytes(min(255, max(0, round(v * 255))) for img in images for v in img))
    with gzip.GzipFile(os.path.join(here, "labels-idx1-ubyte.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(bytes(labels))
    print(n, "examples")


if __name__ == "__main__":
    main(sys.argv[1])
