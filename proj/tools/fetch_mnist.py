#!/usr/bin/env python3
"""Write a small MNIST subset as IDX files.

The 5000-digit sample (500 per class) shipped inside the mlxtend wheel is
split per class into 400 train / 100 test images and written in the standard
IDX layout, so the C++ loader reads it like the full MNIST distribution.

    python3 tools/fetch_mnist.py [--wheel path/to/mlxtend.whl] [--out data/mnist]
"""
import argparse
import glob
import gzip
import os
import struct
import subprocess
import tempfile
import zipfile

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def find_wheel(explicit):
    if explicit:
        return explicit
    tmp = tempfile.mkdtemp()
    subprocess.run(["pip", "download", "--no-deps", "-d", tmp, "mlxtend"], check=True)
    return glob.glob(os.path.join(tmp, "mlxtend-*.whl"))[0]


def write_idx(prefix, rows, labels):
    with open(prefix + "-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(rows), 28, 28))
        for r in rows:
            f.write(bytes(r))
    with open(prefix + "-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--wheel")
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "mnist"))
    ap.add_argument("--test-per-class", type=int, default=100)
    args = ap.parse_args()

    text = gzip.decompress(zipfile.ZipFile(find_wheel(args.wheel)).read(MEMBER)).decode()
    by_class = {c: [] for c in range(10)}
    for line in text.splitlines():
        vals = [int(float(v)) for v in line.split(",")]
        by_class[vals[-1]].append(vals[:-1])

    train, test = ([], []), ([], [])
    for c in range(10):
        rows = by_class[c]
        cut = len(rows) - args.test_per_class
        for i, r in enumerate(rows):
            dst = train if i < cut else test
            dst[0].append(r)
            dst[1].append(c)

    os.makedirs(args.out, exist_ok=True)
    write_idx(os.path.join(args.out, "train"), *train)
    write_idx(os.path.join(args.out, "test"), *test)
    print(f"train {len(train[1])}  test {len(test[1])}  -> {args.out}")


if __name__ == "__main__":
    main()
