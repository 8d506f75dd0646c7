#!/usr/bin/env python3
# Copyright 2026 The hetfl Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Builds the gzipped IDX MNIST subset under data/mnist_subset/.

The source is the 5000-sample MNIST CSV shipped inside the mlxtend wheel
(mlxtend/data/data/mnist_5k.csv.gz). Obtain it with

    pip download --no-deps -d /tmp/wheels mlxtend

and pass the wheel (or the extracted csv.gz) as the first argument.
"""

import argparse
import gzip
import io
import pathlib
import random
import struct
import zipfile

CSV_MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_rows(source: pathlib.Path):
    if source.suffix == ".whl":
        with zipfile.ZipFile(source) as wheel:
            raw = wheel.read(CSV_MEMBER)
    else:
        raw = source.read_bytes()
    text = gzip.decompress(raw).decode()
    rows = []
    for line in text.splitlines():
        fields = line.split(",")
        pixels = bytes(int(float(v)) for v in fields[:-1])
        rows.append((pixels, int(float(fields[-1]))))
    return rows


def write_idx(path: pathlib.Path, rows, side: int):
    images = struct.pack(">IIII", 0x00000803, len(rows), side, side)
    images += b"".join(p for p, _ in rows)
    labels = struct.pack(">II", 0x00000801, len(rows))
    labels += bytes(label for _, label in rows)
    # mtime=0 keeps the archives byte-stable across regenerations.
    for suffix, payload in (("images-idx3-ubyte.gz", images),
                            ("labels-idx1-ubyte.gz", labels)):
        with open(f"{path}-{suffix}", "wb") as out:
            with gzip.GzipFile(fileobj=out, mode="wb", mtime=0) as gz:
                gz.write(payload)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("source", type=pathlib.Path)
    parser.add_argument("--out", type=pathlib.Path,
                        default=pathlib.Path("data/mnist_subset"))
    parser.add_argument("--train", type=int, default=2000)
    parser.add_argument("--test", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rows = read_rows(args.source)
    assert all(len(p) == 784 for p, _ in rows)
    random.Random(args.seed).shuffle(rows)
    if args.train + args.test > len(rows):
        raise SystemExit("subset larger than the source")
    args.out.mkdir(parents=True, exist_ok=True)
    write_idx(args.out / "train", rows[:args.train], 28)
    write_idx(args.out / "test", rows[args.train:args.train + args.test], 28)


if __name__ == "__main__":
    main()
