#!/usr/bin/env python3
"""Dump a HyperGCN-style pickled dataset directory to the JSON read by
`herald convert-dataset --format hypergcn-json`.

Expected layout (as in the HyperGCN release, e.g. data/coauthorship/cora):
    features.pickle    scipy sparse or dense (n, d) matrix
    labels.pickle      list of n integer labels (or one-hot rows)
    hypergraph.pickle  dict {hyperedge key: [node ids]}
    splits/<k>.pickle  optional dict {"train": [...], "test": [...]}
"""

import argparse
import json
import pickle
import sys
from pathlib import Path

import numpy as np


def load(path):
    with open(path, "rb") as f:
        return pickle.load(f)


def dense(features):
    if hasattr(features, "toarray"):
        features = features.toarray()
    return np.asarray(features, dtype=np.float64)


def labels_of(raw):
    arr = np.asarray(raw)
    if arr.ndim == 2:
        arr = arr.argmax(axis=1)
    return [int(v) for v in arr]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("directory", type=Path)
    p.add_argument("output", type=Path)
    p.add_argument("--split", type=int, default=1, help="splits/<k>.pickle to embed (0 to skip)")
    args = p.parse_args(argv)

    d = args.directory
    x = dense(load(d / "features.pickle"))
    doc = {
        "features": x.tolist(),
        "labels": labels_of(load(d / "labels.pickle")),
        "hypergraph": {str(k): sorted(int(v) for v in members) for k, members in load(d / "hypergraph.pickle").items()},
    }
    split = d / "splits" / f"{args.split}.pickle"
    if args.split > 0 and split.exists():
        s = load(split)
        doc["splits"] = {"train": [int(v) for v in s["train"]], "test": [int(v) for v in s["test"]]}

    if len(doc["labels"]) != x.shape[0]:
        sys.exit(f"{d}: {x.shape[0]} feature rows but {len(doc['labels'])} labels")
    args.output.write_text(json.dumps(doc))
    print(f"{args.output}: {x.shape[0]} nodes, {x.shape[1]} features, {len(doc['hypergraph'])} hyperedges")


if __name__ == "__main__":
    main()
