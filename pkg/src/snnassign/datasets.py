"""Flat CSV serialization for matrix datasets.

One row per matrix entry (instanceId, i, j, value) plus a JSON sidecar at
`<path>.meta.json` carrying shapes, seeds and unit metadata.
"""

import csv
import json

import numpy as np

_HEADER = ["instanceId", "i", "j", "value"]


def write_matrix_dataset(path, matrices, meta=None):
    """Write a (count, rows, cols) stack and its sidecar."""
    arr = np.asarray(matrices, dtype=float)
    if arr.ndim != 3:
        raise ValueError(f"expected (count, rows, cols), got shape {arr.shape}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_HEADER)
        for k in range(arr.shape[0]):
            for i in range(arr.shape[1]):
                for j in range(arr.shape[2]):
                    writer.writerow([k, i, j, format(arr[k, i, j], ".17g")])
    side = dict(meta or {})
    side["count"], side["rows"], side["cols"] = (int(s) for s in arr.shape)
    with open(str(path) + ".meta.json", "w") as fh:
        json.dump(side, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_matrix_dataset(path):
    """Read a dataset back; returns (array, sidecar dict)."""
    with open(str(path) + ".meta.json") as fh:
        meta = json.load(fh)
    arr = np.zeros((meta["count"], meta["rows"], meta["cols"]))
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != _HEADER:
            raise ValueError(f"unexpected dataset header {header!r}")
        for k, i, j, v in reader:
            arr[int(k), int(i), int(j)] = float(v)
    return arr, meta
