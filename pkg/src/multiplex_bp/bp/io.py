"""CSV dumps of beliefs (``layer,node,b1..bq``) and labels (``layer,node,label``).

Layers are written 1-based, nodes 0-based, matching the network format.
"""

from __future__ import annotations

import csv

import numpy as np

from ..model import Labeling


def write_beliefs(path, beliefs: np.ndarray) -> None:
    N, L, q = beliefs.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "node", *(f"b{a + 1}" for a in range(q))])
        for l in range(L):
            for i in range(N):
                w.writerow([l + 1, i, *(repr(float(x)) for x in beliefs[i, l])])


def read_beliefs(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    q = len(header) - 2
    data = np.array([[float(x) for x in r] for r in body]).reshape(-1, q + 2)
    L = int(data[:, 0].max())
    N = int(data[:, 1].max()) + 1
    out = np.empty((N, L, q))
    out[data[:, 1].astype(int), data[:, 0].astype(int) - 1] = data[:, 2:]
    return out


def write_label_csv(path, labeling: Labeling) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "node", "label"])
        for l in range(labeling.L):
            for i in range(labeling.N):
                w.writerow([l + 1, i, int(labeling.t[i, l])])


def read_label_csv(path, q: int | None = None) -> Labeling:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    data = np.array([[int(x) for x in r] for r in rows], dtype=np.int64).reshape(-1, 3)
    L = int(data[:, 0].max())
    N = int(data[:, 1].max()) + 1
    t = np.zeros((N, L), dtype=np.int64)
    t[data[:, 1], data[:, 0] - 1] = data[:, 2]
    return Labeling(t, q=q if q is not None else max(int(t.max()), 1))
