"""Labelled datasets: synthetic generation, CSV ingestion and node partitioning."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["Dataset", "Shards", "generate_dataset", "load_dataset_csv", "save_dataset_csv",
           "partition", "PARTITION_MODES"]

PARTITION_MODES = ("uniform", "by_label")
NORM_TOL = 1e-12


@dataclass(eq=False)
class Dataset:
    features: np.ndarray  # (N, p), unit-norm rows
    labels: np.ndarray    # (N,), entries in {-1, +1}
    provenance: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ValueError("features must be (N, p) and labels (N,)")
        if not np.all(np.abs(self.labels) == 1):
            raise ValueError("labels must be -1 or +1")

    @property
    def N(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.features[idx], self.labels[idx], self.provenance)


@dataclass(eq=False)
class Shards:
    """Per-node data: ``features`` ``(n, m, p)``, ``labels`` ``(n, m)``.

    ``indices[i, j]`` is the dataset row that became component ``j`` of node ``i``.
    """
    features: np.ndarray
    labels: np.ndarray
    indices: np.ndarray

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def m(self) -> int:
        return self.labels.shape[1]


def _normalize(features: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(features, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot normalize an all-zero feature row")
    return features / norms


def generate_dataset(N: int, p: int, seed: int, flip: float = 0.1,
                     offset: float = 0.0) -> Dataset:
    """Unit-norm Gaussian features labelled by a hidden direction, with label noise.

    Each label is ``sign(theta @ w)`` for a random unit ``w``, flipped
    independently with probability ``flip``. ``offset`` shifts every raw
    coordinate before normalization. With ``offset = 0`` the feature law is
    symmetric, so ``label * theta`` has the same law in both classes and a
    by-label split yields identical local objectives in expectation; a
    nonzero offset breaks that symmetry.
    """
    if N < 1 or p < 1:
        raise ValueError("need N >= 1 and p >= 1")
    if not 0 <= flip <= 1:
        raise ValueError("flip probability must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    features = _normalize(rng.standard_normal((N, p)) + offset)
    direction = rng.standard_normal(p)
    labels = np.where(features @ direction >= 0, 1.0, -1.0)
    labels[rng.random(N) < flip] *= -1
    return Dataset(features, labels, provenance=f"synthetic(N={N}, p={p}, seed={seed}, offset={offset})")


def load_dataset_csv(path: str | Path) -> Dataset:
    """Read rows of ``label, feature_1, ..., feature_p``; an optional header is skipped.

    Labels may be ``{-1, +1}`` or ``{0, 1}`` (``0`` maps to ``-1``). Feature
    rows are normalized to unit norm.
    """
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header
                raise ValueError(f"{path}:{lineno}: non-numeric field") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    if len({len(r) for r in rows}) != 1 or len(rows[0]) < 2:
        raise ValueError(f"{path}: rows need a label and at least one feature, all equal length")
    data = np.array(rows)
    labels = data[:, 0]
    if set(np.unique(labels)) <= {0.0, 1.0}:
        labels = 2 * labels - 1
    return Dataset(_normalize(data[:, 1:]), labels, provenance=str(path))


def save_dataset_csv(path: str | Path, ds: Dataset) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label"] + [f"x{c}" for c in range(ds.p)])
        for label, row in zip(ds.labels, ds.features):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])


def _take(idx: np.ndarray, count: int, truncate: bool, what: str) -> np.ndarray:
    if len(idx) < count:
        raise ValueError(f"{what}: need {count} samples, have {len(idx)}")
    if len(idx) > count and not truncate:
        raise ValueError(f"{what}: {len(idx) - count} samples left over; set truncate to drop them")
    return idx[:count]


def partition(ds: Dataset, n: int, mode: str = "uniform", truncate: bool = False,
              m: int | None = None) -> Shards:
    """Split ``ds`` into ``n`` equal shards.

    ``uniform`` deals rows round-robin by index. ``by_label`` gives nodes
    ``0 .. n//2 - 1`` only ``+1`` samples and the remaining nodes only ``-1``
    samples, with each class's surplus dropped from the end. Without ``m``,
    the shard size is the largest one the data allows.
    """
    if n < 1:
        raise ValueError("node count must be >= 1")
    if mode not in PARTITION_MODES:
        raise ValueError(f"unknown partition mode {mode!r}")

    if mode == "uniform":
        if m is None:
            m = ds.N // n
        if m < 1:
            raise ValueError(f"{ds.N} samples cannot fill {n} nodes")
        idx = _take(np.arange(ds.N), n * m, truncate, "uniform partition")
        indices = idx.reshape(m, n).T
    else:
        if n < 2:
            raise ValueError("by_label partition needs at least two nodes")
        pos_nodes, neg_nodes = n // 2, n - n // 2
        pos = np.flatnonzero(ds.labels > 0)
        neg = np.flatnonzero(ds.labels < 0)
        if m is None:
            m = min(len(pos) // pos_nodes, len(neg) // neg_nodes)
        if m < 1:
            raise ValueError(f"classes of size {len(pos)} / {len(neg)} are too small for "
                             f"{pos_nodes} + {neg_nodes} nodes")
        pos = _take(pos, pos_nodes * m, truncate, "by_label partition (+1 class)")
        neg = _take(neg, neg_nodes * m, truncate, "by_label partition (-1 class)")
        indices = np.concatenate([pos.reshape(pos_nodes, m), neg.reshape(neg_nodes, m)])

    return Shards(features=ds.features[indices], labels=ds.labels[indices], indices=indices)
