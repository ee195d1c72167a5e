"""Communication graphs and doubly-stochastic mixing matrices.

Generators cover the ring, 2D grid, directed exponential, random geometric
and complete graphs. Every generated adjacency matrix carries self-loops on
its diagonal (a node always keeps its own state); neighbor queries exclude
the node itself.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "TOPOLOGY_KINDS",
    "WEIGHT_RULES",
    "DEFAULT_RULES",
    "Graph",
    "MixingMatrix",
    "TopologyError",
    "build_topology",
    "build_mixing_matrix",
    "spectral_gap",
    "mix",
    "save_matrix_csv",
    "load_matrix_csv",
]

TOPOLOGY_KINDS = ("ring", "grid2d", "exponential", "geometric", "complete")
WEIGHT_RULES = ("equal", "lazy_metropolis", "average")

# Weight rule used for each kind when none is given.
DEFAULT_RULES = {
    "ring": "equal",
    "exponential": "equal",
    "grid2d": "lazy_metropolis",
    "geometric": "lazy_metropolis",
    "complete": "average",
}

STOCHASTIC_TOL = 1e-12
GEOMETRIC_RETRIES = 100


class TopologyError(ValueError):
    """Invalid graph parameters or graph/weight-rule mismatch."""


@dataclass(frozen=True, eq=False)
class Graph:
    kind: str
    adjacency: np.ndarray
    directed: bool = False
    positions: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def out_neighbors(self, i: int) -> np.ndarray:
        row = self.adjacency[i].copy()
        row[i] = False
        return np.flatnonzero(row)

    def in_neighbors(self, i: int) -> np.ndarray:
        col = self.adjacency[:, i].copy()
        col[i] = False
        return np.flatnonzero(col)

    def out_degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1) - np.diag(self.adjacency)

    def in_degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=0) - np.diag(self.adjacency)

    def is_complete(self) -> bool:
        return bool(self.adjacency.all())

    def is_connected(self) -> bool:
        """Strong connectivity for directed graphs, plain connectivity otherwise."""
        if self.n <= 1:
            return True
        if not _reaches_all(self.adjacency):
            return False
        return not self.directed or _reaches_all(self.adjacency.T)


def _reaches_all(adj: np.ndarray) -> bool:
    n = adj.shape[0]
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for r in np.flatnonzero(adj[i] & ~seen):
            seen[r] = True
            queue.append(int(r))
    return bool(seen.all())


def build_topology(kind: str, n: int, seed: int | None = None,
                   radius: float | None = None) -> Graph:
    """Generate a connected communication graph.

    Args:
        kind: one of ``TOPOLOGY_KINDS``.
        n: number of nodes.
        seed: RNG seed, required for ``geometric``.
        radius: connection radius for ``geometric``; defaults to the
            connectivity threshold ``sqrt(2 ln(n) / n)``.

    Raises:
        TopologyError: on invalid parameters, or if a geometric graph is still
            disconnected after ``GEOMETRIC_RETRIES`` resamples.
    """
    if kind not in TOPOLOGY_KINDS:
        raise TopologyError(f"unknown topology kind {kind!r}")
    if n < 1:
        raise TopologyError(f"node count must be >= 1, got {n}")

    adj = np.eye(n, dtype=bool)
    positions = None
    directed = False

    if kind == "complete":
        adj[:] = True
    elif kind == "ring":
        for i in range(n):
            adj[i, (i + 1) % n] = adj[(i + 1) % n, i] = True
    elif kind == "grid2d":
        side = math.isqrt(n)
        if side * side != n:
            raise TopologyError(f"grid2d needs a perfect-square node count, got {n}")
        for a in range(side):
            for b in range(side):
                i = a * side + b
                if a + 1 < side:
                    adj[i, i + side] = adj[i + side, i] = True
                if b + 1 < side:
                    adj[i, i + 1] = adj[i + 1, i] = True
    elif kind == "exponential":
        directed = True
        if n > 1:
            for i in range(n):
                for j in range(int(math.floor(math.log2(n - 1))) + 1):
                    adj[i, (i + 2**j) % n] = True
    elif kind == "geometric":
        if seed is None:
            raise TopologyError("geometric topology requires a seed")
        adj, positions = _geometric(n, seed, radius)

    graph = Graph(kind=kind, adjacency=adj, directed=directed, positions=positions)
    if not graph.is_connected():
        raise TopologyError(f"{kind} graph with n={n} is not connected")
    return graph


def _geometric(n: int, seed: int, radius: float | None):
    if radius is None:
        radius = math.sqrt(2.0 * math.log(n) / n) if n > 1 else 1.0
    rng = np.random.default_rng(seed)
    for _ in range(GEOMETRIC_RETRIES):
        pos = rng.random((n, 2))
        dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        adj = dist <= radius
        if _reaches_all(adj):
            return adj, pos
    raise TopologyError(
        f"geometric graph (n={n}, r={radius:.4g}) disconnected after "
        f"{GEOMETRIC_RETRIES} resamples"
    )


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    """Doubly-stochastic weights ``w`` with cached ``lam`` (second singular value)."""

    w: np.ndarray
    lam: float
    rule: str = ""

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @classmethod
    def from_array(cls, w, rule: str = "") -> "MixingMatrix":
        w = np.array(w, dtype=float)
        check_doubly_stochastic(w)
        w.setflags(write=False)
        return cls(w=w, lam=spectral_gap(w), rule=rule)

    def stochasticity_error(self) -> float:
        return max(np.abs(self.w.sum(axis=1) - 1).max(),
                   np.abs(self.w.sum(axis=0) - 1).max())


def check_doubly_stochastic(w: np.ndarray, tol: float = STOCHASTIC_TOL) -> None:
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise TopologyError(f"mixing matrix must be square, got shape {w.shape}")
    if (w < 0).any():
        raise TopologyError("mixing matrix has negative entries")
    row_err = np.abs(w.sum(axis=1) - 1).max()
    col_err = np.abs(w.sum(axis=0) - 1).max()
    if max(row_err, col_err) > tol:
        raise TopologyError(
            f"matrix is not doubly stochastic (row err {row_err:.3g}, col err {col_err:.3g})"
        )


def build_mixing_matrix(g: Graph, rule: str | None = None) -> MixingMatrix:
    """Weights respecting ``g`` under one of ``WEIGHT_RULES``.

    ``equal`` spreads each node's weight uniformly over its out-neighbors
    (no self weight). A periodic result, such as an even ring, has a second
    singular value of 1; it is replaced by its lazy form ``(I + W) / 2``.
    ``lazy_metropolis`` uses ``1 / (2 max(d_i, d_r))`` per edge with the
    remainder on the diagonal. ``average`` is ``ones / n`` on a complete graph.
    """
    rule = rule or DEFAULT_RULES[g.kind]
    n = g.n
    if rule not in WEIGHT_RULES:
        raise TopologyError(f"unknown weight rule {rule!r}")

    if rule == "average":
        if not g.is_complete():
            raise TopologyError("average weights require a complete graph")
        w = np.full((n, n), 1.0 / n)
    elif n == 1:
        w = np.ones((1, 1))
    elif rule == "equal":
        out_deg, in_deg = g.out_degrees(), g.in_degrees()
        if not (np.all(out_deg == out_deg[0]) and np.all(in_deg == out_deg[0])):
            raise TopologyError("equal weights require a regular graph")
        off = g.adjacency & ~np.eye(n, dtype=bool)
        w = off / out_deg[0]
        if spectral_gap(w) >= 1.0 - 1e-9:
            w = 0.5 * (np.eye(n) + w)
    else:  # lazy_metropolis
        if g.directed or not np.array_equal(g.adjacency, g.adjacency.T):
            raise TopologyError("lazy Metropolis weights require an undirected graph")
        deg = g.out_degrees()
        off = g.adjacency & ~np.eye(n, dtype=bool)
        w = np.where(off, 1.0 / (2.0 * np.maximum.outer(deg, deg).clip(min=1)), 0.0)
        w[np.diag_indices(n)] = 1.0 - w.sum(axis=1)

    return MixingMatrix.from_array(w, rule=rule)


def spectral_gap(w) -> float:
    """Second largest singular value of a doubly-stochastic matrix.

    Computed as ``||w - J||_2`` with ``J = ones / n``. A value of 1 or more
    means ``w`` is not primitive.
    """
    w = w.w if isinstance(w, MixingMatrix) else np.asarray(w, dtype=float)
    n = w.shape[0]
    return float(np.linalg.norm(w - np.full((n, n), 1.0 / n), 2))


def mix(w: MixingMatrix | np.ndarray, x: np.ndarray) -> np.ndarray:
    """Apply the weights to stacked node vectors (one row per node)."""
    mat = w.w if isinstance(w, MixingMatrix) else np.asarray(w)
    x = np.asarray(x)
    if x.shape[0] != mat.shape[0]:
        raise ValueError(f"expected {mat.shape[0]} rows, got {x.shape[0]}")
    return mat @ x


def save_matrix_csv(path: str | Path, matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in matrix:
            writer.writerow([repr(float(v)) if matrix.dtype != bool else int(v) for v in row])


def load_matrix_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh) if row])
