"""SAGA gradient tables and the variance-reduced local estimator.

Two layers share the same arithmetic:

* ``NodeState`` / ``GradientTable`` with ``init_node``, ``saga_estimate`` and
  ``table_update`` model a single node and are convenient for inspection.
* ``DenseTables`` and ``GlmScalarTables`` hold the tables of every node
  stacked along a leading axis, which is what the network simulator uses.
  The GLM variant stores one scalar per component instead of a ``p``-vector.

Component indices are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .objectives import FiniteSumProblem, GlmProblem, glm_loss_derivative

__all__ = [
    "GradientTable",
    "NodeState",
    "init_node",
    "saga_estimate",
    "table_update",
    "DenseTables",
    "GlmScalarTables",
    "make_tables",
]


@dataclass
class GradientTable:
    grads: np.ndarray                 # (m, p): grad f_ij(z_ij)
    avg: np.ndarray                   # (p,): running mean of grads
    points: np.ndarray | None = None  # (m, p): z_ij, kept for diagnostics
    updates: int = 0

    @property
    def m(self) -> int:
        return self.grads.shape[0]


@dataclass
class NodeState:
    x: np.ndarray
    y: np.ndarray
    g_prev: np.ndarray
    table: GradientTable


def _check_component(prob: FiniteSumProblem, j: int) -> None:
    if not 0 <= j < prob.m:
        raise IndexError(f"component index {j} outside [0, {prob.m})")


def init_node(prob: FiniteSumProblem, i: int, x0, keep_points: bool = True) -> NodeState:
    """Fresh node: every table entry evaluated at ``x0``, tracker and previous estimate zero."""
    x0 = np.array(x0, dtype=float).reshape(prob.p)
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    grads = prob.node_grads(x0, node=i).copy()
    table = GradientTable(
        grads=grads,
        avg=grads.mean(axis=0),
        points=np.tile(x0, (prob.m, 1)) if keep_points else None,
    )
    return NodeState(x=x0, y=np.zeros(prob.p), g_prev=np.zeros(prob.p), table=table)


def saga_estimate(node: NodeState, prob: FiniteSumProblem, i: int, tau: int) -> np.ndarray:
    _check_component(prob, tau)
    fresh = prob.component_grad(i, tau, node.x)
    return fresh - node.table.grads[tau] + node.table.avg


def table_update(node: NodeState, prob: FiniteSumProblem, i: int, s: int,
                 x: np.ndarray | None = None) -> None:
    """Refresh entry ``s`` at ``x`` (default: the node's current iterate).

    The simulator passes the iterate from the start of the iteration, before
    the mixing step overwrote it.
    """
    _check_component(prob, s)
    x = node.x if x is None else np.asarray(x, dtype=float)
    table = node.table
    new = prob.component_grad(i, s, x)
    table.avg = table.avg + (new - table.grads[s]) / table.m
    table.grads[s] = new
    if table.points is not None:
        table.points[s] = x
    table.updates += 1
    if table.updates % table.m == 0:
        table.avg = table.grads.mean(axis=0)


class DenseTables:
    """Full gradient tables for all nodes, ``grads`` of shape ``(n, m, p)``."""

    def __init__(self, prob: FiniteSumProblem, X0: np.ndarray, keep_points: bool = True):
        X0 = np.asarray(X0, dtype=float).reshape(prob.n, prob.p)
        self.m = prob.m
        self._rows = np.arange(prob.n)
        self.grads = prob.node_grads(X0).copy()
        self.avg = self.grads.mean(axis=1)
        self.points = np.repeat(X0[:, None, :], prob.m, axis=1) if keep_points else None
        self.updates = 0

    def stored(self, j: np.ndarray) -> np.ndarray:
        return self.grads[self._rows, j]

    def estimate(self, prob: FiniteSumProblem, X: np.ndarray, tau: np.ndarray) -> np.ndarray:
        """SAGA estimate for every node; node ``i`` samples component ``tau[i]``."""
        fresh = prob.grads_at(self._rows, tau, X)
        return fresh - self.stored(tau) + self.avg

    def update(self, prob: FiniteSumProblem, X: np.ndarray, s: np.ndarray) -> None:
        new = prob.grads_at(self._rows, s, X)
        self.avg += (new - self.grads[self._rows, s]) / self.m
        self.grads[self._rows, s] = new
        if self.points is not None:
            self.points[self._rows, s] = X
        self._tick()

    def _tick(self) -> None:
        self.updates += 1
        if self.updates % self.m == 0:
            self.recompute()

    def recompute(self) -> None:
        self.avg = self.grads.mean(axis=1)

    def dense(self) -> np.ndarray:
        return self.grads

    def node_table(self, i: int) -> GradientTable:
        return GradientTable(
            grads=self.dense()[i].copy(),
            avg=self.avg[i].copy(),
            points=None if self.points is None else self.points[i].copy(),
            updates=self.updates,
        )


class GlmScalarTables(DenseTables):
    """GLM tables storing only ``loss'(margin) * label`` per component.

    The stored gradient of component ``j`` at node ``i`` is that scalar times
    ``theta_ij``, so memory is ``n * m`` instead of ``n * m * p``.
    """

    def __init__(self, prob: GlmProblem, X0: np.ndarray, keep_points: bool = True):
        if not isinstance(prob, GlmProblem):
            raise TypeError("scalar tables need a GlmProblem")
        X0 = np.asarray(X0, dtype=float).reshape(prob.n, prob.p)
        self.m = prob.m
        self._rows = np.arange(prob.n)
        self._theta = prob.theta
        u = prob.labels * np.einsum("nmp,np->nm", prob.theta, X0)
        self.scalars = glm_loss_derivative(u) * prob.labels
        self.avg = np.einsum("nm,nmp->np", self.scalars, self._theta) / self.m
        self.points = np.repeat(X0[:, None, :], prob.m, axis=1) if keep_points else None
        self.updates = 0

    def stored(self, j):
        return self.scalars[self._rows, j][:, None] * self._theta[self._rows, j]

    def update(self, prob, X, s):
        new = prob.scalars_at(self._rows, s, X)
        delta = new - self.scalars[self._rows, s]
        self.avg += delta[:, None] * self._theta[self._rows, s] / self.m
        self.scalars[self._rows, s] = new
        if self.points is not None:
            self.points[self._rows, s] = X
        self._tick()

    def recompute(self):
        self.avg = np.einsum("nm,nmp->np", self.scalars, self._theta) / self.m

    def dense(self):
        return self.scalars[..., None] * self._theta


def make_tables(prob: FiniteSumProblem, X0: np.ndarray, kind: str = "dense",
                keep_points: bool = True) -> DenseTables:
    if kind == "dense":
        return DenseTables(prob, X0, keep_points)
    if kind == "glm_scalar":
        return GlmScalarTables(prob, X0, keep_points)
    raise ValueError(f"unknown table kind {kind!r}")
