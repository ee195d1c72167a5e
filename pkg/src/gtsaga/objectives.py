"""Finite-sum objectives ``F(x) = (1/n) sum_i (1/m) sum_j f_ij(x)``.

Every problem exposes per-component oracles plus batched variants that take
one ``(node, component)`` pair per row, which is what the network simulator
calls on every iteration.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

__all__ = [
    "FiniteSumProblem",
    "GlmProblem",
    "PlProblem",
    "QuadraticProblem",
    "glm_loss",
    "glm_loss_derivative",
    "glm_component",
    "make_glm_problem",
    "make_pl_problem",
    "make_quadratic_problem",
    "global_value_grad",
    "smoothness_constant",
    "estimate_pl_constant",
    "save_pl_coefficients",
    "load_pl_coefficients",
]


class FiniteSumProblem:
    """Base class: an ``n x m`` grid of smooth components on ``R^p``."""

    kind = "abstract"
    n: int
    m: int
    p: int
    f_star: float | None = None
    x_star: np.ndarray | None = None

    # Batched oracles; ``i``, ``j`` are integer arrays and ``x`` has one row per pair.
    def values_at(self, i, j, x) -> np.ndarray:
        raise NotImplementedError

    def grads_at(self, i, j, x) -> np.ndarray:
        raise NotImplementedError

    @property
    def L(self) -> float:
        raise NotImplementedError

    def component(self, i: int, j: int, x) -> tuple[float, np.ndarray]:
        self._check_index(i, j)
        x = np.asarray(x, dtype=float).reshape(1, self.p)
        i_, j_ = np.array([i]), np.array([j])
        return float(self.values_at(i_, j_, x)[0]), self.grads_at(i_, j_, x)[0]

    def component_grad(self, i: int, j: int, x) -> np.ndarray:
        return self.component(i, j, x)[1]

    def node_grads(self, X: np.ndarray, node: int | None = None) -> np.ndarray:
        """All component gradients, shape ``(n, m, p)``, node ``i`` evaluated at ``X[i]``.

        With ``node`` given, ``X`` is a single point and the result is ``(m, p)``.
        """
        if node is not None:
            ii = np.full(self.m, node)
            jj = np.arange(self.m)
            return self.grads_at(ii, jj, np.broadcast_to(np.asarray(X, float), (self.m, self.p)))
        X = np.asarray(X, dtype=float).reshape(self.n, self.p)
        ii = np.repeat(np.arange(self.n), self.m)
        jj = np.tile(np.arange(self.m), self.n)
        return self.grads_at(ii, jj, X[ii]).reshape(self.n, self.m, self.p)

    def local_grads(self, X: np.ndarray) -> np.ndarray:
        """Batch gradient of each local function ``f_i`` at ``X[i]``, shape ``(n, p)``."""
        return self.node_grads(X).mean(axis=1)

    def local_values(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(self.n, self.p)
        ii = np.repeat(np.arange(self.n), self.m)
        jj = np.tile(np.arange(self.m), self.n)
        return self.values_at(ii, jj, X[ii]).reshape(self.n, self.m).mean(axis=1)

    def value_grad(self, x) -> tuple[float, np.ndarray]:
        X = np.broadcast_to(np.asarray(x, dtype=float).reshape(1, self.p), (self.n, self.p))
        return float(self.local_values(X).mean()), self.local_grads(X).mean(axis=0)

    def _check_index(self, i: int, j: int) -> None:
        if not (0 <= i < self.n and 0 <= j < self.m):
            raise IndexError(f"component ({i}, {j}) outside {self.n}x{self.m} grid")


def global_value_grad(prob: FiniteSumProblem, x) -> tuple[float, np.ndarray]:
    """Exact ``(F(x), grad F(x))`` as the average over all ``n * m`` components."""
    return prob.value_grad(x)


# Non-convex binary-classification GLM


def glm_loss(u):
    """``(1 - sigmoid(u))**2``, written as ``sigmoid(-u)**2`` for stability."""
    return expit(-np.asarray(u, dtype=float)) ** 2


def glm_loss_derivative(u):
    u = np.asarray(u, dtype=float)
    s = expit(-u)
    return -2.0 * expit(u) * s * s


def glm_component(x, theta, label) -> tuple[float, np.ndarray]:
    """Value and gradient of ``loss(label * x @ theta)``."""
    x, theta = np.asarray(x, dtype=float), np.asarray(theta, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(theta))):
        raise ValueError("non-finite input to glm_component")
    u = label * float(x @ theta)
    return float(glm_loss(u)), float(glm_loss_derivative(u)) * label * theta


@dataclass(eq=False)
class GlmProblem(FiniteSumProblem):
    """``f_ij(x) = loss(xi_ij * x @ theta_ij)`` with unit-norm ``theta_ij``."""

    theta: np.ndarray   # (n, m, p)
    labels: np.ndarray  # (n, m), entries in {-1, +1}

    kind = "glm"

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        self.n, self.m, self.p = self.theta.shape
        if self.labels.shape != (self.n, self.m):
            raise ValueError("labels must have shape (n, m)")
        if not np.all(np.abs(self.labels) == 1):
            raise ValueError("labels must be -1 or +1")

    @property
    def L(self) -> float:
        return 4.0 / 3.0

    def margins_at(self, i, j, x) -> np.ndarray:
        return self.labels[i, j] * np.einsum("kp,kp->k", x, self.theta[i, j])

    def values_at(self, i, j, x):
        return glm_loss(self.margins_at(i, j, x))

    def scalars_at(self, i, j, x) -> np.ndarray:
        """Per-pair gradient scale ``loss'(margin) * label``; gradient = scale * theta."""
        return glm_loss_derivative(self.margins_at(i, j, x)) * self.labels[i, j]

    def grads_at(self, i, j, x):
        return self.scalars_at(i, j, x)[:, None] * self.theta[i, j]

    def node_grads(self, X, node=None):
        if node is not None:
            x = np.asarray(X, dtype=float).reshape(self.p)
            u = self.labels[node] * (self.theta[node] @ x)
            return (glm_loss_derivative(u) * self.labels[node])[:, None] * self.theta[node]
        X = np.asarray(X, dtype=float).reshape(self.n, self.p)
        u = self.labels * np.einsum("nmp,np->nm", self.theta, X)
        return (glm_loss_derivative(u) * self.labels)[..., None] * self.theta

    def local_grads(self, X):
        X = np.asarray(X, dtype=float).reshape(self.n, self.p)
        u = self.labels * np.einsum("nmp,np->nm", self.theta, X)
        c = glm_loss_derivative(u) * self.labels
        return np.einsum("nm,nmp->np", c, self.theta) / self.m

    def local_values(self, X):
        X = np.asarray(X, dtype=float).reshape(self.n, self.p)
        u = self.labels * np.einsum("nmp,np->nm", self.theta, X)
        return glm_loss(u).mean(axis=1)

    def value_grad(self, x):
        x = np.asarray(x, dtype=float).reshape(self.p)
        u = self.labels * (self.theta @ x)
        c = glm_loss_derivative(u) * self.labels
        grad = np.einsum("nm,nmp->p", c, self.theta) / (self.n * self.m)
        return float(glm_loss(u).mean()), grad


def make_glm_problem(features: np.ndarray, labels: np.ndarray) -> GlmProblem:
    """Build from stacked shards: ``features`` ``(n, m, p)``, ``labels`` ``(n, m)``."""
    return GlmProblem(theta=features, labels=labels)


# Synthetic PL family: f_ij(x) = x^2 + 3 sin^2(x) + a_ij cos(x) + b_ij x


@dataclass(eq=False)
class PlProblem(FiniteSumProblem):
    a: np.ndarray
    b: np.ndarray

    kind = "pl"

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.a.shape != self.b.shape or self.a.ndim != 2:
            raise ValueError("a and b must be matching (n, m) arrays")
        self.n, self.m = self.a.shape
        self.p = 1
        self.f_star = 0.0
        self.x_star = np.zeros(1)

    @property
    def L(self) -> float:
        # |f''| = |2 + 6 cos(2x) - a cos(x)| <= 8 + |a|
        return 8.0 + float(np.abs(self.a).max())

    def values_at(self, i, j, x):
        x = x[:, 0]
        return x**2 + 3 * np.sin(x) ** 2 + self.a[i, j] * np.cos(x) + self.b[i, j] * x

    def grads_at(self, i, j, x):
        x = x[:, 0]
        return (2 * x + 3 * np.sin(2 * x) - self.a[i, j] * np.sin(x) + self.b[i, j])[:, None]

    def node_grads(self, X, node=None):
        if node is not None:
            x = float(np.asarray(X).reshape(()))
            return (2 * x + 3 * np.sin(2 * x) - self.a[node] * np.sin(x) + self.b[node])[:, None]
        x = np.asarray(X, dtype=float).reshape(self.n, 1)
        return (2 * x + 3 * np.sin(2 * x) - self.a * np.sin(x) + self.b)[..., None]

    def value_grad(self, x):
        f, df = self.global_curve(np.asarray(x, dtype=float).reshape(1))
        return float(f[0]), df

    def global_curve(self, xs) -> tuple[np.ndarray, np.ndarray]:
        """``F`` and ``F'`` on an array of scalar points, via the mean coefficients."""
        xs = np.asarray(xs, dtype=float)
        a_bar, b_bar = self.a.mean(), self.b.mean()
        f = xs**2 + 3 * np.sin(xs) ** 2 + a_bar * np.cos(xs) + b_bar * xs
        df = 2 * xs + 3 * np.sin(2 * xs) - a_bar * np.sin(xs) + b_bar
        return f, df


PL_GRID = 2.0**-40


def make_pl_problem(n: int, m: int, seed: int) -> PlProblem:
    """Random nonzero coefficients whose sums vanish exactly in floating point.

    Draws are uniform on ``[-1, 1]``, centred, and rounded to multiples of
    ``PL_GRID``; the rounding residual is folded into one entry. On that grid
    every partial sum is exact, so the averaged objective equals
    ``x^2 + 3 sin^2(x)`` to the last bit.
    """
    if n * m < 2:
        raise ValueError("PL problem needs n * m >= 2 for zero-sum coefficients")
    rng = np.random.default_rng(seed)

    def draw():
        while True:
            c = rng.uniform(-1.0, 1.0, size=n * m)
            c = np.round((c - c.mean()) / PL_GRID) * PL_GRID
            c[rng.integers(n * m)] -= math.fsum(c)
            if np.all(c != 0):
                return c.reshape(n, m)

    return PlProblem(a=draw(), b=draw())


def estimate_pl_constant(prob: PlProblem, lo: float = -10.0, hi: float = 10.0,
                         step: float = 1e-4) -> float:
    """Grid estimate of ``min |F'(x)|^2 / (2 (F(x) - F*))`` over ``[lo, hi]``."""
    xs = np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)
    f, df = prob.global_curve(xs)
    gap = f - prob.f_star
    keep = gap > 0
    return float(np.min(df[keep] ** 2 / (2.0 * gap[keep])))


def save_pl_coefficients(path: str | Path, prob: PlProblem) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "component", "a", "b"])
        for i in range(prob.n):
            for j in range(prob.m):
                writer.writerow([i, j, repr(float(prob.a[i, j])), repr(float(prob.b[i, j]))])


def load_pl_coefficients(path: str | Path) -> PlProblem:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    n = 1 + max(int(r["node"]) for r in rows)
    m = 1 + max(int(r["component"]) for r in rows)
    a, b = np.zeros((n, m)), np.zeros((n, m))
    for r in rows:
        a[int(r["node"]), int(r["component"])] = float(r["a"])
        b[int(r["node"]), int(r["component"])] = float(r["b"])
    return PlProblem(a=a, b=b)


# Quadratic test family: f_ij(x) = 0.5 (x - c_ij)^T A_ij (x - c_ij). Analytic oracle only.


@dataclass(eq=False)
class QuadraticProblem(FiniteSumProblem):
    hessians: np.ndarray  # (n, m, p, p), symmetric PSD
    centers: np.ndarray   # (n, m, p)

    kind = "quadratic"

    def __post_init__(self):
        self.hessians = np.asarray(self.hessians, dtype=float)
        self.centers = np.asarray(self.centers, dtype=float)
        self.n, self.m, self.p = self.centers.shape

    @property
    def L(self) -> float:
        return float(np.linalg.eigvalsh(self.hessians).max())

    def values_at(self, i, j, x):
        d = x - self.centers[i, j]
        return 0.5 * np.einsum("kp,kpq,kq->k", d, self.hessians[i, j], d)

    def grads_at(self, i, j, x):
        return np.einsum("kpq,kq->kp", self.hessians[i, j], x - self.centers[i, j])


def make_quadratic_problem(n: int, m: int, p: int, seed: int,
                           center: np.ndarray | None = None) -> QuadraticProblem:
    """Random PSD quadratics; with ``center`` every component is minimised there."""
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, m, p, p))
    hessians = np.einsum("nmpk,nmqk->nmpq", B, B) / p
    if center is None:
        centers = rng.standard_normal((n, m, p))
    else:
        centers = np.broadcast_to(np.asarray(center, dtype=float), (n, m, p)).copy()
    return QuadraticProblem(hessians=hessians, centers=centers)


def smoothness_constant(prob: FiniteSumProblem) -> float:
    """Largest component smoothness parameter."""
    if isinstance(prob, (GlmProblem, PlProblem, QuadraticProblem)):
        return prob.L
    raise TypeError(f"no smoothness constant known for {type(prob).__name__}")
