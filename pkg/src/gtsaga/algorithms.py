"""Network-wide iterations of GT-SAGA and baselines, plus theoretical step bounds.

All node quantities are stacked row-wise: ``net.x[i]`` is node ``i``'s iterate.
Randomness comes from one stream per node, spawned from the master seed, so
results do not depend on the order in which nodes are processed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .analysis import MetricTrace, record_metrics
from .objectives import FiniteSumProblem
from .saga import DenseTables, make_tables
from .topology import MixingMatrix, mix

__all__ = [
    "ALGORITHMS",
    "AlgoConfig",
    "DivergenceError",
    "IndexSampler",
    "NetworkState",
    "init_network",
    "gt_saga_step",
    "dsgd_step",
    "gt_full_step",
    "nonconvex_step_terms",
    "max_step_nonconvex",
    "pl_step_terms",
    "max_step_pl",
    "binding_term",
    "run",
]

ALGORITHMS = ("gt_saga", "dsgd", "gt_full")


class DivergenceError(FloatingPointError):
    def __init__(self, k: int, what: str = "iterate"):
        super().__init__(f"non-finite {what} at iteration {k}")
        self.k = k


class IndexSampler:
    """Per-node uniform component draws ``(tau_i^k, s_i^k)``.

    Node ``i`` owns the ``i``-th child of ``SeedSequence(seed)`` and draws its
    indices in blocks of ``block`` iterations.
    """

    def __init__(self, n: int, m: int, seed: int, block: int = 1024):
        self.n, self.m, self.block = n, m, block
        children = np.random.SeedSequence(seed).spawn(n)
        self._gens = [np.random.default_rng(c) for c in children]
        self._buf = np.empty((0, n, 2), dtype=np.int64)
        self._pos = 0

    def draw(self) -> tuple[np.ndarray, np.ndarray]:
        if self._pos == len(self._buf):
            self._buf = np.stack([g.integers(0, self.m, size=(self.block, 2)) for g in self._gens],
                                 axis=1)
            self._pos = 0
        pair = self._buf[self._pos]
        self._pos += 1
        return pair[:, 0], pair[:, 1]


@dataclass
class NetworkState:
    x: np.ndarray       # (n, p) iterates
    y: np.ndarray       # (n, p) gradient trackers
    g_prev: np.ndarray  # (n, p) previous estimates g^{k-1}
    tables: DenseTables | None
    sampler: IndexSampler
    k: int = 0
    grad_evals: int = 0  # component gradients evaluated per node so far
    last_draws: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def x_bar(self) -> np.ndarray:
        return self.x.mean(axis=0)


def init_network(prob: FiniteSumProblem, x0, seed: int, kind: str = "gt_saga",
                 keep_points: bool = True, table: str = "dense") -> NetworkState:
    """All nodes start at the common point ``x0`` with zero trackers."""
    if kind not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {kind!r}")
    x0 = np.asarray(x0, dtype=float).reshape(prob.p)
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    X0 = np.tile(x0, (prob.n, 1))
    tables = None
    evals = 0
    if kind == "gt_saga":
        tables = make_tables(prob, X0, kind=table, keep_points=keep_points)
        evals = prob.m
    return NetworkState(
        x=X0, y=np.zeros_like(X0), g_prev=np.zeros_like(X0), tables=tables,
        sampler=IndexSampler(prob.n, prob.m, seed), grad_evals=evals,
    )


def _draw(net: NetworkState, tau, s):
    if tau is None:
        tau, s = net.sampler.draw()
    net.last_draws = (np.asarray(tau), np.asarray(s))
    return net.last_draws


def _finish(net: NetworkState, evals: int) -> None:
    net.k += 1
    net.grad_evals += evals
    if not (np.all(np.isfinite(net.x)) and np.all(np.isfinite(net.y))):
        raise DivergenceError(net.k)


def _tracking_update(net: NetworkState, w: MixingMatrix, g: np.ndarray, alpha: float) -> None:
    net.y = mix(w, net.y + g - net.g_prev)
    net.x = mix(w, net.x - alpha * net.y)
    net.g_prev = g


def gt_saga_step(net: NetworkState, w: MixingMatrix, prob: FiniteSumProblem, alpha: float,
                 tau=None, s=None) -> None:
    """One synchronous GT-SAGA iteration over all nodes.

    ``tau`` and ``s`` override the sampler (one index per node).
    """
    tau, s = _draw(net, tau, s)
    g = net.tables.estimate(prob, net.x, tau)
    x_start = net.x
    _tracking_update(net, w, g, alpha)
    net.tables.update(prob, x_start, s)
    _finish(net, 2)


def gt_full_step(net: NetworkState, w: MixingMatrix, prob: FiniteSumProblem, alpha: float,
                 tau=None, s=None) -> None:
    """Gradient tracking with exact local batch gradients."""
    _draw(net, tau, s)
    _tracking_update(net, w, prob.local_grads(net.x), alpha)
    _finish(net, prob.m)


def dsgd_step(net: NetworkState, w: MixingMatrix, prob: FiniteSumProblem, alpha: float,
              tau=None, s=None) -> None:
    """Decentralized SGD: ``x <- W (x - alpha * grad f_{i,tau_i}(x_i))``."""
    tau, _ = _draw(net, tau, s)
    grads = prob.grads_at(np.arange(net.n), tau, net.x)
    net.x = mix(w, net.x - alpha * grads)
    net.g_prev = grads
    _finish(net, 1)


STEPS: dict[str, Callable] = {
    "gt_saga": gt_saga_step,
    "dsgd": dsgd_step,
    "gt_full": gt_full_step,
}


# Step-size upper bounds


def _check_bound_args(lam, n, m, L) -> None:
    if not 0 <= lam < 1:
        raise ValueError(f"lambda must lie in [0, 1), got {lam}")
    if n < 1 or m < 1 or L <= 0:
        raise ValueError("need n >= 1, m >= 1 and L > 0")


def nonconvex_step_terms(lam: float, n: int, m: int, L: float) -> dict[str, float]:
    """The four candidates whose minimum is the general non-convex step bound."""
    _check_bound_args(lam, n, m, L)
    u = 1 - lam**2
    inf = math.inf
    return {
        "network": (u**2 / (48 * lam) if lam > 0 else inf) / L,
        "batch": 2 * n ** (1 / 3) / (13 * m ** (2 / 3)) / L,
        "smoothness": 0.5 / L,
        "mixed": (u**0.75 / (18 * math.sqrt(lam) * math.sqrt(m)) if lam > 0 else inf) / L,
    }


def max_step_nonconvex(lam: float, n: int, m: int, L: float) -> float:
    return min(nonconvex_step_terms(lam, n, m, L).values())


def pl_step_terms(lam: float, n: int, m: int, L: float, mu: float) -> dict[str, float]:
    """The seven candidates whose minimum is the PL step bound."""
    _check_bound_args(lam, n, m, L)
    if mu <= 0:
        raise ValueError("mu must be positive")
    kappa = L / mu
    if kappa < 1:
        raise ValueError(f"condition number L/mu = {kappa} < 1 is inconsistent")
    u = 1 - lam**2
    inf = math.inf
    return {
        "network": u**2 / (55 * lam * L) if lam > 0 else inf,
        "network_kappa": u / (13 * lam * kappa**0.25 * L) if lam > 0 else inf,
        "network_size": u**3 / (388 * lam**2 * n * L) if lam > 0 else inf,
        "batch": n ** (1 / 3) / (10.5 * m ** (2 / 3) * kappa ** (1 / 3) * L),
        "smoothness": 1 / (36 * L),
        "spectral_gap": u / (2 * mu),
        "table_refresh": 1 / (4 * m * mu),
    }


def max_step_pl(lam: float, n: int, m: int, L: float, mu: float) -> float:
    return min(pl_step_terms(lam, n, m, L, mu).values())


def binding_term(terms: dict[str, float]) -> str:
    return min(terms, key=terms.get)


# Driver


@dataclass
class AlgoConfig:
    kind: str
    alpha: float
    iterations: int
    seed: int = 0
    record_every: int = 1
    stop_below: float | None = None

    def __post_init__(self):
        if self.kind not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.kind!r}")
        if not self.alpha > 0:
            raise ValueError("step size must be positive")
        if self.iterations < 0 or self.record_every < 1:
            raise ValueError("iterations must be >= 0 and record_every >= 1")


def run(net: NetworkState, w: MixingMatrix, prob: FiniteSumProblem, cfg: AlgoConfig,
        monitor: Callable[[NetworkState], None] | None = None,
        f_star: float | None = None) -> MetricTrace:
    """Advance ``net`` by ``cfg.iterations`` steps, recording metrics.

    ``monitor`` is called after every step. Records are taken at iteration 0,
    every ``record_every`` steps and at the last step. With ``stop_below`` set
    the run ends at the first record whose optimality gap (stationarity gap
    when ``F*`` is unknown) is at or below it.
    """
    step = STEPS[cfg.kind]
    trace = MetricTrace()
    trace.append(record_metrics(net, prob, f_star))
    for it in range(1, cfg.iterations + 1):
        step(net, w, prob, cfg.alpha)
        if monitor is not None:
            monitor(net)
        if it % cfg.record_every == 0 or it == cfg.iterations:
            rec = record_metrics(net, prob, f_star)
            trace.append(rec)
            if cfg.stop_below is not None:
                level = rec.optimality_gap if rec.optimality_gap is not None else rec.stationarity_gap
                if level <= cfg.stop_below:
                    break
    return trace
