"""Exact conditional expectations by enumerating every index draw.

These monitors compare the one-step behaviour of GT-SAGA against the
variance and descent inequalities that drive its analysis. They are only
practical for tiny instances: the enumeration is ``m**n`` (variance) or
``m**(2n)`` (descent) states.
"""

from __future__ import annotations

import copy
import itertools
from dataclasses import dataclass

import numpy as np

from .algorithms import NetworkState, gt_saga_step
from .analysis import aux_sequence
from .objectives import FiniteSumProblem
from .topology import MixingMatrix

__all__ = [
    "VarianceCheck",
    "DescentCheck",
    "estimator_variance",
    "check_variance_bounds",
    "check_descent",
]


@dataclass
class VarianceCheck:
    variance: float         # E ||g - grad f(x)||^2
    variance_bound: float
    mean_sq: float          # E ||g_bar||^2
    mean_sq_bound: float

    @property
    def holds(self) -> bool:
        return self.variance <= self.variance_bound and self.mean_sq <= self.mean_sq_bound


@dataclass
class DescentCheck:
    expected_value: float   # E F(x_bar^{k+1})
    bound: float

    @property
    def holds(self) -> bool:
        return self.expected_value <= self.bound


def _points(net: NetworkState) -> np.ndarray:
    if net.tables is None or net.tables.points is None:
        raise ValueError("monitors need tables that keep their points")
    return net.tables.points


def estimator_variance(net: NetworkState, prob: FiniteSumProblem) -> tuple[float, float]:
    """``(E||g - grad f(x)||^2, E||g_bar||^2)``, enumerating all ``m**n`` joint draws of ``tau``."""
    n, m = prob.n, prob.m
    local = prob.local_grads(net.x)
    variance = mean_sq = 0.0
    for draw in itertools.product(range(m), repeat=n):
        g = net.tables.estimate(prob, net.x, np.array(draw))
        variance += float(np.sum((g - local) ** 2))
        g_bar = g.mean(axis=0)
        mean_sq += float(g_bar @ g_bar)
    count = m**n
    return variance / count, mean_sq / count


def check_variance_bounds(net: NetworkState, prob: FiniteSumProblem) -> VarianceCheck:
    n, L = prob.n, prob.L
    t = aux_sequence(net.x, _points(net))
    cons = float(np.sum((net.x - net.x.mean(axis=0)) ** 2))
    mean_local = prob.local_grads(net.x).mean(axis=0)
    variance, mean_sq = estimator_variance(net, prob)
    return VarianceCheck(
        variance=variance,
        variance_bound=2 * L**2 * cons + 2 * n * L**2 * t,
        mean_sq=mean_sq,
        mean_sq_bound=2 * L**2 / n**2 * cons + 2 * L**2 / n * t + float(mean_local @ mean_local),
    )


def check_descent(net: NetworkState, w: MixingMatrix, prob: FiniteSumProblem,
                  alpha: float) -> DescentCheck:
    """Exact ``E F(x_bar^{k+1})`` over all joint ``(tau, s)`` against the descent bound.

    The bound is stated for ``alpha <= 1 / (2L)``; larger steps raise.
    """
    if alpha > 1 / (2 * prob.L):
        raise ValueError("descent bound requires alpha <= 1/(2L)")
    n, m, L = prob.n, prob.m, prob.L
    x_bar = net.x.mean(axis=0)
    f_now, grad_now = prob.value_grad(x_bar)
    mean_local = prob.local_grads(net.x).mean(axis=0)
    cons = float(np.sum((net.x - x_bar) ** 2))
    t = aux_sequence(net.x, _points(net))

    total, count = 0.0, 0
    for draw in itertools.product(range(m), repeat=2 * n):
        trial = copy.deepcopy(net)
        gt_saga_step(trial, w, prob, alpha, tau=np.array(draw[:n]), s=np.array(draw[n:]))
        total += prob.value_grad(trial.x.mean(axis=0))[0]
        count += 1
    bound = (f_now - alpha / 2 * float(grad_now @ grad_now)
             - alpha / 4 * float(mean_local @ mean_local)
             + alpha * L**2 / n * cons + alpha**2 * L**3 / n * t)
    return DescentCheck(expected_value=total / count, bound=bound)
