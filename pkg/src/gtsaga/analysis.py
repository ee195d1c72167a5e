"""Convergence metrics, contraction matrices and spectral certificates.

The matrix builders accept ``exact=True`` to return ``Fraction`` entries.
Several certificate rows are tight by construction (one row of the PL
certificate holds with equality), so a floating-point comparison can fail
on rounding alone; exact arithmetic makes the entrywise test decisive.
"""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from .objectives import FiniteSumProblem

__all__ = [
    "MetricRecord",
    "MetricTrace",
    "RateFit",
    "record_metrics",
    "aux_sequence",
    "consensus_error",
    "build_G_alpha",
    "build_H_alpha",
    "g_alpha_offset",
    "max_step_g_contraction",
    "g_certificate_vector",
    "h_certificate_vector",
    "spectral_radius",
    "positive_vector_certificate",
    "heterogeneity_measure",
    "fit_linear_rate",
]

TRACE_COLUMNS = ("k", "epoch", "stationarity_gap", "consensus_error", "optimality_gap", "t_k")


@dataclass
class MetricRecord:
    k: int
    epoch: float
    stationarity_gap: float
    consensus_error: float
    optimality_gap: float | None = None
    t_k: float | None = None


@dataclass
class MetricTrace:
    records: list[MetricRecord] = field(default_factory=list)

    def append(self, rec: MetricRecord) -> None:
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, idx):
        return self.records[idx]

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name)
                         for r in self.records], dtype=float)

    def epochs_to_reach(self, name: str, level: float) -> float | None:
        """Epoch of the first record with ``name <= level``, or ``None``."""
        for r in self.records:
            v = getattr(r, name)
            if v is not None and v <= level:
                return r.epoch
        return None

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS)
            for r in self.records:
                writer.writerow(["" if v is None else repr(v) for v in astuple(r)])

    @classmethod
    def from_csv(cls, path: str | Path) -> "MetricTrace":
        trace = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                vals = {}
                for f in fields(MetricRecord):
                    raw = row[f.name]
                    if raw == "":
                        vals[f.name] = None
                    else:
                        vals[f.name] = int(raw) if f.name == "k" else float(raw)
                trace.append(MetricRecord(**vals))
        return trace


def consensus_error(x: np.ndarray) -> float:
    """``(1/n) ||x - Jx||^2`` for stacked node vectors."""
    x = np.asarray(x, dtype=float)
    return float(np.sum((x - x.mean(axis=0)) ** 2) / x.shape[0])


def aux_sequence(x: np.ndarray, points: np.ndarray) -> float:
    """Mean squared distance between the mean iterate and all table points."""
    x_bar = np.asarray(x, dtype=float).mean(axis=0)
    return float(np.mean(np.sum((points - x_bar) ** 2, axis=-1)))


def record_metrics(net, prob: FiniteSumProblem, f_star: float | None = None) -> MetricRecord:
    if f_star is None:
        f_star = prob.f_star
    x_bar = net.x.mean(axis=0)
    value, grad = prob.value_grad(x_bar)
    points = getattr(net.tables, "points", None) if net.tables is not None else None
    return MetricRecord(
        k=net.k,
        epoch=net.grad_evals / prob.m,
        stationarity_gap=float(np.linalg.norm(grad)),
        consensus_error=consensus_error(net.x),
        optimality_gap=None if f_star is None else value - f_star,
        t_k=None if points is None else aux_sequence(net.x, points),
    )


# Contraction matrices


def _numbers(exact: bool, *vals):
    num = Fraction if exact else float
    return (num,) + tuple(num(v) for v in vals)


def _check_lambda(lam) -> None:
    if not 0 <= lam < 1:
        raise ValueError(f"lambda must lie in [0, 1), got {lam}")


def build_G_alpha(lam, m, n, L, alpha, exact: bool = False) -> np.ndarray:
    """3x3 matrix driving (consensus error, t^k, scaled tracking error)."""
    _check_lambda(lam)
    num, lam, m, n, L, alpha = _numbers(exact, lam, m, n, L, alpha)
    u = 1 - lam**2
    G = [
        [(1 + lam**2) / 2, num(0), 2 * lam**2 * alpha**2 * L**2 / u],
        [9 / (4 * m), 1 - 1 / (4 * m), num(0)],
        [num(30.5) / u, num(97) / 8, (1 + lam**2) / 2],
    ]
    return np.array(G, dtype=object if exact else float)


def g_alpha_offset(lam, m, alpha) -> np.ndarray:
    """Vector multiplying the mean-gradient term in the G-system (inspection only)."""
    _check_lambda(lam)
    return np.array([0.0, 4 * m * alpha**2, 16 * lam**2 * alpha**2 / (1 - lam**2)])


def build_H_alpha(lam, m, n, L, mu, alpha, exact: bool = False) -> np.ndarray:
    """4x4 matrix driving (consensus, scaled optimality gap, t^k, tracking) under PL."""
    _check_lambda(lam)
    num, lam, m, n, L, mu, alpha = _numbers(exact, lam, m, n, L, mu, alpha)
    u = 1 - lam**2
    zero = num(0)
    H = [
        [(1 + lam**2) / 2, zero, zero, 2 * lam**2 * alpha**2 * L**2 / u],
        [alpha * L, 1 - mu * alpha, alpha**2 * L**2 / n, zero],
        [8 * m * alpha**2 * L**2 + 9 / (4 * m), 16 * m * alpha**2 * L**2, 1 - 1 / (4 * m), zero],
        [num(31) / u, 64 * lam**2 * alpha**2 * L**2 / u, num(97) / 8, (1 + lam**2) / 2],
    ]
    return np.array(H, dtype=object if exact else float)


def max_step_g_contraction(lam, n, m, L) -> float:
    """Step bound ``min{(1-lam^2)^2 / (35 lam), sqrt(n / (8m))} / L`` giving rho(G) < 1."""
    _check_lambda(lam)
    first = math.inf if lam == 0 else (1 - lam**2) ** 2 / (35 * lam)
    return min(first, math.sqrt(n / (8 * m))) / L


def g_certificate_vector(lam, exact: bool = False) -> np.ndarray:
    _check_lambda(lam)
    num, lam = _numbers(exact, lam)
    vec = [num(1), num(10), num(303.5) / (1 - lam**2) ** 2]
    return np.array(vec, dtype=object if exact else float)


def h_certificate_vector(lam, n, m, L, mu, alpha, exact: bool = False) -> np.ndarray:
    """Positive vector with ``H s <= (1 - mu alpha / 2) s`` whenever alpha is admissible."""
    _check_lambda(lam)
    num, lam, n, m, L, mu, alpha = _numbers(exact, lam, n, m, L, mu, alpha)
    u = 1 - lam**2
    kappa = L / mu
    s1 = 1 / (4 * kappa)
    s2 = num(1)
    s3 = n / (4 * alpha * kappa * L)
    s4 = 124 / u**2 * s1 + 256 * lam**2 * alpha**2 * L**2 / u**2 * s2 + 97 / (2 * u) * s3
    return np.array([s1, s2, s3, s4], dtype=object if exact else float)


def spectral_radius(M) -> float:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"spectral radius needs a square matrix, got shape {M.shape}")
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def positive_vector_certificate(M, x, beta) -> bool:
    """True iff ``M x <= beta x`` entrywise, which implies ``rho(M) <= beta``.

    No tolerance is applied. Object arrays of ``Fraction`` are compared exactly.
    """
    M, x = np.asarray(M), np.asarray(x)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or x.shape != (M.shape[0],):
        raise ValueError("certificate needs a square matrix and a matching vector")
    if any(v <= 0 for v in x.ravel()):
        raise ValueError("certificate vector must be entrywise positive")
    if any(v < 0 for v in M.ravel()):
        raise ValueError("certificate matrix must be entrywise non-negative")
    lhs = M.dot(x)
    return all(lhs[r] <= beta * x[r] for r in range(len(x)))


def heterogeneity_measure(prob: FiniteSumProblem, x0) -> float:
    """``(1/n) sum_i ||grad f_i(x0)||^2`` at a common starting point."""
    X = np.broadcast_to(np.asarray(x0, dtype=float).reshape(1, prob.p), (prob.n, prob.p))
    return float(np.sum(prob.local_grads(X) ** 2) / prob.n)


@dataclass
class RateFit:
    rate: float
    r2: float
    start: int
    stop: int
    truncated: bool


def fit_linear_rate(trace, burn_in: int | None = None, floor: float | None = None) -> RateFit:
    """Least-squares fit of ``log(gap)`` against ``k`` after ``burn_in`` iterations.

    ``trace`` is a ``MetricTrace`` (its optimality gap is used) or a plain
    sequence indexed by iteration. The window stops before the first value
    at or below ``floor`` (default: ``1e-15`` times the first value) and is
    then reported as truncated. ``burn_in`` defaults to 10% of the window.
    """
    if isinstance(trace, MetricTrace):
        k = trace.column("k")
        gap = trace.column("optimality_gap")
    else:
        gap = np.asarray(trace, dtype=float)
        k = np.arange(len(gap), dtype=float)
    if np.isnan(gap).any():
        raise ValueError("optimality gap missing from trace")
    if floor is None:
        floor = 1e-15 * gap[0]
    below = np.flatnonzero(gap <= floor)
    stop = int(below[0]) if below.size else len(gap)
    truncated = bool(below.size)
    if burn_in is None:
        start = int(np.searchsorted(k, k[0] + 0.1 * (k[stop - 1] - k[0])))
    else:
        start = int(np.searchsorted(k, k[0] + burn_in))
    if stop - start < 2:
        raise ValueError(f"fit window [{start}, {stop}) has fewer than two points")
    kk, yy = k[start:stop], np.log(gap[start:stop])
    slope, intercept = np.polyfit(kk, yy, 1)
    resid = yy - (slope * kk + intercept)
    ss_tot = np.sum((yy - yy.mean()) ** 2)
    r2 = 1.0 if ss_tot == 0 else float(1 - np.sum(resid**2) / ss_tot)
    return RateFit(rate=float(math.exp(slope)), r2=r2, start=start, stop=stop,
                   truncated=truncated)
