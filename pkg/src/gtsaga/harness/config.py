"""Experiment configuration: YAML loading, validation and step-size resolution.

A config has four sections::

    topology:   {kind, n, seed, rule}
    problem:    {kind, m, p, N, dataset, seed, partition, truncate, x0_seed, x0_scale}
    algorithms: [{kind, alpha, iterations, seed, record_every, stop_below, table}, ...]
    metrics:    {record_t, record_heterogeneity}

plus an optional top-level ``output_dir``. ``alpha: auto`` resolves to the
non-convex step bound for GLM problems and to the PL bound (with the
grid-estimated PL constant) for PL problems. Resolution builds the graph and
problem, so semantic errors surface before any iteration runs.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..algorithms import (ALGORITHMS, binding_term, max_step_nonconvex, max_step_pl,
                          nonconvex_step_terms, pl_step_terms)
from ..objectives import (FiniteSumProblem, estimate_pl_constant, make_glm_problem,
                          make_pl_problem)
from ..topology import (DEFAULT_RULES, TOPOLOGY_KINDS, WEIGHT_RULES, MixingMatrix,
                        build_mixing_matrix, build_topology)
from .data import (PARTITION_MODES, Dataset, Shards, generate_dataset, load_dataset_csv,
                   partition)

__all__ = [
    "ConfigError",
    "TopologySpec",
    "ProblemSpec",
    "AlgorithmSpec",
    "MetricsSpec",
    "ExperimentConfig",
    "Setup",
    "OUTPUT_ENV",
    "load_config",
    "parse_config",
    "dump_config",
    "build_setup",
    "resolve",
]

OUTPUT_ENV = "GTSAGA_OUTPUT_DIR"
DEFAULT_OUTPUT = "results"
PROBLEM_KINDS = ("glm", "pl")


class ConfigError(ValueError):
    """Malformed or semantically invalid configuration."""


@dataclass
class TopologySpec:
    kind: str
    n: int
    seed: int = 0
    rule: str | None = None


@dataclass
class ProblemSpec:
    kind: str
    m: int | None = None
    p: int = 20
    N: int | None = None
    dataset: str | None = None
    seed: int = 0
    partition: str = "uniform"
    truncate: bool = False
    x0_seed: int = 0
    x0_scale: float = 1.0


@dataclass
class AlgorithmSpec:
    kind: str
    alpha: float | str = "auto"
    iterations: int = 1000
    seed: int = 0
    record_every: int = 1
    stop_below: float | None = None
    table: str = "dense"
    alpha_rule: str = "given"  # "auto" once an automatic step has been resolved
    binding_term: str | None = None


@dataclass
class MetricsSpec:
    record_t: bool = True
    record_heterogeneity: bool = True


@dataclass
class ExperimentConfig:
    topology: TopologySpec
    problem: ProblemSpec
    algorithms: list[AlgorithmSpec]
    metrics: MetricsSpec = field(default_factory=MetricsSpec)
    output_dir: str = ""

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(eq=False)
class Setup:
    """Everything built from a config before any algorithm runs."""
    mixing: MixingMatrix
    problem: FiniteSumProblem
    x0: np.ndarray
    mu_hat: float | None
    shards: Shards | None


def _section(raw: dict, name: str, cls, required: bool = True):
    data = raw.get(name)
    if data is None:
        if required:
            raise ConfigError(f"missing section '{name}'")
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    return _build(cls, data, name)


def _build(cls, data: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _validate(cfg: ExperimentConfig) -> None:
    t, p = cfg.topology, cfg.problem
    if t.kind not in TOPOLOGY_KINDS:
        raise ConfigError(f"topology.kind: unknown kind {t.kind!r}")
    if not isinstance(t.n, int) or t.n < 1:
        raise ConfigError("topology.n must be a positive integer")
    if t.kind == "grid2d" and math.isqrt(t.n) ** 2 != t.n:
        raise ConfigError(f"topology.n: grid2d needs a perfect square, got {t.n}")
    if t.rule is not None and t.rule not in WEIGHT_RULES:
        raise ConfigError(f"topology.rule: unknown rule {t.rule!r}")
    if p.kind not in PROBLEM_KINDS:
        raise ConfigError(f"problem.kind: unknown kind {p.kind!r}")
    if p.partition not in PARTITION_MODES:
        raise ConfigError(f"problem.partition: unknown mode {p.partition!r}")
    if p.kind == "pl" and (p.m is None or p.m < 1):
        raise ConfigError("problem.m is required for PL problems")
    if p.kind == "glm":
        if p.dataset is None and p.N is None and p.m is None:
            raise ConfigError("GLM problems need problem.m, problem.N or problem.dataset")
        if p.N is not None and p.m is not None and p.partition == "uniform" \
                and p.N != p.m * t.n and not p.truncate:
            raise ConfigError(f"problem.N={p.N} is not n*m={t.n * p.m}; set truncate to drop samples")
        if p.N is not None and p.m is None and p.partition == "uniform" \
                and p.N % t.n and not p.truncate:
            raise ConfigError(f"problem.N={p.N} is not divisible by n={t.n}; set truncate")
    if not cfg.algorithms:
        raise ConfigError("at least one algorithm is required")
    for idx, a in enumerate(cfg.algorithms):
        where = f"algorithms[{idx}]"
        if a.kind not in ALGORITHMS:
            raise ConfigError(f"{where}.kind: unknown algorithm {a.kind!r}")
        if isinstance(a.alpha, str):
            if a.alpha != "auto":
                raise ConfigError(f"{where}.alpha must be a positive number or 'auto'")
        elif isinstance(a.alpha, bool) or not isinstance(a.alpha, (int, float)) or a.alpha <= 0:
            raise ConfigError(f"{where}.alpha must be a positive number or 'auto'")
        if not isinstance(a.iterations, int) or a.iterations < 0:
            raise ConfigError(f"{where}.iterations must be a non-negative integer")
        if not isinstance(a.record_every, int) or a.record_every < 1:
            raise ConfigError(f"{where}.record_every must be a positive integer")
        if a.table not in ("dense", "glm_scalar"):
            raise ConfigError(f"{where}.table must be 'dense' or 'glm_scalar'")
        if a.table == "glm_scalar" and p.kind != "glm":
            raise ConfigError(f"{where}.table: glm_scalar tables need a GLM problem")


def parse_config(raw: Any, default_output: str | None = None) -> ExperimentConfig:
    """Validate a parsed mapping and resolve automatic step sizes."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping with nested sections")
    unknown = set(raw) - {"topology", "problem", "algorithms", "metrics", "output_dir"}
    if unknown:
        raise ConfigError(f"unknown top-level field(s) {sorted(unknown)}")
    algos = raw.get("algorithms")
    if not isinstance(algos, list):
        raise ConfigError("section 'algorithms' must be a list")
    cfg = ExperimentConfig(
        topology=_section(raw, "topology", TopologySpec),
        problem=_section(raw, "problem", ProblemSpec),
        algorithms=[_build(AlgorithmSpec, a, f"algorithms[{i}]") if isinstance(a, dict)
                    else _raise(f"algorithms[{i}] must be a mapping")
                    for i, a in enumerate(algos)],
        metrics=_section(raw, "metrics", MetricsSpec, required=False),
        output_dir=raw.get("output_dir") or default_output
        or os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT),
    )
    _validate(cfg)
    resolve(cfg)
    return cfg


def _raise(msg: str):
    raise ConfigError(msg)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}: parse error{where}") from None
    return parse_config(raw)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def _dataset(p: ProblemSpec, n: int) -> Dataset:
    if p.dataset is not None:
        return load_dataset_csv(p.dataset)
    N = p.N if p.N is not None else n * p.m
    return generate_dataset(N, p.p, p.seed)


def build_setup(cfg: ExperimentConfig) -> Setup:
    """Build mixing matrix, problem and starting point (deterministic in the seeds)."""
    t, p = cfg.topology, cfg.problem
    graph = build_topology(t.kind, t.n, seed=t.seed)
    mixing = build_mixing_matrix(graph, t.rule or DEFAULT_RULES[t.kind])
    shards = None
    mu_hat = None
    if p.kind == "glm":
        ds = _dataset(p, t.n)
        shards = partition(ds, t.n, p.partition, truncate=p.truncate, m=p.m)
        problem = make_glm_problem(shards.features, shards.labels)
    else:
        problem = make_pl_problem(t.n, p.m, p.seed)
        mu_hat = estimate_pl_constant(problem)
    x0 = p.x0_scale * np.random.default_rng(p.x0_seed).standard_normal(problem.p)
    return Setup(mixing=mixing, problem=problem, x0=x0, mu_hat=mu_hat, shards=shards)


def resolve(cfg: ExperimentConfig, setup: Setup | None = None) -> Setup:
    """Fill in every ``alpha: auto`` and record which bound term binds."""
    if setup is None:
        try:
            setup = build_setup(cfg)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    prob, lam = setup.problem, setup.mixing.lam
    cfg.topology.rule = setup.mixing.rule
    cfg.problem.p = prob.p
    if cfg.problem.kind == "glm" and cfg.problem.m is None:
        cfg.problem.m = prob.m
    if lam >= 1:
        raise ConfigError(f"mixing matrix is not primitive (lambda = {lam})")
    for a in cfg.algorithms:
        if a.alpha == "auto" or a.alpha_rule == "auto":
            if setup.mu_hat is not None:
                terms = pl_step_terms(lam, prob.n, prob.m, prob.L, setup.mu_hat)
                a.alpha = max_step_pl(lam, prob.n, prob.m, prob.L, setup.mu_hat)
            else:
                terms = nonconvex_step_terms(lam, prob.n, prob.m, prob.L)
                a.alpha = max_step_nonconvex(lam, prob.n, prob.m, prob.L)
            a.alpha_rule = "auto"
            a.binding_term = binding_term(terms)
        else:
            a.alpha = float(a.alpha)
    return setup
