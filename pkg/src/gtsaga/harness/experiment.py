"""Run every algorithm of a config and write traces plus a JSON summary."""

from __future__ import annotations

import copy
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from ..algorithms import AlgoConfig, init_network, run
from ..analysis import MetricTrace, fit_linear_rate, heterogeneity_measure
from .config import ExperimentConfig, build_setup, dump_config, parse_config

__all__ = ["StageError", "ExperimentResult", "run_experiment", "expand_sweep", "set_field"]

SUMMARY_FILE = "summary.json"
CONFIG_FILE = "resolved_config.yaml"


class StageError(RuntimeError):
    """Failure inside one stage of an experiment; ``stage`` names it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage


@dataclass
class ExperimentResult:
    output_dir: Path
    summary: dict[str, Any]
    traces: dict[str, MetricTrace]


def _finite(v):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return None
    return v


def _trace_names(cfg: ExperimentConfig) -> list[str]:
    kinds = [a.kind for a in cfg.algorithms]
    return [k if kinds.count(k) == 1 else f"{k}_{i}" for i, k in enumerate(kinds)]


def run_experiment(cfg: ExperimentConfig, output_dir: str | Path | None = None) -> ExperimentResult:
    """Build topology, problem and start point, then run each algorithm entry in turn.

    Writes ``<name>.csv`` per algorithm, ``summary.json`` and the resolved
    config into the output directory. Outputs depend only on the config.
    """
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    try:
        setup = build_setup(cfg)
    except Exception as exc:  # noqa: BLE001 - reported with the stage name
        raise StageError("setup", exc) from exc
    prob, w = setup.problem, setup.mixing

    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / CONFIG_FILE).write_text(dump_config(cfg))
    except OSError as exc:
        raise StageError("output", exc) from exc

    summary: dict[str, Any] = {
        "lambda": w.lam,
        "weight_rule": w.rule,
        "n": prob.n,
        "m": prob.m,
        "p": prob.p,
        "L": prob.L,
        "mu_hat": setup.mu_hat,
        "algorithms": {},
    }
    if cfg.metrics.record_heterogeneity:
        summary["heterogeneity"] = heterogeneity_measure(prob, setup.x0)

    traces = {}
    for name, spec in zip(_trace_names(cfg), cfg.algorithms):
        stage = f"algorithm {name}"
        try:
            net = init_network(prob, setup.x0, seed=spec.seed, kind=spec.kind,
                               keep_points=cfg.metrics.record_t, table=spec.table)
            algo = AlgoConfig(kind=spec.kind, alpha=float(spec.alpha),
                              iterations=spec.iterations, seed=spec.seed,
                              record_every=spec.record_every, stop_below=spec.stop_below)
            trace = run(net, w, prob, algo)
            trace.to_csv(out / f"{name}.csv")
        except Exception as exc:  # noqa: BLE001
            raise StageError(stage, exc) from exc
        traces[name] = trace
        last = trace[-1]
        entry = {
            "kind": spec.kind,
            "alpha": float(spec.alpha),
            "alpha_rule": spec.alpha_rule,
            "binding_term": spec.binding_term,
            "iterations": last.k,
            "final": {
                "epoch": last.epoch,
                "stationarity_gap": last.stationarity_gap,
                "consensus_error": last.consensus_error,
                "optimality_gap": last.optimality_gap,
                "t_k": last.t_k,
            },
        }
        if prob.f_star is not None and len(trace) >= 3:
            try:
                fit = fit_linear_rate(trace)
                entry["rate_fit"] = {"rate": fit.rate, "r2": _finite(fit.r2),
                                     "truncated": fit.truncated}
            except ValueError as exc:
                entry["rate_fit"] = {"error": str(exc)}
        summary["algorithms"][name] = entry

    try:
        (out / SUMMARY_FILE).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise StageError("output", exc) from exc
    return ExperimentResult(output_dir=out, summary=summary, traces=traces)


def set_field(raw: dict, dotted: str, value) -> None:
    """Assign ``value`` at a dotted path; ``algorithms.alpha`` sets it on every algorithm.

    Sections must already exist; leaf fields may be absent (left at their default).
    Unknown leaf names are caught later by config validation.
    """
    head, _, rest = dotted.partition(".")
    if not rest:
        raw[head] = value
        return
    if head not in raw:
        raise KeyError(f"unknown config section {head!r}")
    node = raw[head]
    if isinstance(node, list):
        for item in node:
            set_field(item, rest, value)
    elif isinstance(node, dict):
        set_field(node, rest, value)
    else:
        raise KeyError(f"config field {head!r} is not a section")


def parse_value(text: str):
    """YAML scalar parsing, plus plain floats such as ``1e-3`` that YAML 1.1 reads as strings."""
    value = yaml.safe_load(text)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    return value


def expand_sweep(raw: dict, vary: list[tuple[str, list[str]]]) -> list[tuple[str, ExperimentConfig]]:
    """Cartesian product of the varied fields; values are parsed as YAML scalars.

    Returns ``(label, config)`` pairs, each config writing to its own
    subdirectory named by the label.
    """
    base_out = raw.get("output_dir")
    runs = []
    axes = [[(field, parse_value(v)) for v in values] for field, values in vary]
    for combo in itertools.product(*axes):
        variant = copy.deepcopy(raw)
        for field, value in combo:
            set_field(variant, field, value)
        label = "__".join(f"{f.rsplit('.', 1)[-1]}={v}" for f, v in combo)
        cfg = parse_config(variant)
        cfg.output_dir = str(Path(base_out or cfg.output_dir) / label)
        runs.append((label, cfg))
    return runs
