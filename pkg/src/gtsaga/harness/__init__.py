"""Configuration, data handling and experiment orchestration."""

from .config import (AlgorithmSpec, ConfigError, ExperimentConfig, MetricsSpec, ProblemSpec,
                     TopologySpec, build_setup, dump_config, load_config, parse_config)
from .data import Dataset, Shards, generate_dataset, load_dataset_csv, partition, save_dataset_csv
from .experiment import ExperimentResult, StageError, expand_sweep, run_experiment

__all__ = [
    "AlgorithmSpec",
    "ConfigError",
    "Dataset",
    "ExperimentConfig",
    "ExperimentResult",
    "MetricsSpec",
    "ProblemSpec",
    "Shards",
    "StageError",
    "TopologySpec",
    "build_setup",
    "dump_config",
    "expand_sweep",
    "generate_dataset",
    "load_config",
    "load_dataset_csv",
    "parse_config",
    "partition",
    "run_experiment",
    "save_dataset_csv",
]
