"""Decentralized finite-sum optimization with GT-SAGA: simulator and analysis tools."""

from .algorithms import (AlgoConfig, DivergenceError, NetworkState, dsgd_step, gt_full_step,
                         gt_saga_step, init_network, max_step_nonconvex, max_step_pl, run)
from .analysis import (MetricRecord, MetricTrace, build_G_alpha, build_H_alpha,
                       fit_linear_rate, heterogeneity_measure, positive_vector_certificate,
                       record_metrics, spectral_radius)
from .objectives import (FiniteSumProblem, GlmProblem, PlProblem, QuadraticProblem,
                         global_value_grad, make_glm_problem, make_pl_problem,
                         smoothness_constant)
from .saga import init_node, saga_estimate, table_update
from .topology import MixingMatrix, build_mixing_matrix, build_topology, mix, spectral_gap

__version__ = "0.1.0"

__all__ = [
    "AlgoConfig",
    "DivergenceError",
    "FiniteSumProblem",
    "GlmProblem",
    "MetricRecord",
    "MetricTrace",
    "MixingMatrix",
    "NetworkState",
    "PlProblem",
    "QuadraticProblem",
    "build_G_alpha",
    "build_H_alpha",
    "build_mixing_matrix",
    "build_topology",
    "dsgd_step",
    "fit_linear_rate",
    "global_value_grad",
    "gt_full_step",
    "gt_saga_step",
    "heterogeneity_measure",
    "init_network",
    "init_node",
    "make_glm_problem",
    "make_pl_problem",
    "max_step_nonconvex",
    "max_step_pl",
    "mix",
    "positive_vector_certificate",
    "record_metrics",
    "run",
    "saga_estimate",
    "smoothness_constant",
    "spectral_gap",
    "spectral_radius",
    "table_update",
]
