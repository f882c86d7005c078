"""Solvers for multi-item social welfare maximization under network
externalities: exact oracle, threshold-extension relaxations, contention
rounding, primal-dual and continuous-greedy pipelines, plus a CLI."""

from .config import ExperimentConfig, GreedyConfig, PrimalDualConfig, SolverConfig
from .instance import (
    Allocation,
    BetaCurvature,
    CurvatureReport,
    ExternalityMap,
    ExternalitySpec,
    Family,
    Instance,
    Regime,
    beta_curvature,
    eta,
    eval_externality,
    fractional_objective,
    gamma_curvature,
    instance_curvature,
    set_objective,
    welfare,
    welfare_binary,
)
from .oracle import OracleResult, brute_force, check_monotone, check_submodular, check_supermodular
from .reports import SolveReport

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "BetaCurvature",
    "CurvatureReport",
    "ExperimentConfig",
    "ExternalityMap",
    "ExternalitySpec",
    "Family",
    "GreedyConfig",
    "Instance",
    "OracleResult",
    "PrimalDualConfig",
    "Regime",
    "SolveReport",
    "SolverConfig",
    "beta_curvature",
    "brute_force",
    "check_monotone",
    "check_submodular",
    "check_supermodular",
    "eta",
    "eval_externality",
    "fractional_objective",
    "gamma_curvature",
    "instance_curvature",
    "set_objective",
    "welfare",
    "welfare_binary",
]
