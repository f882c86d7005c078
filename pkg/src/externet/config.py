"""Solver and experiment configuration containers."""

from __future__ import annotations

from dataclasses import dataclass, field, fields


@dataclass(frozen=True)
class SolverConfig:
    """Relaxation solver knobs (Lovasz and min-form concave relaxations).

    method "exact" solves the equivalent LP / concave program with an
    external solver; "pgd" runs projected supergradient ascent with step
    c / sqrt(t), where c defaults to the inverse max column norm of the
    supergradient at the uniform start.
    """

    max_iters: int = 5000
    step_constant: float | None = None
    tolerance: float = 1e-7
    seed: int = 0
    method: str = "exact"

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.method not in ("exact", "pgd"):
            raise ValueError(f"unknown relaxation method {self.method!r}")


@dataclass(frozen=True)
class PrimalDualConfig:
    """Subgradient dual solver knobs.

    iters defaults to ceil(n * m^2 / epsilon^2) capped at 100000; the step
    size is step_scale / (m * sqrt(n * k)).
    """

    iters: int | None = None
    epsilon: float = 0.1
    step_scale: float = 1.0
    inner_iters: int = 100
    inner_tol: float = 1e-8
    polish_iters: int = 60

    def resolved_iters(self, n: int, m: int) -> int:
        if self.iters is not None:
            return self.iters
        import math

        return min(math.ceil(n * m * m / self.epsilon**2), 100_000)


@dataclass(frozen=True)
class GreedyConfig:
    """Continuous greedy knobs; gradients are exact for quadratic objectives."""

    steps: int = 100


@dataclass(frozen=True)
class ExperimentConfig:
    """Batch experiment description, mirrored by the CLI flags."""

    regime: str = "PositiveLinear"
    n: int = 6
    m: int = 2
    instance_count: int = 10
    rounding_trials: int = 200
    seed: int = 0
    max_iters: int = 5000
    step_scale: float = 1.0
    greedy_steps: int = 100
    mc_samples: int = 2000
    tolerance: float = 0.02
    externality: dict = field(default_factory=lambda: {"family": "Linear"})
    diagonally_dominant: bool = False
    graph_mode: bool = False
    edge_probability: float = 0.5
    output: str | None = None

    def __post_init__(self) -> None:
        for name in ("n", "m", "instance_count", "rounding_trials"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)
