"""Machine-readable solve reports and their CSV flattening."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

__all__ = ["CSV_COLUMNS", "SolveReport", "format_csv_value"]


# Fixed, documented CSV column set.  wall_time_ms is deliberately excluded:
# batch CSVs must be byte-identical across runs for a fixed seed.
CSV_COLUMNS = [
    "instance_id",
    "algorithm",
    "regime",
    "n",
    "m",
    "relaxation_value",
    "rounded_welfare_mean",
    "rounded_welfare_stderr",
    "oracle_opt",
    "empirical_ratio",
    "guarantee_bound",
    "eta",
    "beta",
    "beta_unbounded",
    "gamma_quarter",
    "duality_gap",
    "infeasibility",
    "theta_objective_mean",
    "forced_assignments",
    "kt_fallbacks",
    "not_converged",
    "trials",
    "seed",
]


@dataclass
class SolveReport:
    """Outcome of one pipeline run on one instance.

    guarantee_bound carries the dispatched theorem's constant (0.5, 1/d,
    Gamma_{1/4}, 1/beta, 1/e or 1 - 1/e); diagnostics hold the per-regime
    extras (eta, beta, duality gap, fallback counters, flags).
    """

    algorithm: str
    regime: str
    n: int
    m: int
    instance_id: str = ""
    relaxation_value: float | None = None
    rounded_welfare_mean: float | None = None
    rounded_welfare_stderr: float | None = None
    oracle_opt: float | None = None
    empirical_ratio: float | None = None
    guarantee_bound: float | None = None
    trials: int = 0
    seed: int = 0
    diagnostics: dict = field(default_factory=dict)
    wall_time_ms: float = 0.0

    def attach_oracle(self, opt_value: float) -> None:
        self.oracle_opt = float(opt_value)
        if self.rounded_welfare_mean is not None and opt_value > 0:
            self.empirical_ratio = self.rounded_welfare_mean / opt_value

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "algorithm": self.algorithm,
            "regime": self.regime,
            "n": self.n,
            "m": self.m,
            "relaxation_value": self.relaxation_value,
            "rounded_welfare_mean": self.rounded_welfare_mean,
            "rounded_welfare_stderr": self.rounded_welfare_stderr,
            "oracle_opt": self.oracle_opt,
            "empirical_ratio": self.empirical_ratio,
            "guarantee_bound": self.guarantee_bound,
            "trials": self.trials,
            "seed": self.seed,
            "diagnostics": self.diagnostics,
            "wall_time_ms": self.wall_time_ms,
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    def csv_row(self) -> list[str]:
        flat = self.to_dict()
        diag = flat.pop("diagnostics")
        flat.pop("wall_time_ms")
        for key in ("eta", "beta", "beta_unbounded", "gamma_quarter", "duality_gap",
                    "infeasibility", "theta_objective_mean", "forced_assignments",
                    "kt_fallbacks", "not_converged"):
            flat[key] = diag.get(key)
        return [format_csv_value(flat.get(col)) for col in CSV_COLUMNS]


def format_csv_value(value) -> str:
    """Diff-stable CSV cells: floats at 12 significant digits, lowercase
    booleans, empty string for missing values."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)
