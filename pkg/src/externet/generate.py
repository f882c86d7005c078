"""Random instance generators, one per sign regime.

All draws go through a numpy Generator, so a fixed seed reproduces the same
instance bit for bit.  The graph mode builds Example-style instances where
every agent weighs all of its out-neighbors equally across items.
"""

from __future__ import annotations

import numpy as np

from .instance import ExternalityMap, ExternalitySpec, Family, Instance, Regime
from .seeding import spawn_rng

__all__ = [
    "generate_instance",
    "random_fractional",
    "spec_from_dict",
]


def spec_from_dict(data: dict) -> ExternalitySpec:
    family = Family(data["family"])
    if family is Family.POLYNOMIAL:
        return ExternalitySpec(family, coefficients=tuple(data["coefficients"]))
    if family is Family.POWER_CONCAVE:
        return ExternalitySpec(family, exponent=float(data.get("exponent", 0.5)))
    return ExternalitySpec(family)


def _default_spec(regime: Regime) -> ExternalitySpec:
    if regime is Regime.POSITIVE_CONVEX:
        return ExternalitySpec(Family.POLYNOMIAL, coefficients=(0.0, 1.0))
    if regime is Regime.POSITIVE_CONCAVE:
        return ExternalitySpec(Family.POWER_CONCAVE, exponent=0.5)
    return ExternalitySpec(Family.LINEAR)


def _positive_weights(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    return rng.random((m, n, n))


def _graph_weights(n: int, m: int, rng: np.random.Generator, edge_probability: float) -> np.ndarray:
    """a^i_jk = 1 iff k is an out-neighbor of j in one random digraph shared
    by all items."""
    adjacency = (rng.random((n, n)) < edge_probability).astype(float)
    np.fill_diagonal(adjacency, 0.0)
    return np.broadcast_to(adjacency, (m, n, n)).copy()


def _negative_weights(
    n: int, m: int, rng: np.random.Generator, diagonally_dominant: bool
) -> np.ndarray:
    """Diagonal ~ U[1, 5]; off-diagonal ~ -U[0, 2 diag / (n-1)], optionally
    rescaled so every row sums to >= 0."""
    w = np.zeros((m, n, n))
    for i in range(m):
        diag = rng.uniform(1.0, 5.0, size=n)
        if n > 1:
            off = -rng.uniform(0.0, 1.0, size=(n, n)) * (2.0 * diag[:, None] / (n - 1))
            np.fill_diagonal(off, 0.0)
        else:
            off = np.zeros((n, n))
        if diagonally_dominant:
            deficit = -off.sum(axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                scale = np.where(deficit > diag, diag / deficit, 1.0)
            off *= scale[:, None]
        w[i] = off
        w[i][np.diag_indices(n)] = diag
    return w


def generate_instance(
    regime: Regime | str,
    n: int,
    m: int,
    seed: int | np.random.Generator = 0,
    externality: ExternalitySpec | dict | None = None,
    diagonally_dominant: bool = False,
    graph_mode: bool = False,
    edge_probability: float = 0.5,
) -> Instance:
    """Draw one instance satisfying the regime's weight invariants."""
    regime = Regime(regime)
    rng = np.random.default_rng(seed)
    if isinstance(externality, dict):
        spec = spec_from_dict(externality)
    else:
        spec = externality or _default_spec(regime)

    if regime is Regime.NEGATIVE_LINEAR:
        if graph_mode:
            raise ValueError("graph mode generates nonnegative weights only")
        weights = _negative_weights(n, m, rng, diagonally_dominant)
    elif graph_mode:
        weights = _graph_weights(n, m, rng, edge_probability)
        if regime is Regime.POSITIVE_CONCAVE:
            weights = _normalize_rows(weights, rng)
    else:
        weights = _positive_weights(n, m, rng)
        if regime is Regime.POSITIVE_CONCAVE:
            weights = _normalize_rows(weights, rng)

    return Instance(
        n=n,
        m=m,
        weights=weights,
        externality=ExternalityMap(default=spec),
        regime=regime,
        diagonally_dominant=diagonally_dominant and regime is Regime.NEGATIVE_LINEAR,
    )


def _normalize_rows(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Scale each influence row to sum to one; all-zero rows get a uniform
    profile so the normalization invariant holds."""
    w = weights.copy()
    sums = w.sum(axis=2, keepdims=True)
    zero = sums[..., 0] == 0
    if zero.any():
        n = w.shape[2]
        w[zero] = 1.0 / n
        sums = w.sum(axis=2, keepdims=True)
    return w / sums


def random_fractional(n: int, m: int, seed: int | np.random.Generator = 0) -> np.ndarray:
    """A random row-stochastic matrix (Dirichlet rows)."""
    rng = np.random.default_rng(seed)
    return rng.dirichlet(np.ones(m), size=n)
