"""Data model for multi-item allocation under network externalities.

An instance holds, for every item, an n-by-n matrix of directed influence
weights between agents, plus the externality function each agent applies to
the influence mass it collects from other adopters of the same item.  Four
sign regimes pin down which weight/function combinations are admissible and
which solver pipelines apply.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, NamedTuple

import numpy as np

__all__ = [
    "Allocation",
    "BetaCurvature",
    "CurvatureReport",
    "ExternalityMap",
    "ExternalitySpec",
    "Family",
    "Instance",
    "Regime",
    "beta_curvature",
    "check_fractional",
    "eta",
    "eval_externality",
    "fractional_objective",
    "gamma_curvature",
    "instance_curvature",
    "item_utilities",
    "set_objective",
    "welfare",
    "welfare_binary",
]

ROW_SUM_TOL = 1e-9

# Floor used when evaluating one-sided derivatives of y^p (p < 1) at y = 0,
# where the true right derivative is unbounded.
_DERIV_FLOOR = 1e-9


class Regime(str, enum.Enum):
    POSITIVE_LINEAR = "PositiveLinear"
    POSITIVE_CONVEX = "PositiveConvex"
    POSITIVE_CONCAVE = "PositiveConcave"
    NEGATIVE_LINEAR = "NegativeLinear"

    @property
    def is_positive(self) -> bool:
        return self is not Regime.NEGATIVE_LINEAR


class Family(str, enum.Enum):
    LINEAR = "Linear"
    POLYNOMIAL = "Polynomial"
    POWER_CONCAVE = "PowerConcave"
    LOG_CONCAVE = "LogConcave"


# Families the solvers treat as convex / concave.  Linear sits in both.
CONVEX_FAMILIES = frozenset({Family.LINEAR, Family.POLYNOMIAL})
CONCAVE_FAMILIES = frozenset({Family.LINEAR, Family.POWER_CONCAVE, Family.LOG_CONCAVE})

_REGIME_FAMILIES = {
    Regime.POSITIVE_LINEAR: frozenset({Family.LINEAR}),
    Regime.POSITIVE_CONVEX: CONVEX_FAMILIES,
    Regime.POSITIVE_CONCAVE: CONCAVE_FAMILIES,
    Regime.NEGATIVE_LINEAR: frozenset({Family.LINEAR}),
}


@dataclass(frozen=True)
class ExternalitySpec:
    """One externality function f with f(0) = 0, nondecreasing on [0, inf).

    Families:
      Linear        f(y) = y
      Polynomial    f(y) = sum_t c_t y^t, coefficients (c_1, ..., c_d) >= 0,
                    no constant term, at least one positive coefficient
      PowerConcave  f(y) = y^p with p in (0, 1]
      LogConcave    f(y) = ln(1 + y)
    """

    family: Family
    coefficients: tuple[float, ...] = ()
    exponent: float = 1.0

    def __post_init__(self) -> None:
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        if fam is Family.POLYNOMIAL:
            coeffs = tuple(float(c) for c in self.coefficients)
            if not coeffs:
                raise ValueError("Polynomial externality needs coefficients (c_1, ..., c_d)")
            if any(c < 0 for c in coeffs):
                raise ValueError("Polynomial externality coefficients must be nonnegative")
            if all(c == 0 for c in coeffs):
                raise ValueError("Polynomial externality must have a positive coefficient")
            object.__setattr__(self, "coefficients", coeffs)
        elif self.coefficients:
            raise ValueError(f"{fam.value} externality takes no coefficients")
        if fam is Family.POWER_CONCAVE:
            if not 0.0 < self.exponent <= 1.0:
                raise ValueError("PowerConcave exponent must lie in (0, 1]")

    @property
    def degree(self) -> int:
        """Degree of the polynomial (1 for Linear); undefined for concave families."""
        if self.family is Family.LINEAR:
            return 1
        if self.family is Family.POLYNOMIAL:
            last = max(t for t, c in enumerate(self.coefficients, start=1) if c > 0)
            return last
        raise ValueError(f"{self.family.value} has no polynomial degree")

    @property
    def is_convex(self) -> bool:
        return self.family in CONVEX_FAMILIES

    @property
    def is_concave(self) -> bool:
        return self.family in CONCAVE_FAMILIES

    def value(self, y):
        """Evaluate f at y (scalar or array); raises on negative input."""
        arr = np.asarray(y, dtype=float)
        if np.any(arr < 0):
            raise ValueError("externality functions are defined on y >= 0")
        if self.family is Family.LINEAR:
            out = arr
        elif self.family is Family.POLYNOMIAL:
            out = np.zeros_like(arr)
            for t, c in enumerate(self.coefficients, start=1):
                if c:
                    out = out + c * arr**t
        elif self.family is Family.POWER_CONCAVE:
            out = arr**self.exponent
        else:
            out = np.log1p(arr)
        return float(out) if np.isscalar(y) else out

    def derivative(self, y):
        """Right derivative of f; for y^p with p < 1 the value at 0 is capped."""
        arr = np.asarray(y, dtype=float)
        if self.family is Family.LINEAR:
            out = np.ones_like(arr)
        elif self.family is Family.POLYNOMIAL:
            out = np.zeros_like(arr)
            for t, c in enumerate(self.coefficients, start=1):
                if c:
                    out = out + t * c * arr ** (t - 1)
        elif self.family is Family.POWER_CONCAVE:
            p = self.exponent
            if p == 1.0:
                out = np.ones_like(arr)
            else:
                out = p * np.maximum(arr, _DERIV_FLOOR) ** (p - 1.0)
        else:
            out = 1.0 / (1.0 + arr)
        return float(out) if np.isscalar(y) else out


def eval_externality(spec: ExternalitySpec, y):
    """Evaluate an externality function at y >= 0."""
    return spec.value(y)


class ExternalityMap:
    """Assigns an externality function to every (item, agent) pair.

    A single default spec covers the uniform case; a sparse override dict
    keyed by (item, agent) refines individual pairs.
    """

    def __init__(
        self,
        default: ExternalitySpec | None = None,
        overrides: Mapping[tuple[int, int], ExternalitySpec] | None = None,
    ):
        if default is None and not overrides:
            raise ValueError("externality map needs a default spec or overrides")
        self.default = default
        self.overrides = dict(overrides or {})

    def spec(self, item: int, agent: int) -> ExternalitySpec:
        try:
            return self.overrides[(item, agent)]
        except KeyError:
            if self.default is None:
                raise ValueError(f"no externality spec for item {item}, agent {agent}") from None
            return self.default

    @property
    def is_uniform(self) -> bool:
        return not self.overrides

    def distinct_specs(self) -> list[ExternalitySpec]:
        specs: list[ExternalitySpec] = []
        if self.default is not None:
            specs.append(self.default)
        for s in self.overrides.values():
            if s not in specs:
                specs.append(s)
        return specs

    def pair_specs(self, n: int, m: int) -> Iterator[tuple[int, int, ExternalitySpec]]:
        for i in range(m):
            for j in range(n):
                yield i, j, self.spec(i, j)

    def apply(self, item: int, y: np.ndarray) -> np.ndarray:
        """Apply f_{item,j} along the last axis of y (one slot per agent j)."""
        y = np.maximum(np.asarray(y, dtype=float), 0.0)
        if self.is_uniform:
            return self.default.value(y)
        out = np.empty_like(y)
        for j in range(y.shape[-1]):
            out[..., j] = self.spec(item, j).value(y[..., j])
        return out

    def apply_derivative(self, item: int, y: np.ndarray) -> np.ndarray:
        y = np.maximum(np.asarray(y, dtype=float), 0.0)
        if self.is_uniform:
            return self.default.derivative(y)
        out = np.empty_like(y)
        for j in range(y.shape[-1]):
            out[..., j] = self.spec(item, j).derivative(y[..., j])
        return out


@dataclass(frozen=True)
class Allocation:
    """Integral assignment of exactly one item (0-based index) per agent."""

    assign: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.assign, dtype=np.int64)
        if arr.ndim != 1:
            raise ValueError("allocation must be a 1-D vector of item indices")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "assign", arr)

    @property
    def n(self) -> int:
        return self.assign.shape[0]

    def to_binary(self, m: int) -> np.ndarray:
        x = np.zeros((self.n, m))
        x[np.arange(self.n), self.assign] = 1.0
        return x

    def groups(self, m: int) -> list[np.ndarray]:
        """Agents assigned to each item, as index arrays."""
        return [np.flatnonzero(self.assign == i) for i in range(m)]


@dataclass(frozen=True)
class Instance:
    """An allocation problem: n agents, m items, per-item influence weights.

    weights[i][j][k] is the influence agent k exerts on agent j when both
    adopt item i.  Regime invariants are enforced at construction.
    """

    n: int
    m: int
    weights: np.ndarray
    externality: ExternalityMap
    regime: Regime
    diagonally_dominant: bool = False

    def __post_init__(self) -> None:
        if self.n < 1 or self.m < 1:
            raise ValueError("instance needs n >= 1 agents and m >= 1 items")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.m, self.n, self.n):
            raise ValueError(f"weights must have shape ({self.m}, {self.n}, {self.n}), got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        regime = Regime(self.regime)
        object.__setattr__(self, "regime", regime)

        if regime.is_positive:
            if np.any(w < 0):
                raise ValueError(f"{regime.value} regime requires nonnegative weights")
            if regime is Regime.POSITIVE_CONCAVE:
                sums = w.sum(axis=2)
                if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
                    raise ValueError("PositiveConcave regime requires row-normalized weights")
        else:
            diag = np.diagonal(w, axis1=1, axis2=2)
            if np.any(diag <= 0):
                raise ValueError("NegativeLinear regime requires strictly positive diagonal weights")
            off = w.copy()
            for i in range(self.m):
                np.fill_diagonal(off[i], 0.0)
            if np.any(off > 0):
                raise ValueError("NegativeLinear regime requires nonpositive off-diagonal weights")
            if self.diagonally_dominant and np.any(w.sum(axis=2) < -ROW_SUM_TOL):
                raise ValueError("diagonally_dominant instances need nonnegative row sums")

        allowed = _REGIME_FAMILIES[regime]
        for spec in self.externality.distinct_specs():
            if spec.family not in allowed:
                raise ValueError(
                    f"{spec.family.value} externality is not admissible in the {regime.value} regime"
                )

        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def item_weights(self, i: int) -> np.ndarray:
        return self.weights[i]

    def spec(self, item: int, agent: int) -> ExternalitySpec:
        return self.externality.spec(item, agent)


def _validate_allocation(inst: Instance, alloc: Allocation) -> None:
    if alloc.n != inst.n:
        raise ValueError(f"allocation covers {alloc.n} agents, instance has {inst.n}")
    if np.any(alloc.assign < 0) or np.any(alloc.assign >= inst.m):
        raise ValueError(f"allocation assigns items outside [0, {inst.m})")


def item_utilities(inst: Instance, item: int, influence: np.ndarray) -> np.ndarray:
    """Per-agent utilities f_ij(influence_j); the NegativeLinear regime keeps
    the identity on possibly-negative sums, positive regimes clip float noise."""
    if inst.regime is Regime.NEGATIVE_LINEAR:
        return np.asarray(influence, dtype=float)
    return inst.externality.apply(item, np.maximum(influence, 0.0))


def welfare(inst: Instance, alloc: Allocation) -> float:
    """Total utility of a partition: sum over items i and agents j in S_i of
    f_ij(sum over k in S_i of weight(i, j, k))."""
    _validate_allocation(inst, alloc)
    total = 0.0
    for i in range(inst.m):
        members = alloc.assign == i
        if not members.any():
            continue
        chi = members.astype(float)
        influence = inst.weights[i] @ chi
        utilities = item_utilities(inst, i, influence)
        total += float(utilities[members].sum())
    return total


def welfare_binary(inst: Instance, x: np.ndarray) -> float:
    """Welfare of a binary characteristic matrix with unit row sums.

    Evaluated through the product form sum_{i,j} f_ij(sum_k a_jk x_ji x_ki),
    which agrees with welfare() on valid allocations because f(0) = 0.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (inst.n, inst.m):
        raise ValueError(f"x must have shape ({inst.n}, {inst.m}), got {x.shape}")
    if not np.all((x == 0.0) | (x == 1.0)):
        raise ValueError("x must be binary")
    if np.any(x.sum(axis=1) != 1.0):
        raise ValueError("each row of x must contain exactly one 1")
    return set_objective(inst, x)


def set_objective(inst: Instance, xb: np.ndarray) -> float:
    """Objective sum_{i,j} xb_ji f_ij(sum_k a_jk xb_ki) on any binary matrix.

    Rows may hold any number of ones; this is the raw set function the
    continuous extensions relax.
    """
    xb = np.asarray(xb, dtype=float)
    total = 0.0
    for i in range(inst.m):
        col = xb[:, i]
        if not col.any():
            continue
        influence = inst.weights[i] @ col
        utilities = item_utilities(inst, i, influence)
        total += float((col * utilities).sum())
    return total


def fractional_objective(inst: Instance, x: np.ndarray) -> float:
    """Continuous relaxation objective sum_{i,j} x_ji f_ij(sum_k a_jk x_ki)."""
    x = np.asarray(x, dtype=float)
    total = 0.0
    for i in range(inst.m):
        col = x[:, i]
        influence = inst.weights[i] @ col
        utilities = item_utilities(inst, i, influence)
        total += float((col * utilities).sum())
    return total


def check_fractional(x: np.ndarray, n: int, m: int, tol: float = ROW_SUM_TOL) -> np.ndarray:
    """Validate an n-by-m fractional allocation (entries in [0,1], unit rows)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (n, m):
        raise ValueError(f"fractional allocation must have shape ({n}, {m}), got {x.shape}")
    if np.any(x < -tol) or np.any(x > 1.0 + tol):
        raise ValueError("fractional allocation entries must lie in [0, 1]")
    if np.any(np.abs(x.sum(axis=1) - 1.0) > tol):
        raise ValueError("fractional allocation rows must sum to 1")
    return x


# --------------------------------------------------------------------------
# Curvature diagnostics
# --------------------------------------------------------------------------

GAMMA_GRID_POINTS = 512
GAMMA_GRID_MAX = 1e4
BETA_GRID_POINTS = 400
BETA_GRID_MIN = 0.01
# The clipped grid supremum is flagged unbounded when it still grows by more
# than this factor between the two smallest q rows.
_BETA_GROWTH_FLAG = 1.05


class BetaCurvature(NamedTuple):
    value: float
    unbounded: bool


def gamma_curvature(spec: ExternalitySpec, alpha: float) -> float:
    """inf over z >= 1 of f(alpha z) / f(z) for a convex externality.

    Evaluated on a log-spaced grid together with the z -> infinity limit
    alpha**degree (ratio of leading monomials); for polynomials the ratio is
    eventually monotone, so grid plus limit brackets the infimum.
    """
    if spec.family not in CONVEX_FAMILIES:
        raise ValueError(f"alpha-curvature is defined for convex families, not {spec.family.value}")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if spec.family is Family.LINEAR:
        return float(alpha)
    z = np.geomspace(1.0, GAMMA_GRID_MAX, GAMMA_GRID_POINTS)
    ratios = spec.value(alpha * z) / spec.value(z)
    limit = alpha**spec.degree
    return float(min(ratios.min(), limit))


def beta_curvature(spec: ExternalitySpec) -> BetaCurvature:
    """sup over [0,1]-valued random variables X of f(E[X]) / E[f(X)].

    By concavity and f(0) = 0 the ratio is maximized by two-point
    distributions supported on {0, y}, so a grid over (q, y) in
    [0.01, 1]^2 suffices; if the supremum still grows at the q boundary the
    clipped value is returned with the unbounded flag set.
    """
    if spec.family not in CONCAVE_FAMILIES:
        raise ValueError(f"beta-curvature is defined for concave families, not {spec.family.value}")
    if spec.family is Family.LINEAR:
        return BetaCurvature(1.0, False)
    q = np.linspace(BETA_GRID_MIN, 1.0, BETA_GRID_POINTS)
    y = np.linspace(BETA_GRID_MIN, 1.0, BETA_GRID_POINTS)
    qq, yy = np.meshgrid(q, y, indexing="ij")
    ratios = spec.value(qq * yy) / (qq * spec.value(yy))
    value = float(ratios.max())
    edge = float(ratios[0].max())
    inner = float(ratios[1].max())
    unbounded = value <= edge and edge > _BETA_GROWTH_FLAG * inner
    return BetaCurvature(value, unbounded)


def eta(inst: Instance, x: np.ndarray) -> float:
    """min over (i, j) of (a_j^i . x_i) / ||a_j^i||_2, skipping zero rows.

    Governs the concentration factor 1 - exp(-eta^2 / 2) in the
    independent-rounding guarantee for concave externalities.
    """
    if inst.regime is not Regime.POSITIVE_CONCAVE:
        raise ValueError("eta is defined for the PositiveConcave regime")
    x = check_fractional(x, inst.n, inst.m)
    norms = np.linalg.norm(inst.weights, axis=2)  # (m, n)
    dots = np.einsum("ijk,ki->ij", inst.weights, x)  # (m, n)
    mask = norms > 0
    if not mask.any():
        raise ValueError("instance has no nonzero influence rows")
    return float((dots[mask] / norms[mask]).min())


@dataclass(frozen=True)
class CurvatureReport:
    """Instance-level curvature aggregates; fields are None when the regime
    has no spec of the required shape."""

    gamma_quarter: float | None
    beta: float | None
    beta_unbounded: bool
    eta: float | None


def instance_curvature(inst: Instance, x: np.ndarray | None = None) -> CurvatureReport:
    """Aggregate Gamma_{1/4} (min over pairs), beta (max over pairs) and,
    given a fractional solution, eta."""
    gammas: list[float] = []
    betas: list[BetaCurvature] = []
    for spec in inst.externality.distinct_specs():
        if spec.family in CONVEX_FAMILIES:
            gammas.append(gamma_curvature(spec, 0.25))
        if spec.family in CONCAVE_FAMILIES:
            betas.append(beta_curvature(spec))
    eta_val = None
    if x is not None and inst.regime is Regime.POSITIVE_CONCAVE:
        eta_val = eta(inst, x)
    beta_val = max((b.value for b in betas), default=None)
    return CurvatureReport(
        gamma_quarter=min(gammas) if gammas else None,
        beta=beta_val,
        beta_unbounded=any(b.unbounded for b in betas),
        eta=eta_val,
    )
