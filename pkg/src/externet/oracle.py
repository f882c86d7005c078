"""Exact exhaustive solver and set-function structure checkers.

Everything here exists to back approximation-ratio tests at desk scale:
brute_force enumerates every assignment, the checkers verify
super/submodularity and monotonicity of the per-item set functions
exhaustively over the subset lattice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instance import Allocation, Instance, item_utilities

__all__ = [
    "BRUTE_FORCE_LIMIT",
    "MarginalWitness",
    "MonotoneWitness",
    "OracleResult",
    "StructureCheck",
    "brute_force",
    "check_monotone",
    "check_submodular",
    "check_supermodular",
    "item_set_values",
]

BRUTE_FORCE_LIMIT = 10_000_000
_CHECK_LIMIT = 12
_CHUNK = 200_000


@dataclass(frozen=True)
class OracleResult:
    opt_value: float
    opt_alloc: Allocation
    enumerated: int


def _assignment_chunk(start: int, stop: int, n: int, m: int) -> np.ndarray:
    """Assignment vectors for global indices [start, stop) in lexicographic
    order (index 0 is the most significant digit)."""
    idx = np.arange(start, stop, dtype=np.int64)
    digits = np.empty((idx.size, n), dtype=np.int64)
    for pos in range(n - 1, -1, -1):
        digits[:, pos] = idx % m
        idx //= m
    return digits


def _welfare_of_assignments(inst: Instance, digits: np.ndarray) -> np.ndarray:
    values = np.zeros(digits.shape[0])
    for i in range(inst.m):
        mask = (digits == i).astype(float)
        influence = mask @ inst.weights[i].T
        utilities = item_utilities(inst, i, influence)
        values += (mask * utilities).sum(axis=1)
    return values


def brute_force(inst: Instance, limit: int = BRUTE_FORCE_LIMIT) -> OracleResult:
    """Enumerate all m^n assignments; ties broken by the lexicographically
    smallest assignment vector."""
    total = inst.m**inst.n
    if total > limit:
        raise ValueError(f"instance too large for brute force: {inst.m}^{inst.n} = {total} > {limit}")
    best_value = -np.inf
    best_index = -1
    for start in range(0, total, _CHUNK):
        stop = min(start + _CHUNK, total)
        digits = _assignment_chunk(start, stop, inst.n, inst.m)
        values = _welfare_of_assignments(inst, digits)
        k = int(np.argmax(values))
        if values[k] > best_value:
            best_value = float(values[k])
            best_index = start + k
    assign = _assignment_chunk(best_index, best_index + 1, inst.n, inst.m)[0]
    return OracleResult(opt_value=best_value, opt_alloc=Allocation(assign), enumerated=total)


# --------------------------------------------------------------------------
# Structure checkers over the 2^n subset lattice
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MarginalWitness:
    """Nested pair violating a marginal-return inequality for element elem."""

    A: tuple[int, ...]
    B: tuple[int, ...]
    elem: int
    marginal_A: float
    marginal_B: float


@dataclass(frozen=True)
class MonotoneWitness:
    A: tuple[int, ...]
    B: tuple[int, ...]
    value_A: float
    value_B: float


@dataclass(frozen=True)
class StructureCheck:
    holds: bool
    witness: MarginalWitness | MonotoneWitness | None = None

    def __bool__(self) -> bool:
        return self.holds


def _mask_members(mask: int, n: int) -> tuple[int, ...]:
    return tuple(j for j in range(n) if mask >> j & 1)


def item_set_values(inst: Instance, item: int) -> np.ndarray:
    """f_i(S) for every subset mask S, f_i(S) = sum_{j in S} f_ij(sum_{k in S} a_jk)."""
    n = inst.n
    if n > _CHECK_LIMIT:
        raise ValueError(f"exhaustive set enumeration capped at n <= {_CHECK_LIMIT}, got {n}")
    masks = np.arange(2**n, dtype=np.int64)
    membership = ((masks[:, None] >> np.arange(n)) & 1).astype(float)
    influence = membership @ inst.weights[item].T
    utilities = item_utilities(inst, item, influence)
    return (membership * utilities).sum(axis=1)


def _subset_max(values: np.ndarray, n: int, skip_bit: int | None = None) -> np.ndarray:
    """M[B] = max over A subset of B of values[A] (zeta transform with max)."""
    out = values.copy()
    idx = np.arange(out.size)
    for b in range(n):
        if b == skip_bit:
            continue
        has = (idx >> b & 1) == 1
        np.maximum(out[has], out[idx[has] ^ (1 << b)], out=out[has])
    return out


def _find_extreme_subset(values: np.ndarray, B: int, target: float, tol: float) -> int:
    """Smallest submask A of B with values[A] >= target - tol (deterministic
    witness choice)."""
    best = None
    sub = B
    while True:
        if values[sub] >= target - tol:
            best = sub
        if sub == 0:
            break
        sub = (sub - 1) & B
    if best is None:
        raise AssertionError("subset-max transform inconsistent")
    return best


def _check_marginals(inst: Instance, item: int, sign: float, tol: float) -> StructureCheck:
    """sign=+1 checks nondecreasing marginals (supermodular), sign=-1
    nonincreasing (submodular), exhaustively over all nested A <= B, elem."""
    n = inst.n
    f = item_set_values(inst, item) * sign
    idx = np.arange(2**n)
    for elem in range(n):
        without = (idx >> elem & 1) == 0
        g = np.full(2**n, -np.inf)
        g[without] = f[idx[without] | (1 << elem)] - f[idx[without]]
        biggest = _subset_max(g, n, skip_bit=elem)
        bad = without & (biggest > g + tol)
        if bad.any():
            B = int(idx[bad][0])
            A = _find_extreme_subset(g, B, float(biggest[B]), tol=0.0)
            return StructureCheck(
                holds=False,
                witness=MarginalWitness(
                    A=_mask_members(A, n),
                    B=_mask_members(B, n),
                    elem=elem,
                    marginal_A=float(sign * g[A]),
                    marginal_B=float(sign * g[B]),
                ),
            )
    return StructureCheck(holds=True)


def check_supermodular(inst: Instance, item: int, tol: float = 1e-9) -> StructureCheck:
    """Exhaustively verify f_i(A+l) - f_i(A) <= f_i(B+l) - f_i(B) for all
    nested A <= B and l not in B; returns a violating triple as witness."""
    if not inst.regime.is_positive:
        raise ValueError("supermodularity check applies to positive regimes")
    return _check_marginals(inst, item, sign=1.0, tol=tol)


def check_submodular(inst: Instance, item: int, tol: float = 1e-9) -> StructureCheck:
    """Exhaustive submodularity check of the quadratic set function of a
    NegativeLinear instance."""
    return _check_marginals(inst, item, sign=-1.0, tol=tol)


def check_monotone(inst: Instance, item: int, tol: float = 1e-9) -> StructureCheck:
    """Exhaustive check of f_i(A) <= f_i(B) for all A subset of B."""
    n = inst.n
    f = item_set_values(inst, item)
    biggest = _subset_max(f, n)
    bad = biggest > f + tol
    if bad.any():
        B = int(np.arange(2**n)[bad][0])
        A = _find_extreme_subset(f, B, float(biggest[B]), tol=0.0)
        return StructureCheck(
            holds=False,
            witness=MonotoneWitness(
                A=_mask_members(A, n),
                B=_mask_members(B, n),
                value_A=float(f[A]),
                value_B=float(f[B]),
            ),
        )
    return StructureCheck(holds=True)
