"""Threshold-extension machinery for positive convex externalities.

Covers the concave relaxation built from the threshold (Lovasz) extension of
the welfare objective: closed-form and sampled evaluation, the polynomial
expansion into min-terms, the relaxation solver, and the iterative random
threshold rounding that turns a fractional solution into a partition.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
import scipy.sparse

from .config import SolverConfig
from .instance import (
    Allocation,
    Family,
    Instance,
    Regime,
    check_fractional,
    item_utilities,
    set_objective,
)
from .simplex import project_row_stochastic

__all__ = [
    "ExpandedLovasz",
    "RelaxationSolution",
    "MAX_EXPANSION_DEGREE",
    "eval_expanded_lovasz",
    "expand_polynomial",
    "expanded_supergradient",
    "kt_round",
    "lovasz_linear_closed_form",
    "lovasz_sampled",
    "solve_relaxation",
]

MAX_EXPANSION_DEGREE = 3


def _require_positive(inst: Instance) -> None:
    if not inst.regime.is_positive:
        raise ValueError(f"operation requires a positive regime, got {inst.regime.value}")


def lovasz_linear_closed_form(inst: Instance, x: np.ndarray) -> float:
    """sum_i sum_{j,k} a^i_jk min(x_ji, x_ki); exact threshold extension of
    the quadratic objective under linear externalities."""
    if inst.regime is not Regime.POSITIVE_LINEAR:
        raise ValueError(f"closed form requires the PositiveLinear regime, got {inst.regime.value}")
    x = np.asarray(x, dtype=float)
    total = 0.0
    for i in range(inst.m):
        col = x[:, i]
        pairwise_min = np.minimum(col[:, None], col[None, :])
        total += float((inst.weights[i] * pairwise_min).sum())
    return total


def lovasz_sampled(
    inst: Instance, x: np.ndarray, samples: int, seed: int | np.random.Generator = 0
) -> tuple[float, float]:
    """Monte Carlo threshold-extension estimate.

    Each draw thresholds every column i at its own uniform theta_i in (0, 1]
    and evaluates the set objective; returns (mean, standard error).
    """
    _require_positive(inst)
    if samples < 1:
        raise ValueError("samples must be >= 1")
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(seed)
    thetas = 1.0 - rng.random((samples, inst.m))
    values = np.zeros(samples)
    for i in range(inst.m):
        rounded = (x[:, i][None, :] >= thetas[:, i][:, None]).astype(float)  # (samples, n)
        influence = rounded @ inst.weights[i].T
        utilities = item_utilities(inst, i, influence)
        values += (rounded * utilities).sum(axis=1)
    est = float(values.mean())
    stderr = float(values.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return est, stderr


# --------------------------------------------------------------------------
# Polynomial expansion into weighted min-terms
# --------------------------------------------------------------------------


@dataclass
class ExpandedLovasz:
    """Expansion of the objective into nonnegative min-terms.

    Each term is (item, agents, coefficient): coefficient * product of the
    binary variables x_{j,item} over the distinct agents j in the tuple,
    which extends to coefficient * min_j x_{j,item}.  Idempotence of binary
    variables merges repeated indices, so self-influence produces terms of
    arity 1 and the arity never exceeds externality degree + 1.
    """

    n: int
    m: int
    terms: list[tuple[int, tuple[int, ...], float]]
    degree_bound: int
    _groups: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        groups: dict[int, list[tuple[int, tuple[int, ...], float]]] = {}
        for item, agents, coeff in self.terms:
            groups.setdefault(len(agents), []).append((item, agents, coeff))
        prepared = {}
        for arity, entries in groups.items():
            items = np.array([e[0] for e in entries], dtype=np.int64)
            agents = np.array([e[1] for e in entries], dtype=np.int64)
            coeffs = np.array([e[2] for e in entries])
            prepared[arity] = (items, agents, coeffs)
        self._groups = prepared

    def total_coefficient(self) -> float:
        return float(sum(c for _, _, c in self.terms))


def expand_polynomial(inst: Instance) -> ExpandedLovasz:
    """Multinomial expansion of the objective over binary variables.

    Requires Linear or Polynomial externalities of degree <= 3; constant
    terms are absent by construction and zero-weight products are dropped.
    """
    _require_positive(inst)
    accum: dict[tuple[int, tuple[int, ...]], float] = {}
    max_arity = 1
    for i in range(inst.m):
        A = inst.weights[i]
        for j in range(inst.n):
            spec = inst.spec(i, j)
            if spec.family is Family.LINEAR:
                coeffs = (1.0,)
            elif spec.family is Family.POLYNOMIAL:
                coeffs = spec.coefficients
            else:
                raise ValueError(f"cannot expand {spec.family.value} externalities")
            if len(coeffs) > MAX_EXPANSION_DEGREE:
                raise ValueError(
                    f"expansion supports polynomial degree <= {MAX_EXPANSION_DEGREE}, "
                    f"got degree {len(coeffs)}"
                )
            support = [int(k) for k in np.flatnonzero(A[j])]
            for t, c in enumerate(coeffs, start=1):
                if c == 0.0:
                    continue
                for combo in itertools.product(support, repeat=t):
                    w = c * float(np.prod(A[j, list(combo)]))
                    if w == 0.0:
                        continue
                    agents = tuple(sorted({j, *combo}))
                    accum[(i, agents)] = accum.get((i, agents), 0.0) + w
                    max_arity = max(max_arity, len(agents))
    terms = [(i, agents, w) for (i, agents), w in sorted(accum.items()) if w > 0.0]
    return ExpandedLovasz(n=inst.n, m=inst.m, terms=terms, degree_bound=max_arity)


def eval_expanded_lovasz(exp: ExpandedLovasz, x: np.ndarray) -> float:
    """sum over terms of coefficient * min over the tuple's entries in the
    term's item column."""
    x = np.asarray(x, dtype=float)
    if x.shape != (exp.n, exp.m):
        raise ValueError(f"x must have shape ({exp.n}, {exp.m}), got {x.shape}")
    total = 0.0
    for items, agents, coeffs in exp._groups.values():
        vals = x[agents, items[:, None]].min(axis=1)
        total += float(coeffs @ vals)
    return total


def expanded_supergradient(exp: ExpandedLovasz, x: np.ndarray) -> np.ndarray:
    """Supergradient of the min-form objective: each term routes its weight
    to the argmin coordinate of its tuple, ties split equally."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for items, agents, coeffs in exp._groups.values():
        vals = x[agents, items[:, None]]  # (T, r)
        mins = vals.min(axis=1, keepdims=True)
        ties = vals == mins
        share = coeffs[:, None] * ties / ties.sum(axis=1, keepdims=True)
        np.add.at(grad, (agents.ravel(), np.repeat(items, agents.shape[1])), share.ravel())
    return grad


# --------------------------------------------------------------------------
# Relaxation solver
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RelaxationSolution:
    x: np.ndarray
    value: float
    iterations: int
    solver_log: list[tuple[int, float]]
    not_converged: bool = False
    method: str = "exact"


def _solve_lp(exp: ExpandedLovasz) -> tuple[np.ndarray, int]:
    """Exact LP reformulation: maximize sum b_T y_T with y_T <= x_{j, i_T}
    for every agent j in the term, rows of x on the simplex."""
    n, m = exp.n, exp.m
    nx = n * m
    terms = exp.terms
    ny = len(terms)
    cost = np.zeros(nx + ny)
    cost[nx:] = [-coeff for _, _, coeff in terms]

    rows, cols, data = [], [], []
    r = 0
    for t, (item, agents, _) in enumerate(terms):
        for j in agents:
            rows += [r, r]
            cols += [nx + t, j * m + item]
            data += [1.0, -1.0]
            r += 1
    a_ub = scipy.sparse.csr_matrix((data, (rows, cols)), shape=(r, nx + ny))
    b_ub = np.zeros(r)

    eq_rows, eq_cols = [], []
    for j in range(n):
        for i in range(m):
            eq_rows.append(j)
            eq_cols.append(j * m + i)
    a_eq = scipy.sparse.csr_matrix((np.ones(n * m), (eq_rows, eq_cols)), shape=(n, nx + ny))
    b_eq = np.ones(n)

    res = scipy.optimize.linprog(
        cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=(0.0, 1.0), method="highs"
    )
    if not res.success:
        raise RuntimeError(f"relaxation LP failed: {res.message}")
    x = res.x[:nx].reshape(n, m)
    # scrub solver-tolerance noise so downstream feasibility checks pass
    x = project_row_stochastic(np.clip(x, 0.0, 1.0))
    return x, int(res.nit)


def _solve_pgd(exp: ExpandedLovasz, cfg: SolverConfig) -> RelaxationSolution:
    n, m = exp.n, exp.m
    x = np.full((n, m), 1.0 / m)
    grad0 = expanded_supergradient(exp, x)
    col_norms = np.linalg.norm(grad0, axis=0)
    scale = float(col_norms.max())
    c = cfg.step_constant if cfg.step_constant is not None else (1.0 / scale if scale > 0 else 1.0)

    best_x = x.copy()
    best_val = eval_expanded_lovasz(exp, x)
    log = [(0, best_val)]
    last_logged = best_val
    window_start_val = best_val
    for t in range(1, cfg.max_iters + 1):
        g = expanded_supergradient(exp, x)
        x = project_row_stochastic(x + (c / np.sqrt(t)) * g)
        val = eval_expanded_lovasz(exp, x)
        if val > best_val:
            best_val = val
            best_x = x.copy()
        if val > last_logged + 10 * cfg.tolerance or t == cfg.max_iters:
            log.append((t, val))
            last_logged = val
        if t % 500 == 0:
            if best_val - window_start_val < cfg.tolerance:
                return RelaxationSolution(best_x, best_val, t, log, not_converged=False, method="pgd")
            window_start_val = best_val
    still_improving = best_val - window_start_val >= cfg.tolerance
    return RelaxationSolution(
        best_x, best_val, cfg.max_iters, log, not_converged=still_improving, method="pgd"
    )


def solve_relaxation(inst: Instance, cfg: SolverConfig | None = None) -> RelaxationSolution:
    """Maximize the concave min-form relaxation over row-stochastic matrices.

    The default method solves the exact LP reformulation (auxiliary variable
    per min-term); method "pgd" runs projected supergradient ascent instead
    and may undershoot the optimum by the usual O(1/sqrt(T)) margin.
    """
    cfg = cfg or SolverConfig()
    exp = expand_polynomial(inst)
    if not exp.terms:
        x = np.full((inst.n, inst.m), 1.0 / inst.m)
        return RelaxationSolution(x, 0.0, 0, [(0, 0.0)], method=cfg.method)
    if cfg.method == "pgd":
        return _solve_pgd(exp, cfg)
    x, nit = _solve_lp(exp)
    value = eval_expanded_lovasz(exp, x)
    return RelaxationSolution(x, value, nit, [(nit, value)], method="exact")


# --------------------------------------------------------------------------
# Iterative random-threshold rounding
# --------------------------------------------------------------------------


def kt_round(
    inst: Instance,
    x: np.ndarray,
    seed: int | np.random.Generator = 0,
    return_info: bool = False,
):
    """Iterative rounding: repeatedly draw an item i and a threshold theta
    uniformly (item first, then theta = 1 - U in (0, 1]) and assign item i to
    every still-unassigned agent j with x_ji >= theta.

    Terminates with probability 1; a cap of 50 * n * m rounds assigns any
    leftovers to their row-argmax column, flagged in the returned info.
    """
    _require_positive(inst)
    x = check_fractional(x, inst.n, inst.m)
    rng = np.random.default_rng(seed)
    assign = np.full(inst.n, -1, dtype=np.int64)
    rounds = 0
    cap = 50 * inst.n * inst.m
    while (assign < 0).any() and rounds < cap:
        i = int(rng.integers(inst.m))
        theta = 1.0 - rng.random()
        newly = (assign < 0) & (x[:, i] >= theta)
        assign[newly] = i
        rounds += 1
    fallback = bool((assign < 0).any())
    if fallback:
        leftovers = assign < 0
        assign[leftovers] = np.argmax(x[leftovers], axis=1)
    alloc = Allocation(assign)
    if return_info:
        return alloc, {"rounds": rounds, "fallback": fallback}
    return alloc


def solve_lovasz_kt(inst: Instance, cfg=None, algorithm: str = "lovasz-kt"):
    """Relaxation plus iterative threshold rounding, reported with the
    theorem constant: 1/2 for linear externalities, 1/d for polynomial
    objectives whose expansion has maximum monomial arity d."""
    import time

    from .config import ExperimentConfig
    from .instance import welfare
    from .reports import SolveReport
    from .seeding import spawn_rng

    cfg = cfg or ExperimentConfig()
    start = time.perf_counter()
    relax = solve_relaxation(inst, SolverConfig(max_iters=cfg.max_iters))
    exp = expand_polynomial(inst)
    bound = 0.5 if inst.regime is Regime.POSITIVE_LINEAR else 1.0 / max(exp.degree_bound, 2)
    values = np.empty(cfg.rounding_trials)
    fallbacks = 0
    for t in range(cfg.rounding_trials):
        alloc, info = kt_round(inst, relax.x, spawn_rng(cfg.seed, t), return_info=True)
        fallbacks += info["fallback"]
        values[t] = welfare(inst, alloc)
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / np.sqrt(len(values))) if len(values) > 1 else 0.0
    return SolveReport(
        algorithm=algorithm,
        regime=inst.regime.value,
        n=inst.n,
        m=inst.m,
        relaxation_value=relax.value,
        rounded_welfare_mean=mean,
        rounded_welfare_stderr=stderr,
        guarantee_bound=float(bound),
        trials=cfg.rounding_trials,
        seed=cfg.seed,
        diagnostics={
            "kt_fallbacks": fallbacks,
            "expansion_arity": exp.degree_bound,
            "not_converged": relax.not_converged,
        },
        wall_time_ms=(time.perf_counter() - start) * 1e3,
    )
