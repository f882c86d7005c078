"""Exact Euclidean projection onto the probability simplex."""

from __future__ import annotations

import numpy as np

__all__ = ["project_simplex", "project_row_stochastic"]


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Project v onto {x >= 0, sum x = 1} via the sort-based pivot rule."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, v.size + 1)
    cond = u - (css - 1.0) / k > 0
    rho = np.nonzero(cond)[0][-1]
    tau = (css[rho] - 1.0) / (rho + 1)
    return np.maximum(v - tau, 0.0)


def project_row_stochastic(x: np.ndarray) -> np.ndarray:
    """Row-wise simplex projection of an n-by-m matrix; exact and idempotent."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected an n-by-m matrix")
    out = np.empty_like(x)
    for j in range(x.shape[0]):
        out[j] = project_simplex(x[j])
    return out
