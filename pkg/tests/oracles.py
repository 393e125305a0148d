"""Independent reference computations used to pin expected values.

Everything here goes through generic scipy machinery (HiGHS linear
programming, rejection sampling) rather than the package's own solvers, so
agreement between the two routes is meaningful evidence.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix


def lp_transport(cost, supply, demand):
    """Balanced transportation LP solved by HiGHS. Returns (objective, plan)."""
    cost = np.asarray(cost, dtype=float)
    m, n = cost.shape
    rows_i = np.repeat(np.arange(m), n)
    cols_j = np.tile(np.arange(n), m)
    var = np.arange(m * n)
    a_eq = coo_matrix(
        (
            np.ones(2 * m * n),
            (np.r_[rows_i, m + cols_j], np.r_[var, var]),
        ),
        shape=(m + n, m * n),
    )
    b_eq = np.r_[supply, demand]
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    assert res.success, res.message
    return float(res.fun), res.x.reshape(m, n)


def lp_partial(cost, supply, demand, mass):
    """Partial transport LP: marginals are upper bounds, total mass fixed."""
    cost = np.asarray(cost, dtype=float)
    m, n = cost.shape
    rows_i = np.repeat(np.arange(m), n)
    cols_j = np.tile(np.arange(n), m)
    var = np.arange(m * n)
    a_ub = coo_matrix(
        (
            np.ones(2 * m * n),
            (np.r_[rows_i, m + cols_j], np.r_[var, var]),
        ),
        shape=(m + n, m * n),
    )
    b_ub = np.r_[supply, demand]
    a_eq = coo_matrix(np.ones((1, m * n)))
    res = linprog(
        cost.ravel(),
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq,
        b_eq=np.array([mass]),
        bounds=(0, None),
        method="highs",
    )
    assert res.success, res.message
    return float(res.fun), res.x.reshape(m, n)


def monte_carlo_cell_masses(targets, values, region_idx, box_lo, box_hi,
                            n_samples=100_000, seed=7_041_776):
    """Lebesgue mass of the gradient preimages by rejection sampling.

    A sample slope p belongs to target k when k maximizes p . y_k - v_k.
    Counting hits inside [box_lo, box_hi] estimates the same cell volumes
    that the exact half-space construction computes, with independent code.
    """
    rng = np.random.default_rng(seed)
    lo = np.asarray(box_lo, dtype=float)
    hi = np.asarray(box_hi, dtype=float)
    dim = lo.shape[0]
    pts = lo + (hi - lo) * rng.random((n_samples, dim))
    scores = pts @ np.asarray(targets, dtype=float).T - np.asarray(values, dtype=float)
    winner = np.argmax(scores, axis=1)
    vol = float(np.prod(hi - lo))
    counts = np.bincount(winner, minlength=len(values))
    out = np.zeros(len(region_idx), dtype=float)
    for pos, k in enumerate(region_idx):
        out[pos] = counts[k] * vol / n_samples
    return out
