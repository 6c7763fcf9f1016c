"""Exact minimum-cost transport between two discrete distributions.

Solves the balanced transportation LP with scipy's HiGHS simplex after
cancelling the mass the two distributions share in place. The cancellation
is exact for any metric ground distance (moving shared mass never pays).
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix


def transport_cost(supply: np.ndarray, demand: np.ndarray, cost: np.ndarray) -> float:
    """Optimal objective of the balanced transportation problem.

    supply: (m,) non-negative masses, demand: (n,), cost: (m, n) unit costs.
    Total masses must agree to float precision; the demand side is rescaled
    to balance exactly.
    """
    supply = np.asarray(supply, dtype=np.float64)
    demand = np.asarray(demand, dtype=np.float64)
    cost = np.asarray(cost, dtype=np.float64)
    m, n = cost.shape
    if supply.shape != (m,) or demand.shape != (n,):
        raise ValueError("supply/demand lengths must match the cost matrix")
    s_tot, d_tot = supply.sum(), demand.sum()
    if s_tot <= 0 or d_tot <= 0:
        return 0.0
    if abs(s_tot - d_tot) > 1e-6 * max(s_tot, d_tot):
        raise ValueError(f"unbalanced transport: supply {s_tot} vs demand {d_tot}")
    demand = demand * (s_tot / d_tot)

    # supply conservation rows plus all-but-one demand rows: dropping the
    # redundant last row keeps the system full rank and exactly consistent
    var = np.arange(m * n)
    sup_rows = var // n
    dem_col = var % n
    keep = dem_col < n - 1
    rows = np.concatenate([sup_rows, m + dem_col[keep]])
    cols = np.concatenate([var, var[keep]])
    a_eq = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(m + n - 1, m * n))
    b_eq = np.concatenate([supply, demand[:-1]])
    res = linprog(cost.ravel(), A_eq=a_eq.tocsr(), b_eq=b_eq, method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def grid_emd(p: np.ndarray, q: np.ndarray) -> float:
    """Earth mover's distance between two distributions on the same grid.

    Ground distance is Euclidean between cell centers with unit spacing.
    Shared mass is cancelled first, so only the surplus actually moves.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("grid_emd needs equally shaped distributions")
    diff = p - q
    surplus = diff > 0
    deficit = diff < 0
    if not surplus.any() or not deficit.any():
        return 0.0
    sy, sx = np.nonzero(surplus)
    dy, dx = np.nonzero(deficit)
    cost = np.hypot(sy[:, None] - dy[None, :], sx[:, None] - dx[None, :])
    return transport_cost(diff[surplus], -diff[deficit], cost)
