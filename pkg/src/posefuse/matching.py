"""Set-prediction matching between detector queries and ground-truth classes.

A matching ``sigma`` maps class ``i`` to query ``sigma[i]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_FLOOR = 1e-12
DEFAULT_GAMMA = 10.0


@dataclass(frozen=True)
class MatchResult:
    sigma: tuple[int, ...]
    cost: float


def matching_cost(sigma, probs: np.ndarray, c_g) -> float:
    """Negative sum of the probabilities that the matched query holds each present class."""
    total = 0.0
    for i, q in enumerate(sigma):
        total = total + (-float(c_g[i]) * float(probs[q, i]))
    return total


def solve_assignment(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost perfect matching on a square matrix.

    Shortest augmenting path with row/column potentials, O(n^3). Returns
    ``col_for_row``.
    """
    cost = np.asarray(cost, dtype=float)
    n = cost.shape[0]
    if cost.shape != (n, n):
        raise ValueError("cost matrix must be square")
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    row_of_col = np.zeros(n + 1, dtype=int)  # 1-based; column 0 is the virtual root
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        row_of_col[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of_col[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[row_of_col[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if row_of_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_of_col[j0] = row_of_col[j1]
            j0 = j1
    col_for_row = np.empty(n, dtype=int)
    for j in range(1, n + 1):
        col_for_row[row_of_col[j] - 1] = j - 1
    return col_for_row


def _assignment_value(cost: np.ndarray) -> float:
    if cost.shape[0] == 0 or not cost.any():
        return 0.0
    cols = solve_assignment(cost)
    return float(cost[np.arange(cost.shape[0]), cols].sum())


def hungarian_match(probs: np.ndarray, c_g, tol: float = 1e-9) -> MatchResult:
    """Optimal matching; among optimal ones the lexicographically smallest ``sigma``.

    Ties are common because absent classes contribute nothing to the cost.
    The tie-break fixes ``sigma[0], sigma[1], ...`` greedily to the smallest
    query that still admits an optimal completion.
    """
    probs = np.asarray(probs, dtype=float)
    c_g = np.asarray(c_g, dtype=float)
    n = probs.shape[0]
    # rows = classes, columns = queries
    cost = -(c_g[:, None] * probs.T)
    best = _assignment_value(cost)
    slack = tol * max(1.0, abs(best))

    sigma: list[int] = []
    free_q = list(range(n))
    fixed = 0.0
    for i in range(n):
        rest_rows = np.arange(i + 1, n)
        for q in free_q:
            others = [c for c in free_q if c != q]
            sub = cost[np.ix_(rest_rows, others)]
            if fixed + cost[i, q] + _assignment_value(sub) <= best + slack:
                sigma.append(q)
                fixed += cost[i, q]
                free_q.remove(q)
                break
        else:  # pragma: no cover - only reachable with a broken solver
            raise RuntimeError("tie-break lost the optimum")
    sigma_t = tuple(sigma)
    return MatchResult(sigma_t, matching_cost(sigma_t, probs, c_g))


def keypoint_loss(match: MatchResult, probs: np.ndarray, pred_kp: np.ndarray,
                  gt_c_g, gt_kp: np.ndarray, gamma: float = DEFAULT_GAMMA,
                  null_weight: float = 1.0) -> float:
    """Class negative log-likelihood plus gamma-weighted L1 keypoint error.

    Present class ``i`` is scored as class ``i`` on query ``sigma[i]``; absent
    classes are scored as the no-object class (weighted by ``null_weight``).
    The L1 term sums over every finite ground-truth coordinate.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    probs = np.asarray(probs, dtype=float)
    c_g = np.asarray(gt_c_g)
    n = probs.shape[0]
    null = n - 1
    total = 0.0
    for i, q in enumerate(match.sigma):
        present = bool(c_g[i])
        target = i if present else null
        nll = -np.log(max(float(probs[q, target]), PROB_FLOOR))
        total += nll if present else null_weight * nll
        if present:
            diff = np.asarray(gt_kp[i], dtype=float) - np.asarray(pred_kp[q], dtype=float)
            mask = np.isfinite(np.asarray(gt_kp[i], dtype=float))
            total += gamma * float(np.abs(diff[mask]).sum())
    return float(total)
