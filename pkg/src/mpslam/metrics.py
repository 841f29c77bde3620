"""Run metrics: trajectory RMSE, gauge-invariant synchronization error,
OSPA map error with optimal assignment, and source-separation accuracy.

Every metric is invariant under a common shift of all clock biases; only
bias differences are scored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import wrap_angle

METRICS_HEADER = [
    "step",
    "mt_pos_rmse",
    "mt_orient_rmse",
    "bias_diff_rmse",
    "ospa",
    "ospa_loc",
    "ospa_card",
    "separation_accuracy",
    "n_confirmed",
]


@dataclass(frozen=True)
class OspaResult:
    total: float
    loc: float
    card: float
    # matched (est_index, true_index, distance) pairs of the optimal assignment
    assignment: tuple[tuple[int, int, float], ...]


def bias_difference_rmse(
    est_bs: np.ndarray, est_mt: np.ndarray, true_bs: np.ndarray, true_mt: np.ndarray
) -> float:
    """RMSE of the observable bias differences over all (BS, MT) pairs."""
    est_bs = np.asarray(est_bs, dtype=float)
    est_mt = np.asarray(est_mt, dtype=float)
    err = (est_bs[:, None] - est_mt[None, :]) - (
        np.asarray(true_bs)[:, None] - np.asarray(true_mt)[None, :]
    )
    return float(np.sqrt(np.mean(err**2)))


def ospa(est_xy: np.ndarray, true_xy: np.ndarray, cutoff: float = 2.0, order: float = 1.0) -> OspaResult:
    """Optimal sub-pattern assignment distance between two planar point sets.

    Returns the total metric plus its localization and cardinality parts and
    the optimal matching (reused by separation_accuracy).
    """
    if cutoff <= 0 or order < 1:
        raise ValueError("need cutoff > 0 and order >= 1")
    est_xy = np.asarray(est_xy, dtype=float).reshape(-1, 2)
    true_xy = np.asarray(true_xy, dtype=float).reshape(-1, 2)
    n, k = len(est_xy), len(true_xy)
    if n == 0 and k == 0:
        return OspaResult(0.0, 0.0, 0.0, ())
    if n == 0 or k == 0:
        return OspaResult(float(cutoff), 0.0, float(cutoff), ())
    dist = np.linalg.norm(est_xy[:, None, :] - true_xy[None, :, :], axis=2)
    cost = np.minimum(dist, cutoff) ** order
    rows, cols = linear_sum_assignment(cost)
    big = max(n, k)
    loc_sum = float(cost[rows, cols].sum())
    card_sum = float(cutoff**order) * abs(n - k)
    total = ((loc_sum + card_sum) / big) ** (1.0 / order)
    loc = (loc_sum / big) ** (1.0 / order)
    card = (card_sum / big) ** (1.0 / order)
    assignment = tuple(
        (int(i), int(j), float(dist[i, j])) for i, j in zip(rows, cols)
    )
    return OspaResult(total, loc, card, assignment)


def separation_accuracy(
    assignment,
    est_bs_index: np.ndarray,
    true_bs_index: np.ndarray,
    cutoff: float = 2.0,
) -> tuple[float, int]:
    """Fraction of OSPA-matched pairs (within the cutoff) whose estimated BS
    index matches the true feature's BS; NaN with count 0 when nothing
    matched."""
    est_bs_index = np.asarray(est_bs_index)
    true_bs_index = np.asarray(true_bs_index)
    matched = [(i, j) for i, j, d in assignment if d < cutoff]
    if not matched:
        return float("nan"), 0
    hits = sum(1 for i, j in matched if est_bs_index[i] == true_bs_index[j])
    return hits / len(matched), len(matched)


def position_rmse(est_xy: np.ndarray, true_xy: np.ndarray) -> float:
    est_xy = np.asarray(est_xy, dtype=float).reshape(-1, 2)
    true_xy = np.asarray(true_xy, dtype=float).reshape(-1, 2)
    return float(np.sqrt(np.mean(np.sum((est_xy - true_xy) ** 2, axis=1))))


def orientation_rmse(est_o: np.ndarray, true_o: np.ndarray) -> float:
    err = wrap_angle(np.asarray(est_o) - np.asarray(true_o))
    return float(np.sqrt(np.mean(err**2)))
