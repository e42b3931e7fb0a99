"""Dynamic-programming bidder over (time left, integer budget).

Solves the Bellman recursion against the empirical market price
histogram, assuming prices i.i.d. and independent of the request. A win
at integer price delta requires delta < bid and delta <= budget; the
reward is the impression. long horizons are handled by proportional
budget segmentation over a table solved for a shorter horizon.
"""

from dataclasses import dataclass

import numpy as np

from ..data import PriceHistogram
from ..errors import ConfigError
from .base import ActionGrid


@dataclass
class DpTables:
    value: np.ndarray     # (T+1, B+1)
    policy: np.ndarray    # (T+1, B+1) action indices, smallest maximizer
    horizon: int
    max_budget: int


def rlb_dp_solve(m: PriceHistogram, horizon: int, max_budget: int,
                 grid: ActionGrid) -> DpTables:
    """Value iteration over the exact integer-budget recursion.

    V[t][b] = max_a  sum_{d < a, d <= b} m(d) (1 + V[t-1][b-d])
              + (1 - sum_{d < a, d <= b} m(d)) V[t-1][b]
    """
    probs = m.probs
    if probs.size == 0 or abs(probs.sum() - 1.0) > 1e-9:
        raise ConfigError("price histogram must be normalized")
    T, B = int(horizon), int(max_budget)
    k = len(grid)
    d_top = np.minimum(np.ceil(grid.values).astype(np.int64) - 1, probs.size - 1)

    value = np.zeros((T + 1, B + 1))
    policy = np.zeros((T + 1, B + 1), dtype=np.int32)
    budgets = np.arange(B + 1)
    for t in range(1, T + 1):
        prev = value[t - 1]
        cand = np.empty((k, B + 1))
        for ai in range(k):
            dm = int(d_top[ai])
            win_mass = np.zeros(B + 1)
            total = np.zeros(B + 1)
            for d in range(0, dm + 1):
                p = probs[d]
                if p == 0.0:
                    continue
                total[d:] += p * (1.0 + prev[: B + 1 - d])
                win_mass[d:] += p
            cand[ai] = total + (1.0 - win_mass) * prev
        policy[t] = np.argmax(cand, axis=0)  # first max = smallest bid
        value[t] = cand[policy[t], budgets]
    return DpTables(value, policy, T, B)


def rlb_act(tables: DpTables, grid: ActionGrid, budget: float, time_left: int) -> float:
    """Segmented lookup: the remaining episode splits into ceil(t/T_s)
    segments and the current segment is granted budget / segments."""
    if time_left <= 0 or budget <= 0:
        return 0.0
    T_s = tables.horizon
    segments = int(np.ceil(time_left / T_s))
    b_seg = budget / segments
    t_idx = time_left % T_s
    if t_idx == 0:
        t_idx = T_s
    b_idx = int(round(min(b_seg, tables.max_budget)))
    bid = float(grid.values[tables.policy[t_idx, b_idx]])
    return min(bid, budget)


class RlbAgent:
    def __init__(self, tables: DpTables, grid: ActionGrid):
        self.tables = tables
        self.grid = grid

    def bid(self, obs) -> float:
        return rlb_act(self.tables, self.grid, obs.budget, obs.time_left)
