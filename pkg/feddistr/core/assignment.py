"""Kuhn-Munkres assignment on rectangular cost matrices with forbidden (+inf) edges."""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import InputError
from ..utils.logging_config import get_logger

logger = get_logger(__name__)

Pair = Tuple[int, int]


@dataclass
class Assignment:
    """A partial matching between rows and columns of a cost matrix."""

    pairs: List[Pair] = field(default_factory=list)
    total_cost: float = 0.0

    @property
    def size(self) -> int:
        return len(self.pairs)


class HungarianSolver:
    """
    Minimum-cost perfect matching on a square finite matrix.

    Shortest augmenting paths with row/column potentials, O(n³).
    """

    def __init__(self, cost: np.ndarray):
        self.cost = np.asarray(cost, dtype=float)
        self.n = self.cost.shape[0]

    def solve(self) -> np.ndarray:
        """
        Returns:
            Array ``col_of_row`` with the matched column of every row
        """
        n = self.n
        u = np.zeros(n + 1)
        v = np.zeros(n + 1)
        row_of_col = np.zeros(n + 1, dtype=int)  # 1-based; 0 = free
        way = np.zeros(n + 1, dtype=int)

        for row in range(1, n + 1):
            row_of_col[0] = row
            col = 0
            min_slack = np.full(n + 1, np.inf)
            used = np.zeros(n + 1, dtype=bool)

            while True:
                used[col] = True
                current_row = row_of_col[col]
                free = ~used[1:]
                reduced = self.cost[current_row - 1] - u[current_row] - v[1:]
                improve = free & (reduced < min_slack[1:])
                min_slack[1:][improve] = reduced[improve]
                way[1:][improve] = col

                candidates = np.where(free, min_slack[1:], np.inf)
                next_col = int(np.argmin(candidates)) + 1
                delta = candidates[next_col - 1]

                u[row_of_col[used]] += delta
                v[used] -= delta
                min_slack[~used] -= delta

                col = next_col
                if row_of_col[col] == 0:
                    break

            while col:
                previous = way[col]
                row_of_col[col] = row_of_col[previous]
                col = previous

        col_of_row = np.empty(n, dtype=int)
        for col in range(1, n + 1):
            col_of_row[row_of_col[col] - 1] = col - 1
        return col_of_row


def _validate(cost) -> np.ndarray:
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.size == 0:
        raise InputError(f"Cost matrix must be a nonempty 2-D array, got shape {cost.shape}")
    if np.any(np.isnan(cost)) or np.any(cost == -np.inf):
        raise InputError("Cost matrix entries must be finite or +inf")
    return cost


def _best_matching(cost: np.ndarray) -> Tuple[int, float, List[Pair]]:
    """
    Maximum-cardinality matching over finite edges with minimum cost among those.

    Forbidden edges get a surrogate cost large enough that avoiding one always
    beats any cost difference among finite edges.
    """
    rows, cols = cost.shape
    if rows == 0 or cols == 0:
        return 0, 0.0, []
    finite = np.isfinite(cost)
    if not finite.any():
        return 0, 0.0, []

    n = max(rows, cols)
    largest = float(np.abs(cost[finite]).max())
    surrogate = 2.0 * n * largest + 1.0
    square = np.zeros((n, n))
    square[:rows, :cols] = np.where(finite, cost, surrogate)

    col_of_row = HungarianSolver(square).solve()
    pairs = [
        (row, int(col_of_row[row]))
        for row in range(rows)
        if col_of_row[row] < cols and finite[row, col_of_row[row]]
    ]
    total = float(sum(cost[row, col] for row, col in pairs))
    return len(pairs), total, pairs


def _same_optimum(card_a: int, cost_a: float, card_b: int, cost_b: float) -> bool:
    return card_a == card_b and abs(cost_a - cost_b) <= 1e-9 * max(1.0, abs(cost_a), abs(cost_b))


def km_assign(cost) -> Assignment:
    """
    Minimum-cost matching saturating the smaller side over finite edges.

    When no full matching of the smaller side exists, the maximum feasible
    partial matching over finite entries is returned. Among optimal matchings
    the lexicographically smallest pair list is chosen.

    Args:
        cost: Rectangular matrix of finite or +inf entries

    Returns:
        Assignment

    Raises:
        InputError: If the matrix is empty or holds NaN / -inf
    """
    cost = _validate(cost)
    rows, cols = cost.shape
    target_card, target_cost, _ = _best_matching(cost)
    if target_card == 0:
        return Assignment()

    pairs: List[Pair] = []
    used_cols: List[int] = []
    fixed_cost = 0.0

    # Fix rows in order, taking the smallest column that keeps the optimum reachable
    for row in range(rows):
        remaining_rows = list(range(row + 1, rows))
        for col in range(cols):
            if col in used_cols or not np.isfinite(cost[row, col]):
                continue
            free_cols = [c for c in range(cols) if c not in used_cols and c != col]
            sub_card, sub_cost = _sub_optimum(cost, remaining_rows, free_cols)
            if _same_optimum(len(pairs) + 1 + sub_card, fixed_cost + cost[row, col] + sub_cost,
                             target_card, target_cost):
                pairs.append((row, col))
                used_cols.append(col)
                fixed_cost += cost[row, col]
                break
        else:
            logger.debug(f"Row {row} left unmatched")
        if len(pairs) == target_card:
            break

    total = float(sum(cost[row, col] for row, col in pairs))
    return Assignment(pairs=pairs, total_cost=total)


def _sub_optimum(cost: np.ndarray, rows: Sequence[int], cols: Sequence[int]) -> Tuple[int, float]:
    if not rows or not cols:
        return 0, 0.0
    card, total, _ = _best_matching(cost[np.ix_(list(rows), list(cols))])
    return card, total
