"""Minimum-cost one-to-one assignment with forbidden-pair demotion.

Rectangular cost matrices are padded to square with the forbidden value
(10000, the cap of the fused cost scale) and solved exactly with a
shortest-augmenting-path solver that also yields dual potentials. The
duals drive a second pass that canonicalises ties: among equal-cost
optima the returned matching is the lexicographically smallest pair set
by (row, column). Matched pairs at the forbidden value are demoted to
unassigned afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FORBIDDEN_COST = 10000.0
# absolute slack under which a reduced cost counts as tight; far above the
# float error of the dual updates, far below any genuine cost difference
_TIE_TOL = 1e-7


@dataclass(frozen=True)
class Assignment:
    """One-to-one pairing plus the leftovers on both sides."""

    pairs: tuple[tuple[int, int], ...]
    unassigned_rows: tuple[int, ...]
    unassigned_cols: tuple[int, ...]

    def total_cost(self, costs) -> float:
        costs = np.asarray(costs, dtype=np.float64)
        return float(sum(costs[i, j] for i, j in self.pairs))


def _solve_square(a: np.ndarray):
    """Exact assignment on a square matrix via shortest augmenting paths.

    Returns (col_of_row, u, v) where the duals satisfy
    a[i, j] - u[i] - v[j] >= 0 with equality on matched pairs.
    """
    n = a.shape[0]
    inf = math.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.intp)  # p[j]: 1-based row matched to column j; col 0 is virtual
    way = np.zeros(n + 1, dtype=np.intp)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            cur = a[i0 - 1, :] - u[i0] - v[1:]
            cols = minv[1:]
            improve = ~used[1:] & (cur < cols)
            cols[improve] = cur[improve]
            way[1:][improve] = j0
            masked = np.where(used[1:], inf, cols)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            used_cols = np.flatnonzero(used)
            u[p[used_cols]] += delta
            v[used_cols] -= delta
            cols[~used[1:]] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.zeros(n, dtype=np.intp)
    for j in range(1, n + 1):
        if p[j]:
            col_of_row[p[j] - 1] = j - 1
    return col_of_row, u[1:], v[1:]


def _lexicographically_smallest(tight: np.ndarray, col_of_row: np.ndarray) -> np.ndarray:
    """Smallest perfect matching (by the row-ordered column vector) inside
    the tight-edge graph, seeded with a known perfect matching."""
    n = tight.shape[0]
    match_col = col_of_row.copy()
    row_of_col = np.empty(n, dtype=np.intp)
    row_of_col[match_col] = np.arange(n)
    locked = np.zeros(n, dtype=bool)

    def augment(row: int, visited: np.ndarray) -> bool:
        for j in np.flatnonzero(tight[row]):
            if locked[j] or visited[j]:
                continue
            visited[j] = True
            other = int(row_of_col[j])
            if other == -1 or augment(other, visited):
                match_col[row] = j
                row_of_col[j] = row
                return True
        return False

    for i in range(n):
        for j in np.flatnonzero(tight[i]):
            if locked[j]:
                continue
            current = int(match_col[i])
            if j >= current:
                break  # keeping the current column is the best remaining choice
            displaced = int(row_of_col[j])
            saved_match = match_col.copy()
            saved_rows = row_of_col.copy()
            match_col[i] = j
            row_of_col[j] = i
            row_of_col[current] = -1
            match_col[displaced] = -1
            visited = np.zeros(n, dtype=bool)
            visited[j] = True
            if augment(displaced, visited):
                break
            match_col[:] = saved_match
            row_of_col[:] = saved_rows
        locked[match_col[i]] = True
    return match_col


def solve(costs, forbidden: float = FORBIDDEN_COST) -> Assignment:
    """Minimum-cost matching on the square-padded matrix, forbidden pairs
    demoted to unassigned.

    An empty matrix yields an empty assignment. Costs must be finite and
    lie in [0, forbidden].
    """
    arr = np.asarray(costs, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"cost matrix must be 2-d, got shape {arr.shape}")
    n_rows, n_cols = arr.shape
    if n_rows == 0 or n_cols == 0:
        return Assignment((), tuple(range(n_rows)), tuple(range(n_cols)))
    if not np.all(np.isfinite(arr)):
        raise ValueError("cost matrix contains non-finite values")
    if arr.min() < 0 or arr.max() > forbidden:
        raise ValueError(f"costs must lie in [0, {forbidden}]")

    n = max(n_rows, n_cols)
    padded = np.full((n, n), float(forbidden))
    padded[:n_rows, :n_cols] = arr
    col_of_row, u, v = _solve_square(padded)

    reduced = padded - u[:, None] - v[None, :]
    tight = reduced <= _TIE_TOL
    tight[np.arange(n), col_of_row] = True
    if int(tight.sum()) > n:  # ties exist only if a non-matched edge is tight
        col_of_row = _lexicographically_smallest(tight, col_of_row)

    pairs = []
    for i in range(n_rows):
        j = int(col_of_row[i])
        if j < n_cols and padded[i, j] < forbidden:
            pairs.append((i, j))
    matched_rows = {i for i, _ in pairs}
    matched_cols = {j for _, j in pairs}
    return Assignment(
        pairs=tuple(pairs),
        unassigned_rows=tuple(i for i in range(n_rows) if i not in matched_rows),
        unassigned_cols=tuple(j for j in range(n_cols) if j not in matched_cols),
    )
