"""Slot assignment and conflict-free path planning for a vehicle group.

Given current cells and an equally sized target set, the planner picks a
minimum-total-distance matching, routes every vehicle along a shortest
grid path, and then repairs the one conflict pattern that waiting cannot
fix: a vehicle parked on its target while another vehicle still has to
drive through that cell.  Swapping the two targets removes the blockage
without changing the total cost, so the repaired matching stays optimal.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import MalformedInstanceError, ResolutionBudgetError
from .grid import GridPos, cost_matrix, grid_distance, is_valid_pos

_COST_TOL = 1e-9


def min_cost_assignment(cost: np.ndarray) -> tuple[list[int], float]:
    """Minimum-cost one-to-one matching of rows (vehicles) to columns (targets).

    Returns (column index per row, total cost).  Among all minimum-cost
    matchings the lexicographically smallest column sequence is returned,
    i.e. ties are broken by letting the lower-indexed vehicle take the
    lower-indexed target.  The tie-break makes results reproducible
    across platforms and LAP implementations.
    """
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise MalformedInstanceError(f"cost matrix must be square, got {c.shape}")
    if c.size and not np.all(np.isfinite(c)):
        raise MalformedInstanceError("cost matrix entries must be finite")
    n = c.shape[0]
    if n == 0:
        return [], 0.0

    def lap(rows: list[int], cols: list[int]) -> float:
        if not rows:
            return 0.0
        sub = c[np.ix_(rows, cols)]
        ri, ci = linear_sum_assignment(sub)
        return float(sub[ri, ci].sum())

    total = lap(list(range(n)), list(range(n)))
    remaining = list(range(n))
    budget = total
    result: list[int] = []
    for i in range(n):
        tail_rows = list(range(i + 1, n))
        for j in remaining:
            rest = [t for t in remaining if t != j]
            if c[i, j] + lap(tail_rows, rest) <= budget + _COST_TOL:
                result.append(j)
                remaining = rest
                budget -= c[i, j]
                break
        else:  # unreachable for finite matrices
            raise MalformedInstanceError("no assignment extends the optimum")
    return result, total


def _move_order(pos: GridPos, goal: GridPos) -> list[tuple[int, int]]:
    """Neighbour moves, preferred first: oblique toward the goal, then the
    straight slot move toward it, then the straight lane move, then all
    remaining moves in (dslot, dlane) lexicographic order."""
    ds = (goal[0] > pos[0]) - (goal[0] < pos[0])
    dl = (goal[1] > pos[1]) - (goal[1] < pos[1])
    preferred = []
    if ds and dl:
        preferred.append((ds, dl))
    if ds:
        preferred.append((ds, 0))
    if dl:
        preferred.append((0, dl))
    rest = [
        (a, b)
        for a in (-1, 0, 1)
        for b in (-1, 0, 1)
        if (a, b) != (0, 0) and (a, b) not in preferred
    ]
    return preferred + rest


def shortest_path(start: GridPos, goal: GridPos, num_lanes: int) -> list[GridPos]:
    """Shortest grid path from start to goal as the cells visited after start.

    A* with the grid travel distance as heuristic.  The pinned expansion
    order of `_move_order` makes the returned path deterministic: oblique
    progress is consumed first, then the leftover straight moves.  The
    length always equals grid_distance(start, goal) since the grid holds
    no obstacles; lane bounds and slot >= 0 are respected.
    """
    for name, pos in (("start", start), ("goal", goal)):
        if not is_valid_pos(pos, num_lanes):
            raise MalformedInstanceError(f"{name} {pos} outside grid with {num_lanes} lanes")
    if start == goal:
        return []

    counter = 0
    open_heap: list[tuple[float, int, GridPos]] = [(grid_distance(start, goal), 0, start)]
    g_score: dict[GridPos, float] = {start: 0.0}
    came_from: dict[GridPos, GridPos] = {}
    while open_heap:
        f, _, pos = heapq.heappop(open_heap)
        if pos == goal:
            path = [pos]
            while path[-1] != start:
                path.append(came_from[path[-1]])
            path.reverse()
            return path[1:]
        if f > g_score[pos] + grid_distance(pos, goal):
            continue  # stale heap entry
        for dslot, dlane in _move_order(pos, goal):
            nxt = (pos[0] + dslot, pos[1] + dlane)
            if not is_valid_pos(nxt, num_lanes):
                continue
            tentative = g_score[pos] + 1.0
            if tentative < g_score.get(nxt, np.inf):
                g_score[nxt] = tentative
                came_from[nxt] = pos
                counter += 1
                heapq.heappush(
                    open_heap, (tentative + grid_distance(nxt, goal), counter, nxt)
                )
    raise MalformedInstanceError(f"no path from {start} to {goal}")  # unreachable


class ConflictKind(Enum):
    """How two planned routes interfere with each other."""

    NONE = "none"
    TARGET_BLOCKED = "target_blocked"  # a target sits on the other path and its
    # owner settles there before the other vehicle clears the cell
    TARGET_PASSABLE = "target_passable"  # target on the other path, but the other
    # vehicle passes through before the owner arrives; hold steps suffice
    PATH_OVERLAP = "path_overlap"  # shared intermediate cells only


def _target_on_path(
    path_i: Sequence[GridPos],
    target_i: GridPos,
    start_j: GridPos,
    path_j: Sequence[GridPos],
) -> ConflictKind | None:
    """Check the one-directional pattern: does target_i lie on path_j?"""
    if target_i not in path_j:
        return None
    # path_j is shortest, so j reaches target_i exactly at this cycle count
    cycles_j = grid_distance(start_j, target_i)
    if len(path_i) < cycles_j:
        return ConflictKind.TARGET_BLOCKED
    return ConflictKind.TARGET_PASSABLE


def classify_conflict(
    start_i: GridPos,
    path_i: Sequence[GridPos],
    target_i: GridPos,
    start_j: GridPos,
    path_j: Sequence[GridPos],
    target_j: GridPos,
) -> ConflictKind:
    """Classify the interference between two routed vehicles.

    Both orientations are checked (i's target on j's path and vice
    versa).  A blocked target anywhere dominates; otherwise a passable
    target; otherwise plain path overlap; otherwise no conflict.  An
    owner arriving exactly when the other vehicle passes counts as
    passable, since one hold step clears it.
    """
    found = {
        _target_on_path(path_i, target_i, start_j, path_j),
        _target_on_path(path_j, target_j, start_i, path_i),
    }
    if ConflictKind.TARGET_BLOCKED in found:
        return ConflictKind.TARGET_BLOCKED
    if ConflictKind.TARGET_PASSABLE in found:
        return ConflictKind.TARGET_PASSABLE
    if set(path_i) & set(path_j):
        return ConflictKind.PATH_OVERLAP
    return ConflictKind.NONE


@dataclass
class GroupPlan:
    """Routed assignment for one vehicle group.

    target_order[i] is the index into the original target list for
    vehicle i; targets[i] the cell itself; paths[i] the cells vehicle i
    visits after its start, ending at targets[i].
    """

    target_order: list[int]
    targets: list[GridPos]
    paths: list[list[GridPos]]
    total_cost: float
    exchanges: int


def _validate_group(vehicles: Sequence[GridPos], targets: Sequence[GridPos], num_lanes: int) -> None:
    if len(vehicles) != len(targets):
        raise MalformedInstanceError(
            f"{len(vehicles)} vehicles vs {len(targets)} targets"
        )
    for kind, cells in (("vehicle", vehicles), ("target", targets)):
        for cell in cells:
            if not is_valid_pos(cell, num_lanes):
                raise MalformedInstanceError(
                    f"{kind} cell {cell} outside grid with {num_lanes} lanes"
                )
        if len(set(cells)) != len(cells):
            raise MalformedInstanceError(f"duplicate {kind} cells")


def conflict_free_assignment(
    vehicles: Sequence[GridPos],
    targets: Sequence[GridPos],
    num_lanes: int,
) -> GroupPlan:
    """Assign targets and routes so no vehicle must drive through a parked one.

    Pipeline: minimum-cost matching, shortest-path routing, then repeated
    target exchanges while any pair is TARGET_BLOCKED.  Each exchange
    reroutes only the two vehicles involved and preserves the total cost
    (a cheaper pair would contradict the optimality of the matching).
    The exchange loop is guarded at n(n-1)/2 iterations; exceeding the
    guard raises instead of looping.
    """
    _validate_group(vehicles, targets, num_lanes)
    n = len(vehicles)
    order, total = min_cost_assignment(cost_matrix(vehicles, targets))
    assigned = [targets[j] for j in order]
    paths = [shortest_path(v, t, num_lanes) for v, t in zip(vehicles, assigned)]

    max_exchanges = n * (n - 1) // 2
    exchanges = 0
    while True:
        blocked_pair = None
        for i in range(n):
            for j in range(i + 1, n):
                kind = classify_conflict(
                    vehicles[i], paths[i], assigned[i],
                    vehicles[j], paths[j], assigned[j],
                )
                if kind is ConflictKind.TARGET_BLOCKED:
                    blocked_pair = (i, j)
                    break
            if blocked_pair:
                break
        if blocked_pair is None:
            break
        if exchanges >= max_exchanges:
            raise ResolutionBudgetError(
                f"target exchanges exceeded the n(n-1)/2 = {max_exchanges} guard"
            )
        i, j = blocked_pair
        order[i], order[j] = order[j], order[i]
        assigned[i], assigned[j] = assigned[j], assigned[i]
        paths[i] = shortest_path(vehicles[i], assigned[i], num_lanes)
        paths[j] = shortest_path(vehicles[j], assigned[j], num_lanes)
        exchanges += 1

    return GroupPlan(order, assigned, paths, total, exchanges)
