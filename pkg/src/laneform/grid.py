"""Discrete slot grid attached to a moving vehicle group.

The grid travels with the group: longitudinal positions are counted in
slots behind the group head (slot 0 is the head row, slots grow rearward)
and lateral positions are lane indices, lane 0 being the bottom lane.
Time is discretized into planning cycles; per cycle a vehicle moves at
most one slot longitudinally and at most one lane laterally, so the
reachable neighbourhood of a cell is its 8-neighbourhood plus holding.
"""

from __future__ import annotations

from enum import Enum
from typing import Iterator, Sequence, Tuple

import numpy as np

from .errors import MalformedInstanceError

# (slot, lane) cell on the moving grid; slot >= 0, lane in [0, num_lanes).
GridPos = Tuple[int, int]

# Per-cycle move (dslot, dlane), each component in {-1, 0, 1}.
GridStep = Tuple[int, int]


class FormationShape(Enum):
    """Target pattern family for a vehicle group."""

    INTERLACED = "interlaced"
    PARALLEL = "parallel"


def is_valid_pos(pos: GridPos, num_lanes: int) -> bool:
    slot, lane = pos
    return slot >= 0 and 0 <= lane < num_lanes


def is_valid_step(step: GridStep) -> bool:
    dslot, dlane = step
    return abs(dslot) <= 1 and abs(dlane) <= 1


def grid_distance(
    a: GridPos,
    b: GridPos,
    straight_weight: float = 1.0,
    oblique_weight: float = 1.0,
) -> float:
    """Travel distance between two cells in weighted per-cycle moves.

    A move is either straight (one slot or one lane) or oblique (one of
    each at once).  The cheapest move sequence uses min(|dslot|, |dlane|)
    oblique moves and the remainder straight, so with unit weights this
    is the Chebyshev distance and equals the minimum number of cycles
    needed to travel between the cells.
    """
    dslot = abs(a[0] - b[0])
    dlane = abs(a[1] - b[1])
    n_oblique = min(dslot, dlane)
    n_straight = max(dslot, dlane) - n_oblique
    return oblique_weight * n_oblique + straight_weight * n_straight


def _pattern_cells(shape: FormationShape, num_lanes: int) -> Iterator[GridPos]:
    """Yield pattern cells ordered by slot, then lane, front to rear."""
    slot = 0
    while True:
        for lane in range(num_lanes):
            if shape is FormationShape.INTERLACED and (slot + lane) % 2:
                continue
            yield (slot, lane)
        slot += 1


def formation_targets(
    shape: FormationShape, num_lanes: int, count: int
) -> list[GridPos]:
    """First `count` cells of the pattern, packed toward the head.

    The interlaced pattern keeps every occupied cell on the even
    checkerboard colour ((slot + lane) even), which leaves a free cell
    diagonally adjacent to each vehicle on both sides.  The parallel
    pattern fills every cell row by row.  The returned list is a prefix
    of the one for any larger count, so growing a group never relocates
    the targets already handed out.
    """
    if num_lanes < 1:
        raise MalformedInstanceError(f"num_lanes must be >= 1, got {num_lanes}")
    if count < 0:
        raise MalformedInstanceError(f"count must be >= 0, got {count}")
    cells = _pattern_cells(shape, num_lanes)
    return [next(cells) for _ in range(count)]


def cost_matrix(
    vehicles: Sequence[GridPos],
    targets: Sequence[GridPos],
    straight_weight: float = 1.0,
    oblique_weight: float = 1.0,
) -> np.ndarray:
    """Square matrix of grid distances, vehicles on rows, targets on columns."""
    if len(vehicles) != len(targets):
        raise MalformedInstanceError(
            f"{len(vehicles)} vehicles vs {len(targets)} targets"
        )
    n = len(vehicles)
    out = np.zeros((n, n))
    for i, v in enumerate(vehicles):
        for j, t in enumerate(targets):
            out[i, j] = grid_distance(v, t, straight_weight, oblique_weight)
    return out
