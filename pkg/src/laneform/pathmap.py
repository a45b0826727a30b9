"""Step-synchronized movement tables for a vehicle group.

A table row per vehicle lists the cell it occupies at every planning
cycle: column 0 is the starting cell, later columns are the planned
steps.  Vehicles that finish early repeat their final cell so all rows
share one horizon.  Because every vehicle advances one column per
cycle, two vehicles collide exactly when a column holds duplicate
cells, when a pair trades cells between consecutive columns, or when
two lane changes cross the same lane boundary at the same longitudinal
position.  Collisions are repaired by inserting hold steps, never by
rerouting, so target cells are preserved.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .errors import MalformedInstanceError, ResolutionBudgetError
from .grid import GridPos, grid_distance, is_valid_step


@dataclass
class PathTable:
    """rows[v][k] = cell of vehicle v at cycle k (k = 0 is the start)."""

    rows: list[list[GridPos]]

    @property
    def n_vehicles(self) -> int:
        return len(self.rows)

    @property
    def n_steps(self) -> int:
        return max(len(r) for r in self.rows) - 1 if self.rows else 0

    def final_cells(self) -> list[GridPos]:
        return [row[-1] for row in self.rows]


@dataclass(frozen=True)
class TableViolation:
    """One defect found by verify_table.

    kind is 'row_length', 'bad_step', 'vertex', 'swap' or 'cross'; step
    is the column at which the defect appears (for 'row_length' the
    offending row's length); vehicles lists the row indices involved.
    """

    kind: str
    step: int
    vehicles: tuple[int, ...]


def build_table(
    initial: Sequence[GridPos], paths: Sequence[Sequence[GridPos]]
) -> PathTable:
    """Assemble rows [start] + path, padding short rows with their final cell."""
    if len(initial) != len(paths):
        raise MalformedInstanceError(
            f"{len(initial)} starting cells vs {len(paths)} paths"
        )
    horizon = max((len(p) for p in paths), default=0)
    rows = []
    for start, path in zip(initial, paths):
        row = [start, *path]
        row += [row[-1]] * (horizon - len(path))
        rows.append(row)
    return PathTable(rows)


def _crossing(a0: GridPos, a1: GridPos, b0: GridPos, b1: GridPos) -> bool:
    """Two lane changes crossing one lane boundary in opposite directions at
    the same longitudinal position (equal slot sums).  Opposite crossings
    with differing slot sums pass a full slot apart and are safe."""
    dla, dlb = a1[1] - a0[1], b1[1] - b0[1]
    if dla == 0 or dlb != -dla:
        return False
    if {a0[1], a1[1]} != {b0[1], b1[1]}:
        return False
    return a0[0] + a1[0] == b0[0] + b1[0]


def verify_table(table: PathTable) -> list[TableViolation]:
    """All structural and collision defects in a table; empty when clean.

    Checks row-length equality, per-cycle step validity (at most one
    slot and one lane per cycle), duplicate cells within a column,
    cell trades between consecutive columns, and crossing lane changes.
    """
    rows = table.rows
    out: list[TableViolation] = []
    if not rows:
        return out
    horizon = len(rows[0])
    for v, row in enumerate(rows):
        if len(row) != horizon:
            out.append(TableViolation("row_length", len(row), (v,)))
    common = min(len(r) for r in rows)
    for v, row in enumerate(rows):
        for s in range(1, len(row)):
            step = (row[s][0] - row[s - 1][0], row[s][1] - row[s - 1][1])
            if not is_valid_step(step):
                out.append(TableViolation("bad_step", s, (v,)))
    n = len(rows)
    for s in range(common):
        seen: dict[GridPos, int] = {}
        for v in range(n):
            cell = rows[v][s]
            if cell in seen:
                out.append(TableViolation("vertex", s, (seen[cell], v)))
            else:
                seen[cell] = v
    for s in range(1, common):
        for i in range(n):
            for j in range(i + 1, n):
                a0, a1 = rows[i][s - 1], rows[i][s]
                b0, b1 = rows[j][s - 1], rows[j][s]
                if a0 == a1 or b0 == b1:
                    continue
                if a1 == b0 and b1 == a0:
                    out.append(TableViolation("swap", s, (i, j)))
                elif _crossing(a0, a1, b0, b1):
                    out.append(TableViolation("cross", s, (i, j)))
    return out


def _first_collision(rows: list[list[GridPos]]) -> tuple[str, int, int, int] | None:
    """Earliest collision as (kind, step, i, j); vertex events first within
    a step, then swaps, then crossings, each by lowest vehicle pair."""
    horizon = len(rows[0])
    n = len(rows)
    for s in range(horizon):
        seen: dict[GridPos, int] = {}
        for v in range(n):
            cell = rows[v][s]
            if cell in seen:
                return ("vertex", s, seen[cell], v)
            seen[cell] = v
        if s == 0:
            continue
        for i in range(n):
            for j in range(i + 1, n):
                a0, a1 = rows[i][s - 1], rows[i][s]
                b0, b1 = rows[j][s - 1], rows[j][s]
                if a0 == a1 or b0 == b1:
                    continue
                if a1 == b0 and b1 == a0:
                    return ("swap", s, i, j)
                if _crossing(a0, a1, b0, b1):
                    return ("cross", s, i, j)
    return None


@dataclass
class ResolveEvent:
    """One hold insertion made while resolving a table (for diagnostics)."""

    kind: str
    step: int
    waiter: int
    other: int


def resolve_table(
    table: PathTable,
    targets: Sequence[GridPos],
    budget_factor: int = 4,
) -> PathTable:
    table2, _ = resolve_table_events(table, targets, budget_factor)
    return table2


def resolve_table_events(
    table: PathTable,
    targets: Sequence[GridPos],
    budget_factor: int = 4,
) -> tuple[PathTable, list[ResolveEvent]]:
    """Insert hold steps until the table is collision-free.

    At each collision the vehicle with the smaller remaining distance to
    its target (ties: the lower row index) waits: its cell from the
    previous cycle is duplicated immediately before the collision
    column.  When only one vehicle moves, it yields to the stander,
    except when the stander is parked for the rest of the table; then
    the mover could wait forever, so the stander's arrival is pushed
    back instead.  Other rows are re-padded to the grown horizon and a
    fully redundant trailing column (every vehicle repeating its
    previous cell) is dropped again.  Final cells are never altered.
    The loop is budgeted at n_vehicles * n_steps * budget_factor
    insertions; a table still colliding past the budget (e.g. cell
    trades, which holds cannot fix) raises ResolutionBudgetError.
    """
    rows = [list(r) for r in table.rows]
    if not rows:
        return PathTable([]), []
    if len(targets) != len(rows):
        raise MalformedInstanceError(f"{len(targets)} targets vs {len(rows)} rows")
    if len(set(len(r) for r in rows)) != 1:
        raise MalformedInstanceError("rows must share one horizon")

    budget = max(1, len(rows)) * max(1, len(rows[0]) - 1) * budget_factor
    events: list[ResolveEvent] = []
    while True:
        hit = _first_collision(rows)
        if hit is None:
            break
        kind, step, i, j = hit
        if step == 0:
            raise MalformedInstanceError(
                f"vehicles {i} and {j} share the starting cell {rows[i][0]}"
            )
        if len(events) >= budget:
            raise ResolutionBudgetError(
                f"collision resolution exceeded {budget} hold insertions"
            )
        # a vehicle already standing on the disputed cell gains nothing
        # by waiting (its cell would not change); the mover must yield.
        # But a stander that never moves again is a permanent blocker
        # the mover cannot out-wait: restart the stander's whole route
        # one cycle later instead (a hold at its last hop would leave
        # it standing one cell upstream, still in a follower's way).
        i_moving = rows[i][step] != rows[i][step - 1]
        j_moving = rows[j][step] != rows[j][step - 1]
        at = step
        if i_moving != j_moving:
            mover, stander = (i, j) if i_moving else (j, i)
            srow = rows[stander]
            if all(c == srow[step] for c in srow[step + 1 :]):
                at = next(
                    (k for k in range(1, len(srow)) if srow[k] != srow[k - 1]), 0
                )
                if at == 0:
                    raise ResolutionBudgetError(
                        f"vehicle {stander} is parked on vehicle {mover}'s "
                        "route; hold insertions cannot clear it"
                    )
                waiter, other = stander, mover
            else:
                waiter, other = mover, stander
        else:
            rem_i = grid_distance(rows[i][step], targets[i])
            rem_j = grid_distance(rows[j][step], targets[j])
            if rem_i < rem_j:
                waiter, other = i, j
            elif rem_j < rem_i:
                waiter, other = j, i
            else:
                waiter, other = min(i, j), max(i, j)
        rows[waiter].insert(at, rows[waiter][at - 1])
        horizon = max(len(r) for r in rows)
        for r in rows:
            r += [r[-1]] * (horizon - len(r))
        while horizon >= 2 and all(r[-1] == r[-2] for r in rows):
            for r in rows:
                r.pop()
            horizon -= 1
        events.append(ResolveEvent(kind, step, waiter, other))
    return PathTable(rows), events


_CELL_RE = re.compile(r"\((-?\d+),(-?\d+)\)")


def serialize_table(table: PathTable) -> str:
    """Text form, one line per vehicle: `V3: (2,0) (1,1) (0,2)`."""
    lines = []
    for v, row in enumerate(table.rows):
        cells = " ".join(f"({slot},{lane})" for slot, lane in row)
        lines.append(f"V{v + 1}: {cells}")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_table(text: str) -> PathTable:
    """Inverse of serialize_table; raises on malformed lines."""
    rows: list[list[GridPos]] = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        label, _, rest = line.partition(":")
        if not label.startswith("V") or not _:
            raise MalformedInstanceError(f"bad table line: {line!r}")
        cells = [(int(a), int(b)) for a, b in _CELL_RE.findall(rest)]
        stripped = _CELL_RE.sub("", rest).replace(" ", "")
        if stripped or not cells:
            raise MalformedInstanceError(f"bad table line: {line!r}")
        rows.append(cells)
    return PathTable(rows)
