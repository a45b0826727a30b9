"""Continuous road-frame trajectories for planned grid motion.

Each table row is turned into one cubic Bezier segment per planning
cycle.  The group head reference advances at the cruise speed, so a
cell (slot, lane) at cycle c maps to the road point

    x = head_x0 + cruise_speed * (c * cycle_time) - slot * slot_gap
    y = (lane + 0.5) * lane_width

A hold step therefore spans cruise_speed * cycle_time metres of road; a
one-slot advance adds slot_gap to that and a one-slot drop-back removes
it.  Segments keep road-parallel tangents at both ends so consecutive
segments join with continuous position and heading.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from scipy.integrate import quad

from .errors import GeometryError
from .grid import GridPos


@dataclass(frozen=True)
class RoadPoint:
    """A road-frame sample: longitudinal x, lateral y, absolute time t."""

    x: float
    y: float
    t: float


@dataclass
class BezierSegment:
    """One planning cycle of continuous motion as a cubic Bezier curve.

    Control points keep the end tangents parallel to the road axis:
    p1 = p0 + (shape_fraction * dx, 0) and p2 = p3 - (shape_fraction * dx, 0).
    """

    x0: float
    y0: float
    x3: float
    y3: float
    shape_fraction: float
    t_start: float
    duration: float
    arc_length: float

    @property
    def x1(self) -> float:
        return self.x0 + self.shape_fraction * (self.x3 - self.x0)

    @property
    def y1(self) -> float:
        return self.y0

    @property
    def x2(self) -> float:
        return self.x3 - self.shape_fraction * (self.x3 - self.x0)

    @property
    def y2(self) -> float:
        return self.y3


def cubic_point(p0, p1, p2, p3, u):
    """Cubic Bernstein combination; works on scalars and numpy arrays."""
    w = 1.0 - u
    return w**3 * p0 + 3 * w**2 * u * p1 + 3 * w * u**2 * p2 + u**3 * p3


def cubic_deriv(p0, p1, p2, p3, u):
    """Derivative of cubic_point with respect to u."""
    w = 1.0 - u
    return 3 * (w**2 * (p1 - p0) + 2 * w * u * (p2 - p1) + u**2 * (p3 - p2))


def _bezier_xy(seg: BezierSegment, u):
    """Position at parameter u (scalar or array)."""
    x = cubic_point(seg.x0, seg.x1, seg.x2, seg.x3, u)
    y = cubic_point(seg.y0, seg.y1, seg.y2, seg.y3, u)
    return x, y


def _bezier_dxy(seg: BezierSegment, u):
    """Derivative with respect to u (scalar or array)."""
    dx = cubic_deriv(seg.x0, seg.x1, seg.x2, seg.x3, u)
    dy = cubic_deriv(seg.y0, seg.y1, seg.y2, seg.y3, u)
    return dx, dy


def eval_segment(seg: BezierSegment, u: float) -> tuple[float, float, float]:
    """Point and tangent heading at parameter u in [0, 1].

    Heading is the road-frame tangent angle, zero along +x and positive
    counterclockwise; it is zero at u = 0 and u = 1 by construction.
    """
    if not 0.0 <= u <= 1.0:
        raise GeometryError(f"parameter u = {u} outside [0, 1]")
    x, y = _bezier_xy(seg, u)
    dx, dy = _bezier_dxy(seg, u)
    return x, y, math.atan2(dy, dx)


def make_segment(
    start: RoadPoint,
    end: RoadPoint,
    shape_fraction: float = 1.0 / 3.0,
) -> BezierSegment:
    """Build the cycle segment between two road points.

    shape_fraction places the interior control points as a fraction of
    the longitudinal span; values in (0, 0.5) keep x strictly increasing
    along the curve.  Requires forward progress (end.x > start.x) and
    end.t > start.t.  Arc length is integrated numerically (adaptive
    quadrature, relative tolerance well below 1e-6); for a straight
    segment it equals the chord length.
    """
    if not 0.0 < shape_fraction < 0.5:
        raise GeometryError(f"shape_fraction must be in (0, 0.5), got {shape_fraction}")
    if end.x <= start.x:
        raise GeometryError(
            f"segment must advance along the road: start.x={start.x}, end.x={end.x}"
        )
    if end.t <= start.t:
        raise GeometryError(f"segment needs positive duration, got {end.t - start.t}")
    seg = BezierSegment(
        x0=start.x,
        y0=start.y,
        x3=end.x,
        y3=end.y,
        shape_fraction=shape_fraction,
        t_start=start.t,
        duration=end.t - start.t,
        arc_length=0.0,
    )
    speed = lambda u: math.hypot(*_bezier_dxy(seg, u))
    length, _ = quad(speed, 0.0, 1.0, epsabs=1e-10, epsrel=1e-9, limit=200)
    seg.arc_length = length
    return seg


def cell_to_road(
    cell: GridPos,
    cycle: int,
    head_x0: float,
    cruise_speed: float,
    cycle_time: float,
    slot_gap: float,
    lane_width: float,
    t0: float = 0.0,
) -> RoadPoint:
    """Road point of a grid cell at a given cycle, head anchored at head_x0."""
    slot, lane = cell
    return RoadPoint(
        x=head_x0 + cruise_speed * cycle * cycle_time - slot * slot_gap,
        y=(lane + 0.5) * lane_width,
        t=t0 + cycle * cycle_time,
    )


def compile_row(
    row: Sequence[GridPos],
    head_x0: float,
    cruise_speed: float,
    cycle_time: float,
    slot_gap: float,
    lane_width: float,
    t0: float = 0.0,
    shape_fraction: float = 1.0 / 3.0,
    start_override: tuple[float, float] | None = None,
) -> list[BezierSegment]:
    """One Bezier segment per cycle step of a table row.

    Consecutive segments share their joint point exactly, and because
    every segment ends road-parallel the heading is continuous too.
    start_override replaces the first segment's start with a measured
    road position so a plan can begin from wherever the vehicle actually
    is rather than from the ideal cell.
    """
    points = [
        cell_to_road(
            cell, k, head_x0, cruise_speed, cycle_time, slot_gap, lane_width, t0
        )
        for k, cell in enumerate(row)
    ]
    if start_override is not None:
        points[0] = RoadPoint(start_override[0], start_override[1], points[0].t)
    return [
        make_segment(a, b, shape_fraction) for a, b in zip(points[:-1], points[1:])
    ]


def dump_trajectory_csv(
    path: str,
    trajectories: Iterable[tuple[int, Sequence[BezierSegment]]],
    sample_dt: float = 0.1,
) -> None:
    """Write (vehicle_id, t, x, y, heading) samples for plotting or replay.

    Segments are sampled on their nominal clock (parameter proportional
    to elapsed cycle time); the final point of each vehicle's last
    segment is always included.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["vehicle_id", "t", "x", "y", "heading"])
        for vid, segs in trajectories:
            for k, seg in enumerate(segs):
                n = max(1, round(seg.duration / sample_dt))
                last = n if k == len(segs) - 1 else n - 1
                for m in range(last + 1):
                    u = m / n
                    x, y, heading = eval_segment(seg, u)
                    t = seg.t_start + u * seg.duration
                    writer.writerow(
                        [vid, f"{t:.3f}", f"{x:.4f}", f"{y:.4f}", f"{heading:.6f}"]
                    )
