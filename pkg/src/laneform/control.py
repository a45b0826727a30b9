"""Vehicle models and tracking control.

Kinematics
----------
The kinematic bicycle here measures its heading from the road's lateral
axis: heading pi/2 points straight down the road (+x) and positive
steering rotates the velocity toward -y.  Concretely

    x' = v sin(heading)      y' = v cos(heading)
    v' = a                   heading' = (v / wheelbase) tan(steer)

`road_heading` converts to the conventional angle (zero along +x,
counterclockwise positive) for export and for comparing against
trajectory tangents.

Speed planning
--------------
A plan covers consecutive cycle segments of known arc length.  The
planner minimizes the sum of squared per-tick accelerations subject to
hitting every segment boundary position exactly on its cycle tick,
returning to the cruise speed at the end, and respecting speed and
acceleration boxes.  Eliminating the forward-Euler dynamics turns this
into a small dense quadratic program in the acceleration sequence; an
active-set loop on the box constraints solves it to tight KKT residuals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleSegmentError, LaneformError, TrackingLostError
from .trajectory import BezierSegment, _bezier_dxy, _bezier_xy

MAX_STEER = math.radians(40.0)


@dataclass
class MotionLimits:
    v_min: float = 0.0
    v_max: float = 33.3
    a_min: float = -10.0
    a_max: float = 5.0


@dataclass
class VehicleState:
    x: float
    y: float
    speed: float
    heading: float = math.pi / 2  # straight along the road
    wheelbase: float = 2.8


def bicycle_kernel(x, y, v, heading, accel, steer, dt, wheelbase, limits: MotionLimits):
    """Forward-Euler bicycle update on scalars or numpy arrays.

    All derivatives are evaluated at the current state; acceleration is
    clipped to the actuator box and speed saturates at the limits.
    """
    accel = np.clip(accel, limits.a_min, limits.a_max)
    steer = np.clip(steer, -MAX_STEER, MAX_STEER)
    x_new = x + v * np.sin(heading) * dt
    y_new = y + v * np.cos(heading) * dt
    v_new = np.clip(v + accel * dt, limits.v_min, limits.v_max)
    heading_new = heading + v / wheelbase * np.tan(steer) * dt
    return x_new, y_new, v_new, heading_new


def step_bicycle(
    state: VehicleState,
    accel: float,
    steer: float,
    dt: float,
    limits: MotionLimits,
) -> VehicleState:
    x, y, v, heading = bicycle_kernel(
        state.x, state.y, state.speed, state.heading,
        accel, steer, dt, state.wheelbase, limits,
    )
    return VehicleState(float(x), float(y), float(v), float(heading), state.wheelbase)


def road_heading(heading: float) -> float:
    """Conventional road-frame angle (0 along +x, CCW positive)."""
    return math.pi / 2 - heading


# ---------------------------------------------------------------------------
# speed-profile planning


@dataclass
class SpeedPlan:
    accel: np.ndarray  # per-tick acceleration commands, length n_segments * ticks_per_segment
    dt: float
    ticks_per_segment: int
    seg_lengths: np.ndarray
    waypoints: np.ndarray  # cumulative positions to hit at each segment boundary
    start_speed: float
    end_speed: float
    cost: float  # sum of squared accelerations
    kkt_residual: float
    positions: np.ndarray = field(repr=False)  # s(k), k = 0..n
    speeds: np.ndarray = field(repr=False)  # v(k), k = 0..n


def _plan_grid(cycle_time: float, dt: float) -> int:
    ticks = cycle_time / dt
    if abs(ticks - round(ticks)) > 1e-9:
        raise LaneformError(
            f"cycle_time {cycle_time} must be an integer number of dt {dt} ticks"
        )
    return round(ticks)


def _reach_bounds(v0: float, ticks: int, dt: float, limits: MotionLimits):
    """Min and max distance coverable in `ticks` from speed v0 (discrete)."""
    lo = hi = 0.0
    v_lo = v_hi = v0
    for _ in range(ticks):
        lo += v_lo * dt
        hi += v_hi * dt
        v_lo = max(limits.v_min, v_lo + limits.a_min * dt)
        v_hi = min(limits.v_max, v_hi + limits.a_max * dt)
    return lo, hi


def _solve_working_set(
    A: np.ndarray, rhs: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Minimum-norm a with A a = rhs: a = A^T (A A^T)^-1 rhs.

    Returns (a, w) where w solves the small dense system; the constraint
    multipliers are -2 w for the squared-norm objective.
    """
    gram = A @ A.T
    try:
        w = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        w = np.linalg.lstsq(gram, rhs, rcond=None)[0]
    return A.T @ w, w


def solve_speed_profile(
    seg_lengths,
    cruise_speed: float,
    limits: MotionLimits,
    cycle_time: float = 5.0,
    dt: float = 0.1,
    start_speed: float | None = None,
    end_speed: float | None = None,
    _waypoint_offset: float = 0.0,
    _segment_offset: int = 0,
) -> SpeedPlan:
    """Minimum-effort speed profile through fixed segment-boundary positions.

    seg_lengths are the arc lengths of the coming cycle segments; the
    vehicle starts at position 0 with start_speed (default cruise_speed)
    and must be at sum(seg_lengths[:i]) exactly i cycles later, ending
    at end_speed (default cruise_speed).  Raises InfeasibleSegmentError
    naming the offending segment when a segment cannot be met under the
    motion limits.
    """
    S = np.asarray(seg_lengths, dtype=float)
    if S.ndim != 1 or S.size == 0:
        raise LaneformError("need at least one segment length")
    v0 = cruise_speed if start_speed is None else float(start_speed)
    v_end = cruise_speed if end_speed is None else float(end_speed)
    n_seg = S.size
    ticks = _plan_grid(cycle_time, dt)
    n = n_seg * ticks

    tol = 1e-7
    for i, s_i in enumerate(S):
        if s_i > limits.v_max * cycle_time + tol or s_i < limits.v_min * cycle_time - tol:
            raise InfeasibleSegmentError(
                i + _segment_offset,
                f"length {s_i:.3f} m outside [{limits.v_min * cycle_time:.3f}, "
                f"{limits.v_max * cycle_time:.3f}] m reachable per cycle",
            )
    lo, hi = _reach_bounds(v0, ticks, dt, limits)
    if not lo - 1e-6 <= S[0] <= hi + 1e-6:
        raise InfeasibleSegmentError(
            _segment_offset,
            f"length {S[0]:.3f} m unreachable from {v0:.3f} m/s "
            f"(reachable range [{lo:.3f}, {hi:.3f}] m)",
        )

    waypoints = np.cumsum(S)
    # equality rows: s(i * ticks) = waypoints[i-1], plus v(n) = v_end
    m = n_seg + 1
    E = np.zeros((m, n))
    b = np.zeros(m)
    for i in range(1, n_seg + 1):
        k_i = i * ticks
        E[i - 1, :k_i] = dt * dt * (k_i - 1 - np.arange(k_i))
        b[i - 1] = waypoints[i - 1] - k_i * dt * v0
    E[-1, :] = dt
    b[-1] = v_end - v0

    # box constraints in <= form: q . a <= r
    # acceleration bounds are coordinate bounds; speed bounds are prefix sums
    def speed_row(k: int, sign: float) -> np.ndarray:
        q = np.zeros(n)
        q[: k + 1] = sign * dt  # v(k+1) - v0 = dt * sum(a[0..k])
        return q

    def speeds_of(a: np.ndarray) -> np.ndarray:
        return np.concatenate(([v0], v0 + np.cumsum(a) * dt))

    def positions_of(a: np.ndarray) -> np.ndarray:
        v = speeds_of(a)
        return np.concatenate(([0.0], np.cumsum(v[:-1]) * dt))

    box_tol = 1e-9
    a, _ = _solve_working_set(E, b)

    def violations(a: np.ndarray) -> list[tuple[float, str, int, float]]:
        out = []
        over_a = a - limits.a_max
        under_a = limits.a_min - a
        v = speeds_of(a)
        over_v = v[1:-1] - limits.v_max  # v(n) pinned by equality
        under_v = limits.v_min - v[1:-1]
        for arr, kind in ((over_a, "a_hi"), (under_a, "a_lo"), (over_v, "v_hi"), (under_v, "v_lo")):
            k = int(np.argmax(arr)) if arr.size else 0
            if arr.size and arr[k] > box_tol:
                out.append((float(arr[k]), kind, k, 0.0))
        return out

    working: list[tuple[str, int]] = []
    if violations(a):
        max_iter = 8 * (n_seg + 2) + 60
        seen: set[frozenset] = set()
        for _ in range(max_iter):
            rows = [E]
            rhs = [b]
            for kind, k in working:
                if kind == "a_hi":
                    q = np.zeros(n); q[k] = 1.0; r = limits.a_max
                elif kind == "a_lo":
                    q = np.zeros(n); q[k] = -1.0; r = -limits.a_min
                elif kind == "v_hi":
                    q = speed_row(k, 1.0); r = limits.v_max - v0
                else:  # v_lo
                    q = speed_row(k, -1.0); r = -(limits.v_min - v0)
                rows.append(q[None, :])
                rhs.append(np.array([r]))
            A = np.vstack(rows)
            rr = np.concatenate(rhs)
            a, w = _solve_working_set(A, rr)
            viol = violations(a)
            if viol:
                worst = max(viol)
                cand = (worst[1], worst[2])
                if cand in working:  # numerical stall
                    break
                working.append(cand)
            else:
                mu = -2.0 * w[m:]
                if mu.size == 0 or mu.min() >= -1e-9:
                    break
                working.pop(int(np.argmin(mu)))
            key = frozenset(working)
            if key in seen and not viol:
                break
            seen.add(key)
        else:
            raise LaneformError("speed-profile active set failed to settle")

    # KKT residual: multipliers against the final working set
    rows = [E]
    for kind, k in working:
        if kind == "a_hi":
            q = np.zeros(n); q[k] = 1.0
        elif kind == "a_lo":
            q = np.zeros(n); q[k] = -1.0
        elif kind == "v_hi":
            q = speed_row(k, 1.0)
        else:
            q = speed_row(k, -1.0)
        rows.append(q[None, :])
    A = np.vstack(rows)
    w = np.linalg.lstsq(A.T, -2.0 * a, rcond=None)[0]
    stationarity = float(np.max(np.abs(2.0 * a + A.T @ w)))
    primal = float(np.max(np.abs(E @ a - b)))
    box_viol = max((v[0] for v in violations(a)), default=0.0)
    kkt = max(stationarity, primal, box_viol)

    positions = positions_of(a) + _waypoint_offset
    if primal > 1e-6:
        bad = int(np.argmax(np.abs(E[:-1] @ a - b[:-1]))) if n_seg else 0
        raise InfeasibleSegmentError(
            bad + _segment_offset,
            f"waypoint missed by {primal:.2e} m under the motion limits",
        )

    return SpeedPlan(
        accel=a,
        dt=dt,
        ticks_per_segment=ticks,
        seg_lengths=S,
        waypoints=waypoints + _waypoint_offset,
        start_speed=v0,
        end_speed=v_end,
        cost=float(a @ a),
        kkt_residual=kkt,
        positions=positions,
        speeds=speeds_of(a),
    )


def replan_speed_profile(
    plan: SpeedPlan,
    completed_segments: int,
    measured_s: float,
    measured_v: float,
    limits: MotionLimits,
) -> SpeedPlan:
    """Re-solve the remaining segments from a measured longitudinal state.

    measured_s is on the same axis as the original plan (0 at its
    start).  The remaining waypoints keep their absolute positions, so
    with zero tracking error the replanned profile reproduces the tail
    of the original plan.
    """
    n_seg = plan.seg_lengths.size
    if not 0 <= completed_segments < n_seg:
        raise LaneformError(
            f"completed_segments {completed_segments} outside [0, {n_seg})"
        )
    remaining = plan.waypoints[completed_segments:] - measured_s
    seg_lengths = np.diff(np.concatenate(([0.0], remaining)))
    return solve_speed_profile(
        seg_lengths,
        cruise_speed=plan.end_speed,
        limits=limits,
        cycle_time=plan.ticks_per_segment * plan.dt,
        dt=plan.dt,
        start_speed=measured_v,
        end_speed=plan.end_speed,
        _waypoint_offset=measured_s,
        _segment_offset=completed_segments,
    )


# ---------------------------------------------------------------------------
# lateral tracking


def _closest_param(seg: BezierSegment, x: float, y: float) -> float:
    """Curve parameter of the point nearest to (x, y), via coarse scan plus
    a few Newton refinements on the distance derivative."""
    us = np.linspace(0.0, 1.0, 33)
    px, py = _bezier_xy(seg, us)
    u = float(us[np.argmin((px - x) ** 2 + (py - y) ** 2)])
    for _ in range(3):
        bx, by = _bezier_xy(seg, u)
        dx, dy = _bezier_dxy(seg, u)
        g = (bx - x) * dx + (by - y) * dy
        # second derivative of the cubic's components
        w = 1.0 - u
        ddx = 6 * (w * (seg.x2 - 2 * seg.x1 + seg.x0) + u * (seg.x3 - 2 * seg.x2 + seg.x1))
        ddy = 6 * (w * (seg.y2 - 2 * seg.y1 + seg.y0) + u * (seg.y3 - 2 * seg.y2 + seg.y1))
        h = dx * dx + dy * dy + (bx - x) * ddx + (by - y) * ddy
        if h <= 0:
            break
        u = min(1.0, max(0.0, u - g / h))
    return u


def preview_steer(
    state: VehicleState,
    segment: BezierSegment,
    lat_gain: float = 0.2,
    heading_gain: float = 1.0,
    preview_distance: float = 15.0,
    max_steer: float = MAX_STEER,
    envelope: float = 7.0,
) -> float:
    """Steering command from lateral offset and previewed heading error.

    The offset is measured at the nearest curve point, signed positive
    when the path lies to the vehicle's left; the heading error is taken
    at the point one preview distance further along the curve.  Both
    feed a proportional law, saturated at max_steer:

        steer = -lat_gain * offset - heading_gain * heading_error

    where heading_error = path_heading - vehicle road heading.  Raises
    TrackingLostError when the offset exceeds the near-path envelope.
    """
    u_c = _closest_param(segment, state.x, state.y)
    cx, cy = _bezier_xy(segment, u_c)
    dx, dy = _bezier_dxy(segment, u_c)
    norm = math.hypot(dx, dy)
    if norm < 1e-12:
        raise TrackingLostError("degenerate path tangent")
    tx, ty = dx / norm, dy / norm
    e_lat = tx * (cy - state.y) - ty * (cx - state.x)
    if abs(e_lat) > envelope:
        raise TrackingLostError(
            f"lateral offset {e_lat:.2f} m beyond the {envelope:.2f} m envelope"
        )
    u_l = min(1.0, u_c + preview_distance / max(segment.arc_length, 1e-9))
    ldx, ldy = _bezier_dxy(segment, u_l)
    path_heading = math.atan2(ldy, ldx)
    err = path_heading - road_heading(state.heading)
    err = math.atan2(math.sin(err), math.cos(err))
    steer = -lat_gain * e_lat - heading_gain * err
    return float(np.clip(steer, -max_steer, max_steer))
