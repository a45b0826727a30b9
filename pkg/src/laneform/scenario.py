"""Lane-drop corridor experiment.

Road layout: a straight corridor of `upstream_lanes` lanes narrows to
`downstream_lanes` at x = merge_x; the run ends at exit_x.  Vehicles
enter at x = 0 with per-lane Poisson arrivals and leave the statistics
when they cross exit_x.

Two modes share the engine:

fc        Connected vehicles batch into formation episodes.  Each
          episode snaps its members to slot cells behind the episode
          head, routes them to an interlaced layout on the full road
          (packing), holds, then switches to an interlaced layout on
          the open lanes, timed so the switch completes before the
          head reaches merge_x.  Cell routes become Bezier segments;
          per-member speed profiles come from the quadratic program in
          `control` and are re-solved at cycle boundaries when the
          longitudinal error grows past a threshold.

baseline  Conventional traffic: IDM car following, a standing virtual
          leader at merge_x on the closing lanes, and gap-acceptance
          lane changes toward the open lanes within a lookahead.

The engine is deterministic: the only random draw is the arrival
stream, taken from a single seeded generator.  Safety monitors run
every tick; their counters ship with the metrics and any nonzero count
marks the run as failed.
"""

from __future__ import annotations

import csv
import json
import math
import os
from bisect import insort
from collections import deque
from dataclasses import dataclass, field, fields, replace
from typing import Iterator, Sequence

import numpy as np

from .assignment import conflict_free_assignment
from .control import MotionLimits, bicycle_kernel, solve_speed_profile, replan_speed_profile
from .errors import (
    ConfigError,
    InfeasibleSegmentError,
    LaneformError,
    SimulationError,
)
from .fuel import FuelParams, fuel_rate
from .grid import FormationShape, GridPos, formation_targets
from .idm import IdmParams, idm_accel
from .pathmap import PathTable, build_table, resolve_table_events, serialize_table
from .trajectory import compile_row, cubic_deriv, cubic_point, dump_trajectory_csv

# vehicle lifecycle states
_QUEUED, _CRUISE, _MANEUVER, _EXITED = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ScenarioConfig:
    """Full experiment description; JSON-serializable and validated."""

    schema_version: int = 1
    mode: str = "fc"
    rng_seed: int = 1
    volume_per_lane: float = 1000.0  # veh/(h.lane)
    duration_s: float = 600.0
    upstream_lanes: int = 3
    downstream_lanes: int = 2
    merge_x: float = 1000.0  # closed lanes end here
    exit_x: float = 1200.0
    lane_width: float = 3.5
    slot_gap: float = 15.0
    cycle_time: float = 5.0
    cruise_speed: float = 28.8
    v_min: float = 0.0
    v_max: float = 33.3
    a_min: float = -10.0
    a_max: float = 5.0
    sim_dt: float = 0.1
    vehicle_length: float = 5.0
    vehicle_width: float = 1.8
    wheelbase: float = 2.8
    # formation batching
    max_group_size: int = 9
    max_group_wait_s: float = 10.0  # 2 cycles
    max_form_steps: int = 4
    # tracking
    lat_gain: float = 0.2
    heading_gain: float = 1.0
    preview_distance: float = 15.0
    shape_fraction: float = 1.0 / 3.0
    replan_threshold_m: float = 0.02
    # baseline lane changes
    lc_lookahead_m: float = 300.0
    lc_cooldown_s: float = 2.0
    # metrics
    warmup_s: float = 60.0
    heat_time_bin_s: float = 10.0
    heat_space_bin_m: float = 20.0
    min_bumper_factor: float = 0.5  # of slot_gap, FC same-lane invariant
    idm: IdmParams = field(default_factory=IdmParams)
    fuel: FuelParams = field(default_factory=FuelParams)

    @property
    def limits(self) -> MotionLimits:
        return MotionLimits(self.v_min, self.v_max, self.a_min, self.a_max)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, (IdmParams, FuelParams)):
                value = dict(vars(value))
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(f"unknown config field {key!r}")
            if key == "idm":
                value = _params_from_dict(IdmParams, value, "idm")
            elif key == "fuel":
                value = _params_from_dict(FuelParams, value, "fuel")
            kwargs[key] = value
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        c = self
        checks = [
            (c.schema_version == 1, "schema_version", "must be 1"),
            (c.mode in ("fc", "baseline"), "mode", "must be 'fc' or 'baseline'"),
            (c.volume_per_lane >= 0, "volume_per_lane", "must be >= 0"),
            (c.duration_s > 0, "duration_s", "must be positive"),
            (0 <= c.warmup_s < c.duration_s, "warmup_s", "must be in [0, duration_s)"),
            (c.upstream_lanes >= 1, "upstream_lanes", "must be >= 1"),
            (
                1 <= c.downstream_lanes <= c.upstream_lanes,
                "downstream_lanes",
                "must be in [1, upstream_lanes]",
            ),
            (0 < c.merge_x < c.exit_x, "merge_x", "must satisfy 0 < merge_x < exit_x"),
            (c.lane_width > 0, "lane_width", "must be positive"),
            (
                0 < c.vehicle_length < c.slot_gap,
                "vehicle_length",
                "must be positive and below slot_gap",
            ),
            (
                0 < c.vehicle_width < c.lane_width,
                "vehicle_width",
                "must be positive and below lane_width",
            ),
            (c.wheelbase > 0, "wheelbase", "must be positive"),
            (c.cycle_time > 0, "cycle_time", "must be positive"),
            (c.sim_dt > 0, "sim_dt", "must be positive"),
            (
                abs(c.cycle_time / c.sim_dt - round(c.cycle_time / c.sim_dt)) < 1e-9,
                "sim_dt",
                "cycle_time must be an integer number of sim_dt ticks",
            ),
            (
                0 <= c.v_min <= c.cruise_speed <= c.v_max,
                "cruise_speed",
                "must satisfy v_min <= cruise_speed <= v_max",
            ),
            (c.a_min < 0 < c.a_max, "a_min", "need a_min < 0 < a_max"),
            (
                c.cruise_speed + c.slot_gap / c.cycle_time <= c.v_max + 1e-9,
                "v_max",
                "advancing one slot per cycle must stay below v_max",
            ),
            (
                c.cruise_speed - c.slot_gap / c.cycle_time >= c.v_min - 1e-9,
                "v_min",
                "dropping one slot per cycle must stay above v_min",
            ),
            (c.max_group_size >= 1, "max_group_size", "must be >= 1"),
            (c.max_group_wait_s >= 0, "max_group_wait_s", "must be >= 0"),
            (c.max_form_steps >= 1, "max_form_steps", "must be >= 1"),
            (c.lat_gain > 0, "lat_gain", "must be positive"),
            (c.heading_gain > 0, "heading_gain", "must be positive"),
            (c.preview_distance > 0, "preview_distance", "must be positive"),
            (0 < c.shape_fraction < 0.5, "shape_fraction", "must be in (0, 0.5)"),
            (c.replan_threshold_m > 0, "replan_threshold_m", "must be positive"),
            (c.lc_lookahead_m > 0, "lc_lookahead_m", "must be positive"),
            (c.lc_cooldown_s >= 0, "lc_cooldown_s", "must be >= 0"),
            (c.heat_time_bin_s > 0, "heat_time_bin_s", "must be positive"),
            (c.heat_space_bin_m > 0, "heat_space_bin_m", "must be positive"),
            (0 < c.min_bumper_factor <= 1, "min_bumper_factor", "must be in (0, 1]"),
            (c.idm.desired_speed > 0, "idm.desired_speed", "must be positive"),
            (c.idm.time_headway > 0, "idm.time_headway", "must be positive"),
            (c.idm.min_gap > 0, "idm.min_gap", "must be positive"),
            (c.fuel.mass > 0, "fuel.mass", "must be positive"),
        ]
        for ok, name, msg in checks:
            if not ok:
                raise ConfigError(f"config field {name}: {msg}")


def _params_from_dict(cls, value, label: str):
    if isinstance(value, cls):
        return value
    if not isinstance(value, dict):
        raise ConfigError(f"config field {label}: must be an object")
    known = {f.name for f in fields(cls)}
    bad = set(value) - known
    if bad:
        raise ConfigError(f"config field {label}: unknown keys {sorted(bad)}")
    return cls(**value)


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config file {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path}: top level must be an object")
    return ScenarioConfig.from_dict(data)


# ---------------------------------------------------------------------------
# arrivals


def build_arrivals(config: ScenarioConfig) -> list[tuple[float, int]]:
    """Scheduled (time, lane) entries, sorted by time.

    Per-lane Poisson arrivals at volume/3600 veh/s; an arrival closer
    than slot_gap/cruise_speed to the previous one on its lane is
    delayed to that headway.  Deterministic given rng_seed.
    """
    rng = np.random.default_rng(config.rng_seed)
    rate = config.volume_per_lane / 3600.0
    min_headway = config.slot_gap / config.cruise_speed
    events: list[tuple[float, int]] = []
    for lane in range(config.upstream_lanes):
        if rate <= 0:
            continue
        t = 0.0
        last = -math.inf
        while True:
            t += rng.exponential(1.0 / rate)
            spawn = max(t, last + min_headway)
            if spawn >= config.duration_s:
                break
            events.append((spawn, lane))
            last = spawn
    events.sort()
    return events


# ---------------------------------------------------------------------------
# formation episodes


@dataclass
class Episode:
    """One formation group from first arrival to switch completion."""

    index: int
    members: list[int]
    t_first: float
    is_open: bool = True
    trivial: bool = False
    aborted: bool = False
    finished: bool = False
    # plan in cell space, cached from the latest admission check
    pending: dict | None = None
    # filled at close
    t0_tick: int = 0
    anchor_x0: float = 0.0
    cycles: int = 0
    n_form: int = 0
    n_merge: int = 0
    hold_cycles: int = 0
    exchanges: int = 0
    hold_events: int = 0
    reserve_depth: int = 0
    late: bool = False
    replans: int = 0
    mem: np.ndarray | None = None
    accel: np.ndarray | None = None  # (N, cycles * ticks)
    pos_targets: np.ndarray | None = None  # (N, cycles * ticks + 1)
    arc_start: np.ndarray | None = None  # (N, cycles + 1)
    seg_x0: np.ndarray | None = None  # (N, cycles) Bezier endpoints per cycle
    seg_y0: np.ndarray | None = None
    seg_x3: np.ndarray | None = None
    seg_y3: np.ndarray | None = None
    seg_arc: np.ndarray | None = None
    lane_start: np.ndarray | None = None  # (N, cycles) int, segment start lane
    lane_end: np.ndarray | None = None


def _snap_cells(
    offsets: Sequence[float], lanes: Sequence[int], slot_gap: float
) -> list[GridPos]:
    """Grid cells for member offsets behind the head (offset 0 = head).

    Per lane, deeper vehicles get strictly increasing slots; rounding
    can leave a vehicle up to half a slot away from its cell, which the
    first plan segment absorbs.
    """
    cells: list[GridPos] = [(-1, -1)] * len(offsets)
    by_lane: dict[int, list[int]] = {}
    for i, lane in enumerate(lanes):
        by_lane.setdefault(int(lane), []).append(i)
    for lane, idxs in by_lane.items():
        idxs.sort(key=lambda i: (offsets[i], i))  # shallow first
        prev = -1
        for i in idxs:
            slot = max(int(round(offsets[i] / slot_gap)), prev + 1, 0)
            cells[i] = (slot, lane)
            prev = slot
    return cells


def _plan_cells(
    cells: list[GridPos], config: ScenarioConfig
) -> dict:
    """Cell-space plan for one group: pack, then switch to the open lanes.

    Returns rows (without the leading alignment hold and without hold
    sizing, both of which depend on close-time geometry), step counts,
    and diagnostics.  Raises planner errors for impossible groups.
    """
    n = len(cells)
    up, down = config.upstream_lanes, config.downstream_lanes
    exchanges = holds = 0

    if n >= 2:
        form_targets = formation_targets(FormationShape.INTERLACED, up, n)
        plan_a = conflict_free_assignment(cells, form_targets, up)
        table_a, events_a = resolve_table_events(
            build_table(cells, plan_a.paths), plan_a.targets
        )
        rows_a = table_a.rows
        exchanges += plan_a.exchanges
        holds += len(events_a)
    else:
        rows_a = [[cells[0]]]
    n_form = len(rows_a[0]) - 1
    finals = [row[-1] for row in rows_a]

    if any(lane >= down for _, lane in finals):
        merge_targets = formation_targets(FormationShape.INTERLACED, down, n)
        plan_b = conflict_free_assignment(finals, merge_targets, up)
        table_b, events_b = resolve_table_events(
            build_table(finals, plan_b.paths), plan_b.targets
        )
        rows_b = table_b.rows
        exchanges += plan_b.exchanges
        holds += len(events_b)
    else:
        rows_b = [[c] for c in finals]
    n_merge = len(rows_b[0]) - 1

    return {
        "rows_a": rows_a,
        "rows_b": rows_b,
        "n_form": n_form,
        "n_merge": n_merge,
        "exchanges": exchanges,
        "holds": holds,
        "trivial": n_form == 0 and n_merge == 0,
    }


# ---------------------------------------------------------------------------
# results


@dataclass
class RunResult:
    config: ScenarioConfig
    metrics: dict
    heat_sum: np.ndarray
    heat_count: np.ndarray
    log: dict[str, np.ndarray] | None = None

    @property
    def heat_mean(self) -> np.ndarray:
        """Mean speed per (time bin, space bin); NaN where no vehicle passed."""
        with np.errstate(invalid="ignore"):
            return np.where(self.heat_count > 0, self.heat_sum / np.maximum(self.heat_count, 1), np.nan)

    @property
    def ok(self) -> bool:
        return self.metrics["violations"]["total"] == 0


# ---------------------------------------------------------------------------
# engine


class _Engine:
    def __init__(self, config: ScenarioConfig, collect_log: bool):
        config.validate()
        self.cfg = config
        self.collect_log = collect_log
        self.dt = config.sim_dt
        self.ticks = round(config.cycle_time / config.sim_dt)
        self.n_ticks = round(config.duration_s / config.sim_dt)
        self.arrivals = build_arrivals(config)
        self.limits = config.limits

        n = len(self.arrivals)
        self.n = n
        self.sched_t = np.array([t for t, _ in self.arrivals])
        self.sched_lane = np.array([lane for _, lane in self.arrivals], dtype=np.int32)
        self.x = np.zeros(n)
        self.y = np.zeros(n)
        self.v = np.zeros(n)
        self.heading = np.full(n, math.pi / 2)
        self.state = np.full(n, _QUEUED, dtype=np.int8)
        self.lane_now = np.zeros(n, dtype=np.int32)
        self.lane_end = np.zeros(n, dtype=np.int32)
        self.s_arc = np.zeros(n)
        self.a_applied = np.zeros(n)
        self.fuel_ml = np.zeros(n)
        self.t_enter = np.full(n, np.nan)
        self.t_exit = np.full(n, np.nan)
        self.next_lc = np.zeros(n)

        self.next_arrival = 0
        self.pending: list[deque[int]] = [deque() for _ in range(config.upstream_lanes)]

        self.episodes: list[Episode] = []
        self.open_ep: Episode | None = None
        self.gate_ep: Episode | None = None

        nt = math.ceil(config.duration_s / config.heat_time_bin_s)
        nx = math.ceil(config.exit_x / config.heat_space_bin_m)
        self.heat_sum = np.zeros((nt, nx))
        self.heat_count = np.zeros((nt, nx), dtype=np.int64)

        self.violations = {
            "overlap": 0,
            "min_bumper": 0,
            "closed_lane_past_merge": 0,
            "tracking_lost": 0,
            "late_episode": 0,
            "replan_failed": 0,
        }
        self.min_bumper = math.inf
        self.episodes_aborted = 0
        self.log_rows: list[tuple] = []
        self.log_stride = max(1, round(0.5 / self.dt))

    # -- spawning ----------------------------------------------------------

    def _lane_front_clear(self) -> np.ndarray:
        """Distance from the entry point to the nearest vehicle per lane."""
        clear = np.full(self.cfg.upstream_lanes, np.inf)
        active = self.state != _QUEUED
        active &= self.state != _EXITED
        for lane in range(self.cfg.upstream_lanes):
            mask = active & ((self.lane_now == lane) | (self.lane_end == lane))
            if mask.any():
                clear[lane] = self.x[mask].min()
        return clear

    def _gate_open(self, t: float) -> bool:
        """True when the last episode's slot zone has cleared the entry.

        Spawning is held until the deepest reserved slot sits two slot
        gaps past x = 0, so a new vehicle can never start inside (or one
        dip away from) cells an active plan may still visit.
        """
        ep = self.gate_ep
        if ep is None:
            return True
        anchor = ep.anchor_x0 + self.cfg.cruise_speed * (t - ep.t0_tick * self.dt)
        zone_tail = anchor - ep.reserve_depth * self.cfg.slot_gap
        return zone_tail >= 2.0 * self.cfg.slot_gap

    def _spawn_tick(self, t: float) -> None:
        while self.next_arrival < self.n and self.sched_t[self.next_arrival] <= t:
            i = self.next_arrival
            self.pending[self.sched_lane[i]].append(i)
            self.next_arrival += 1
        clear = self._lane_front_clear()
        for lane in range(self.cfg.upstream_lanes):
            if not self.pending[lane]:
                continue
            if clear[lane] < self.cfg.slot_gap:
                continue
            if self.cfg.mode == "fc":
                # gate re-checked per lane: admitting may close the group
                if not self._gate_open(t):
                    continue
                i = self.pending[lane][0]
                if self._fc_try_spawn(i, lane, t):
                    self.pending[lane].popleft()
            else:
                i = self.pending[lane].popleft()
                self._spawn(i, lane, t, clear[lane])

    def _spawn(self, i: int, lane: int, t: float, front_clear: float) -> None:
        cfg = self.cfg
        self.state[i] = _CRUISE
        self.x[i] = 0.0
        self.y[i] = (lane + 0.5) * cfg.lane_width
        self.heading[i] = math.pi / 2
        self.lane_now[i] = lane
        self.lane_end[i] = lane
        self.t_enter[i] = t
        if cfg.mode == "fc":
            self.v[i] = cfg.cruise_speed
        else:
            # enter at the IDM equilibrium speed for the available gap
            gap = front_clear - cfg.vehicle_length
            v_eq = max(0.0, (gap - cfg.idm.min_gap) / cfg.idm.time_headway)
            self.v[i] = min(cfg.idm.desired_speed, v_eq)

    # -- formation lifecycle -----------------------------------------------

    def _fc_try_spawn(self, i: int, lane: int, t: float) -> bool:
        """Admit-then-spawn; a rejected candidate stays off the road.

        Closing the group publishes its reserve zone, and the candidate
        waits behind the gate, so every on-road vehicle is either a
        member of the plan or provably clear of its slots.
        """
        cfg = self.cfg
        ep = self.open_ep
        if ep is None:
            self._spawn(i, lane, t, math.inf)
            self.open_ep = Episode(len(self.episodes), [i], t)
            self.episodes.append(self.open_ep)
            return True
        if len(ep.members) >= cfg.max_group_size:
            self._close_episode(ep, t)
            return False
        plan = self._admission_plan(ep, 0.0, lane, t)
        if plan is None:
            self._close_episode(ep, t)
            return False
        self._spawn(i, lane, t, math.inf)
        ep.members.append(i)
        ep.pending = plan
        if len(ep.members) >= cfg.max_group_size:
            self._close_episode(ep, t)
        return True

    def _admission_plan(
        self, ep: Episode, cand_x: float, cand_lane: int, t: float
    ) -> dict | None:
        """Cell plan for members + candidate, or None when it cannot fit."""
        cfg = self.cfg
        head = ep.members[0]
        offsets = [self.x[head] - self.x[m] for m in ep.members]
        offsets.append(self.x[head] - cand_x)
        lanes = [int(self.lane_now[m]) for m in ep.members]
        lanes.append(cand_lane)
        cells = _snap_cells(offsets, lanes, cfg.slot_gap)
        try:
            plan = _plan_cells(cells, cfg)
        except LaneformError:
            return None
        if plan["n_form"] > cfg.max_form_steps:
            return None
        # worst-case anchor: the group may stay open until its wait expires
        wait_left = max(0.0, ep.t_first + cfg.max_group_wait_s - t)
        anchor_max = self.x[head] + cfg.cruise_speed * wait_left
        room = math.floor(
            (cfg.merge_x - anchor_max) / (cfg.cruise_speed * cfg.cycle_time) + 1e-9
        )
        if 1 + plan["n_form"] + plan["n_merge"] > room:
            return None
        plan["cells"] = cells
        return plan

    def _close_episode(self, ep: Episode, t: float) -> None:
        cfg = self.cfg
        ep.is_open = False
        if self.open_ep is ep:
            self.open_ep = None
        members = ep.members
        tick = round(t / self.dt)
        anchor = float(self.x[members[0]])
        plan = ep.pending
        if plan is None:
            offsets = [anchor - self.x[m] for m in members]
            lanes = [int(self.lane_now[m]) for m in members]
            cells = _snap_cells(offsets, lanes, cfg.slot_gap)
            try:
                plan = _plan_cells(cells, cfg)
                plan["cells"] = cells
            except LaneformError:
                ep.aborted = True
                self.episodes_aborted += 1
                self._publish_zone(ep, tick, anchor, max(s for s, _ in cells))
                return
        if plan["trivial"]:
            ep.trivial = True
            ep.finished = True
            self._publish_zone(
                ep, tick, anchor, max(s for s, _ in plan["cells"])
            )
            return
        seg_per_cycle = cfg.cruise_speed * cfg.cycle_time
        room = math.floor((cfg.merge_x - anchor) / seg_per_cycle + 1e-9)
        need = 1 + plan["n_form"] + plan["n_merge"]
        hold = room - need
        if hold < 0:
            hold = 0
            ep.late = True
            self.violations["late_episode"] += 1

        rows: list[list[GridPos]] = []
        for row_a, row_b in zip(plan["rows_a"], plan["rows_b"]):
            # leading duplicate = alignment cycle absorbing snap offsets
            rows.append([row_a[0]] + list(row_a) + [row_a[-1]] * hold + list(row_b[1:]))
        cycles = len(rows[0]) - 1

        n_m = len(members)
        segs_all = []
        try:
            plans = []
            for k, m in enumerate(members):
                segs = compile_row(
                    rows[k],
                    head_x0=anchor,
                    cruise_speed=cfg.cruise_speed,
                    cycle_time=cfg.cycle_time,
                    slot_gap=cfg.slot_gap,
                    lane_width=cfg.lane_width,
                    t0=t,
                    shape_fraction=cfg.shape_fraction,
                    start_override=(float(self.x[m]), float(self.y[m])),
                )
                segs_all.append(segs)
                lengths = [s.arc_length for s in segs]
                plans.append(
                    solve_speed_profile(
                        lengths,
                        cruise_speed=cfg.cruise_speed,
                        limits=self.limits,
                        cycle_time=cfg.cycle_time,
                        dt=self.dt,
                        start_speed=float(self.v[m]),
                    )
                )
        except LaneformError:
            ep.aborted = True
            self.episodes_aborted += 1
            self._publish_zone(
                ep, tick, anchor, max(s for s, _ in plan["cells"])
            )
            return

        ep.t0_tick = tick
        ep.anchor_x0 = anchor
        ep.cycles = cycles
        ep.n_form = plan["n_form"]
        ep.n_merge = plan["n_merge"]
        ep.hold_cycles = hold
        ep.exchanges = plan["exchanges"]
        ep.hold_events = plan["holds"]
        ep.reserve_depth = max(slot for row in rows for slot, _ in row)
        ep.mem = np.array(members, dtype=np.int64)
        ep.accel = np.stack([p.accel for p in plans])
        ep.pos_targets = np.stack([p.positions for p in plans])
        ep.arc_start = np.stack(
            [np.concatenate(([0.0], np.cumsum([s.arc_length for s in segs])))
             for segs in segs_all]
        )
        ep.seg_x0 = np.array([[s.x0 for s in segs] for segs in segs_all])
        ep.seg_y0 = np.array([[s.y0 for s in segs] for segs in segs_all])
        ep.seg_x3 = np.array([[s.x3 for s in segs] for segs in segs_all])
        ep.seg_y3 = np.array([[s.y3 for s in segs] for segs in segs_all])
        ep.seg_arc = np.array([[s.arc_length for s in segs] for segs in segs_all])
        ep.lane_start = np.array([[lane for _, lane in row[:-1]] for row in rows])
        ep.lane_end = np.array([[lane for _, lane in row[1:]] for row in rows])

        self.state[ep.mem] = _MANEUVER
        self.s_arc[ep.mem] = 0.0
        self.lane_now[ep.mem] = ep.lane_start[:, 0]
        self.lane_end[ep.mem] = ep.lane_end[:, 0]
        self._publish_zone(ep, tick, anchor, ep.reserve_depth)

    def _publish_zone(
        self, ep: Episode, tick: int, anchor: float, depth: int
    ) -> None:
        ep.t0_tick = tick
        ep.anchor_x0 = anchor
        ep.reserve_depth = depth
        self.gate_ep = ep

    def _finish_episode(self, ep: Episode) -> None:
        ep.finished = True
        live = self.state[ep.mem] == _MANEUVER
        idx = ep.mem[live]
        self.state[idx] = _CRUISE
        self.lane_now[idx] = ep.lane_end[live, -1]
        self.lane_end[idx] = ep.lane_end[live, -1]

    def _episode_tick(self, ep: Episode, tick: int, steer: np.ndarray) -> None:
        cfg = self.cfg
        lt = tick - ep.t0_tick
        if lt >= ep.cycles * self.ticks:
            self._finish_episode(ep)
            return
        cyc = lt // self.ticks
        mem = ep.mem
        live = self.state[mem] == _MANEUVER  # exited members drop out
        if not live.all():
            mem = mem[live]
            if mem.size == 0:
                ep.finished = True
                return
        rows = np.nonzero(live)[0]

        if lt % self.ticks == 0 and lt > 0:
            self.lane_now[mem] = ep.lane_start[rows, cyc]
            self.lane_end[mem] = ep.lane_end[rows, cyc]
            err = self.s_arc[mem] - ep.pos_targets[rows, lt]
            for k, ridx in enumerate(rows):
                if abs(err[k]) <= cfg.replan_threshold_m:
                    continue
                m = int(mem[k])
                try:
                    newp = replan_speed_profile(
                        _plan_view(ep, ridx, cfg, self.dt),
                        completed_segments=cyc,
                        measured_s=float(self.s_arc[m]),
                        measured_v=float(self.v[m]),
                        limits=self.limits,
                    )
                except InfeasibleSegmentError:
                    self.violations["replan_failed"] += 1
                    continue
                ep.accel[ridx, lt:] = newp.accel
                ep.pos_targets[ridx, lt:] = newp.positions
                ep.replans += 1

        self.a_applied[mem] = ep.accel[rows, lt]

        # reference point and tangent at the scheduled-arc parameter
        arc = ep.seg_arc[rows, cyc]
        u = np.clip((self.s_arc[mem] - ep.arc_start[rows, cyc]) / arc, 0.0, 1.0)
        x0, x3 = ep.seg_x0[rows, cyc], ep.seg_x3[rows, cyc]
        y0, y3 = ep.seg_y0[rows, cyc], ep.seg_y3[rows, cyc]
        f = cfg.shape_fraction
        x1 = x0 + f * (x3 - x0)
        x2 = x3 - f * (x3 - x0)
        rx = cubic_point(x0, x1, x2, x3, u)
        ry = cubic_point(y0, y0, y3, y3, u)
        dx = cubic_deriv(x0, x1, x2, x3, u)
        dy = cubic_deriv(y0, y0, y3, y3, u)
        norm = np.hypot(dx, dy)
        tx, ty = dx / norm, dy / norm
        e_lat = tx * (ry - self.y[mem]) - ty * (rx - self.x[mem])
        lost = np.abs(e_lat) > 2.0 * cfg.lane_width
        if lost.any():
            self.violations["tracking_lost"] += int(lost.sum())
        u_prev = np.minimum(1.0, u + cfg.preview_distance / arc)
        pdx = cubic_deriv(x0, x1, x2, x3, u_prev)
        pdy = cubic_deriv(y0, y0, y3, y3, u_prev)
        path_heading = np.arctan2(pdy, pdx)
        herr = path_heading - (math.pi / 2 - self.heading[mem])
        herr = np.arctan2(np.sin(herr), np.cos(herr))
        steer[mem] = -cfg.lat_gain * e_lat - cfg.heading_gain * herr

    # -- per-tick control --------------------------------------------------

    def _fc_tick(self, t: float, tick: int) -> None:
        cfg = self.cfg
        if (
            self.open_ep is not None
            and t - self.open_ep.t_first >= cfg.max_group_wait_s
        ):
            self._close_episode(self.open_ep, t)

        steer = np.zeros(self.n)
        cruising = self.state == _CRUISE
        if cruising.any():
            center = (self.lane_now[cruising] + 0.5) * cfg.lane_width
            e_lat = center - self.y[cruising]
            herr = self.heading[cruising] - math.pi / 2
            steer[cruising] = -cfg.lat_gain * e_lat - cfg.heading_gain * herr
            self.a_applied[cruising] = np.clip(
                cfg.cruise_speed - self.v[cruising], cfg.a_min, cfg.a_max
            )

        for ep in self.episodes:
            if not ep.is_open and not ep.finished and not ep.trivial and not ep.aborted:
                self._episode_tick(ep, tick, steer)

        moving = (self.state == _CRUISE) | (self.state == _MANEUVER)
        if moving.any():
            self._monitor_fc(moving)
            idx = moving
            self.fuel_ml[idx] += (
                fuel_rate(self.v[idx], self.a_applied[idx], cfg.fuel) * self.dt
            )
            self.s_arc[idx] += self.v[idx] * self.dt
            x, y, v, heading = bicycle_kernel(
                self.x[idx], self.y[idx], self.v[idx], self.heading[idx],
                self.a_applied[idx], steer[idx], self.dt, cfg.wheelbase, self.limits,
            )
            self.x[idx], self.y[idx], self.v[idx], self.heading[idx] = x, y, v, heading

    def _baseline_tick(self, t: float) -> None:
        cfg = self.cfg
        active = np.nonzero((self.state == _CRUISE))[0]
        if active.size == 0:
            return
        self._baseline_lane_changes(t, active)

        accel = np.zeros(self.n)
        order = active[np.argsort(self.x[active], kind="stable")]
        for lane in range(cfg.upstream_lanes):
            lane_idx = order[self.lane_now[order] == lane]
            if lane_idx.size == 0:
                continue
            xs = self.x[lane_idx]
            vs = self.v[lane_idx]
            gap = np.full(lane_idx.size, np.inf)
            dv = np.zeros(lane_idx.size)
            gap[:-1] = xs[1:] - xs[:-1] - cfg.vehicle_length
            dv[:-1] = vs[:-1] - vs[1:]
            a = idm_accel(vs, gap, dv, cfg.idm)
            if lane >= cfg.downstream_lanes:
                a_wall = idm_accel(vs, cfg.merge_x - xs, vs, cfg.idm)
                a = np.minimum(a, a_wall)
            accel[lane_idx] = a

        a = np.clip(accel[active], cfg.a_min, cfg.a_max)
        self.a_applied[active] = a
        self._monitor_baseline(active)
        self.fuel_ml[active] += fuel_rate(self.v[active], a, cfg.fuel) * self.dt
        self.x[active] += self.v[active] * self.dt
        self.v[active] = np.clip(self.v[active] + a * self.dt, 0.0, cfg.v_max)

    def _baseline_lane_changes(self, t: float, active: np.ndarray) -> None:
        cfg = self.cfg
        cand = active[
            (self.lane_now[active] >= cfg.downstream_lanes)
            & (self.x[active] >= cfg.merge_x - cfg.lc_lookahead_m)
            & (self.x[active] < cfg.merge_x)
            & (self.next_lc[active] <= t)
        ]
        if cand.size == 0:
            return
        lanes: list[list[tuple[float, int]]] = [[] for _ in range(cfg.upstream_lanes)]
        for i in active:
            lanes[self.lane_now[i]].append((float(self.x[i]), int(i)))
        for lst in lanes:
            lst.sort()
        for i in cand[np.argsort(-self.x[cand], kind="stable")]:
            target = int(self.lane_now[i]) - 1
            lst = lanes[target]
            xi = float(self.x[i])
            pos = _bisect_x(lst, xi)
            lead_gap = lst[pos][0] - xi - cfg.vehicle_length if pos < len(lst) else math.inf
            lag_gap = xi - lst[pos - 1][0] - cfg.vehicle_length if pos > 0 else math.inf
            lag_v = self.v[lst[pos - 1][1]] if pos > 0 else 0.0
            need_lead = cfg.idm.min_gap + cfg.idm.time_headway * self.v[i]
            need_lag = cfg.idm.min_gap + cfg.idm.time_headway * lag_v
            if lead_gap >= need_lead and lag_gap >= need_lag:
                old = lanes[self.lane_now[i]]
                old.remove((xi, int(i)))
                insort(lst, (xi, int(i)))
                self.lane_now[i] = target
                self.lane_end[i] = target
                self.y[i] = (target + 0.5) * cfg.lane_width
                self.next_lc[i] = t + cfg.lc_cooldown_s

    # -- monitors ------------------------------------------------------------

    def _monitor_fc(self, moving: np.ndarray) -> None:
        cfg = self.cfg
        idx = np.nonzero(moving)[0]
        straight = idx[self.lane_now[idx] == self.lane_end[idx]]
        min_gap = cfg.min_bumper_factor * cfg.slot_gap
        for lane in range(cfg.upstream_lanes):
            li = straight[self.lane_now[straight] == lane]
            if li.size < 2:
                continue
            xs = np.sort(self.x[li], kind="stable")
            bumper = np.diff(xs) - cfg.vehicle_length
            worst = float(bumper.min())
            if worst < self.min_bumper:
                self.min_bumper = worst
            self.violations["min_bumper"] += int((bumper < min_gap).sum())

        changing = idx[self.lane_now[idx] != self.lane_end[idx]]
        for i in changing:
            dx = np.abs(self.x[idx] - self.x[i])
            dy = np.abs(self.y[idx] - self.y[i])
            hits = (dx < cfg.vehicle_length) & (dy < cfg.vehicle_width) & (idx != i)
            self.violations["overlap"] += int(hits.sum())

        closed_y = cfg.downstream_lanes * cfg.lane_width
        past = (
            (self.x[idx] > cfg.merge_x)
            & (self.y[idx] + 0.5 * cfg.vehicle_width > closed_y)
        )
        self.violations["closed_lane_past_merge"] += int(past.sum())

    def _monitor_baseline(self, active: np.ndarray) -> None:
        cfg = self.cfg
        for lane in range(cfg.upstream_lanes):
            li = active[self.lane_now[active] == lane]
            if li.size < 2:
                continue
            xs = np.sort(self.x[li], kind="stable")
            bumper = np.diff(xs) - cfg.vehicle_length
            self.violations["overlap"] += int((bumper < 0).sum())

    # -- shared per-tick bookkeeping ----------------------------------------

    def _heat_tick(self, t: float) -> None:
        cfg = self.cfg
        on_road = (self.state == _CRUISE) | (self.state == _MANEUVER)
        mask = on_road & (self.x >= 0) & (self.x < cfg.exit_x)
        if not mask.any():
            return
        ti = min(int(t / cfg.heat_time_bin_s), self.heat_sum.shape[0] - 1)
        xi = (self.x[mask] / cfg.heat_space_bin_m).astype(np.int64)
        np.add.at(self.heat_sum[ti], xi, self.v[mask])
        np.add.at(self.heat_count[ti], xi, 1)

    def _exit_tick(self, t: float) -> None:
        cfg = self.cfg
        on_road = (self.state == _CRUISE) | (self.state == _MANEUVER)
        crossed = np.nonzero(on_road & (self.x >= cfg.exit_x))[0]
        if crossed.size == 0:
            return
        overshoot = self.x[crossed] - cfg.exit_x
        back = np.where(self.v[crossed] > 1e-9, overshoot / np.maximum(self.v[crossed], 1e-9), 0.0)
        self.t_exit[crossed] = t + self.dt - back
        self.state[crossed] = _EXITED

    def _log_tick(self, t: float) -> None:
        on_road = (self.state == _CRUISE) | (self.state == _MANEUVER)
        idx = np.nonzero(on_road)[0]
        if idx.size == 0:
            return
        rate = fuel_rate(self.v[idx], self.a_applied[idx], self.cfg.fuel)
        self.log_rows.append(
            (
                np.full(idx.size, t),
                idx.copy(),
                self.lane_now[idx].copy(),
                self.x[idx].copy(),
                self.y[idx].copy(),
                self.v[idx].copy(),
                self.a_applied[idx].copy(),
                np.asarray(rate),
            )
        )

    # -- main loop -----------------------------------------------------------

    def run(self) -> RunResult:
        for tick in range(self.n_ticks):
            t = tick * self.dt
            self._spawn_tick(t)
            self._heat_tick(t)
            if self.collect_log and tick % self.log_stride == 0:
                self._log_tick(t)
            if self.cfg.mode == "fc":
                self._fc_tick(t, tick)
            else:
                self._baseline_tick(t)
            self._exit_tick(t)
        return self._finish()

    def _finish(self) -> RunResult:
        cfg = self.cfg
        entered = int((self.state != _QUEUED).sum())
        completed = int((self.state == _EXITED).sum())
        in_network = entered - completed
        done = np.nonzero(self.state == _EXITED)[0]
        measured = done[self.t_enter[done] >= cfg.warmup_s]
        if measured.size == 0:
            raise SimulationError(
                "no vehicle completed the corridor after the warm-up window"
            )
        travel = self.t_exit[measured] - self.t_enter[measured]
        fuel100 = self.fuel_ml[measured] / 1000.0 / (cfg.exit_x / 100_000.0)
        delays = self.t_enter[self.state != _QUEUED] - self.sched_t[self.state != _QUEUED]

        self.violations["total"] = int(sum(self.violations.values()))
        closed = [ep for ep in self.episodes if not ep.is_open]
        real = [ep for ep in closed if not ep.trivial and not ep.aborted]
        metrics = {
            "metrics_version": 1,
            "config": cfg.to_dict(),
            "counts": {
                "arrivals_scheduled": self.n,
                "entered": entered,
                "completed": completed,
                "completed_measured": int(measured.size),
                "in_network_at_end": in_network,
                "never_entered": self.n - entered,
            },
            "mean_travel_time_s": float(travel.mean()),
            "max_travel_time_s": float(travel.max()),
            "mean_entry_delay_s": float(delays.mean()) if delays.size else 0.0,
            "mean_fuel_l_per_100km": float(fuel100.mean()),
            "violations": dict(self.violations),
            "min_same_lane_bumper_m": (
                None if math.isinf(self.min_bumper) else float(self.min_bumper)
            ),
            "capacity_veh_per_hour_per_lane": (
                cfg.downstream_lanes
                * cfg.cruise_speed
                / (2.0 * cfg.slot_gap)
                * 3600.0
                / cfg.upstream_lanes
            ),
            "episodes": {
                "closed": len(closed),
                "trivial": sum(ep.trivial for ep in closed),
                "aborted": self.episodes_aborted,
                "mean_size": (
                    float(np.mean([len(ep.members) for ep in real])) if real else 0.0
                ),
                "max_size": max((len(ep.members) for ep in real), default=0),
                "exchanges": sum(ep.exchanges for ep in real),
                "hold_insertions": sum(ep.hold_events for ep in real),
                "hold_cycles": sum(ep.hold_cycles for ep in real),
                "replans": sum(ep.replans for ep in real),
            },
        }
        log = None
        if self.collect_log and self.log_rows:
            cols = list(zip(*self.log_rows))
            names = ["t", "vehicle_id", "lane", "x", "y", "v", "a", "fuel_rate"]
            log = {name: np.concatenate(col) for name, col in zip(names, cols)}
        return RunResult(cfg, metrics, self.heat_sum, self.heat_count, log)


def _plan_view(ep: Episode, ridx: int, cfg: ScenarioConfig, dt: float):
    """Recreate enough of a member's SpeedPlan for replanning."""
    from .control import SpeedPlan

    seg = ep.seg_arc[ridx]
    return SpeedPlan(
        accel=ep.accel[ridx],
        dt=dt,
        ticks_per_segment=round(cfg.cycle_time / dt),
        seg_lengths=seg,
        waypoints=np.cumsum(seg),
        start_speed=cfg.cruise_speed,
        end_speed=cfg.cruise_speed,
        cost=float(ep.accel[ridx] @ ep.accel[ridx]),
        kkt_residual=0.0,
        positions=ep.pos_targets[ridx],
        speeds=np.empty(0),
    )


def _bisect_x(lst: list[tuple[float, int]], x: float) -> int:
    lo, hi = 0, len(lst)
    while lo < hi:
        mid = (lo + hi) // 2
        if lst[mid][0] <= x:
            lo = mid + 1
        else:
            hi = mid
    return lo


def run_scenario(config: ScenarioConfig, collect_log: bool = False) -> RunResult:
    """Run one full experiment; deterministic for a given config."""
    return _Engine(config, collect_log).run()


# ---------------------------------------------------------------------------
# demonstration cases


CASE_IDS = ("1", "2", "lanes-3to1", "lanes-3to2", "lanes-3to4")


@dataclass
class CaseResult:
    case_id: str
    vehicles: list[GridPos]
    targets: list[GridPos]
    num_lanes: int
    table: PathTable
    cycles: int
    exchanges: int
    text: str
    segments: list[tuple[int, list]]


def demo_case(case_id: str) -> CaseResult:
    """Plan one of the documented demonstration groups."""
    shape = FormationShape.INTERLACED
    if case_id == "1":
        vehicles = [(0, 0), (1, 0), (2, 0)]
        targets: list[GridPos] = [(0, 0), (1, 1), (0, 2)]
        lanes = 3
    elif case_id == "2":
        vehicles = [(3, 0), (1, 1), (0, 2), (2, 0)]
        targets = [(0, 0), (1, 1), (0, 2), (2, 0)]
        lanes = 3
    elif case_id == "lanes-3to1":
        vehicles = [(0, 1), (0, 2)]
        targets = formation_targets(shape, 1, 2)
        lanes = 3
    elif case_id == "lanes-3to2":
        vehicles = formation_targets(shape, 3, 4)
        targets = formation_targets(shape, 2, 4)
        lanes = 3
    elif case_id == "lanes-3to4":
        vehicles = formation_targets(shape, 3, 5)
        targets = formation_targets(shape, 4, 5)
        lanes = 4
    else:
        raise ConfigError(
            f"unknown case {case_id!r}; expected one of {', '.join(CASE_IDS)}"
        )

    plan = conflict_free_assignment(vehicles, targets, lanes)
    table, _ = resolve_table_events(build_table(vehicles, plan.paths), plan.targets)
    segments = [
        (
            k + 1,
            compile_row(
                row,
                head_x0=0.0,
                cruise_speed=28.8,
                cycle_time=5.0,
                slot_gap=15.0,
                lane_width=3.5,
            ),
        )
        for k, row in enumerate(table.rows)
    ]
    return CaseResult(
        case_id=case_id,
        vehicles=list(vehicles),
        targets=list(targets),
        num_lanes=lanes,
        table=table,
        cycles=table.n_steps,
        exchanges=plan.exchanges,
        text=serialize_table(table),
        segments=segments,
    )


# ---------------------------------------------------------------------------
# artifact writers (write-then-rename so failures never leave partial files)


def _atomic_write(path: str, write_fn) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        write_fn(fh)
    os.replace(tmp, path)


def metrics_to_json(metrics: dict) -> str:
    return json.dumps(metrics, sort_keys=True, indent=2) + "\n"


def write_metrics_json(path: str, metrics: dict) -> None:
    _atomic_write(path, lambda fh: fh.write(metrics_to_json(metrics)))


def write_heatmap_csv(path: str, result: RunResult) -> None:
    cfg = result.config
    mean = result.heat_mean

    def emit(fh):
        writer = csv.writer(fh)
        writer.writerow(["t_bin", "x_bin", "mean_speed"])
        for ti in range(mean.shape[0]):
            for xi in range(mean.shape[1]):
                value = mean[ti, xi]
                writer.writerow(
                    [
                        f"{ti * cfg.heat_time_bin_s:g}",
                        f"{xi * cfg.heat_space_bin_m:g}",
                        "" if math.isnan(value) else f"{value:.6f}",
                    ]
                )

    _atomic_write(path, emit)


def write_run_log_csv(path: str, result: RunResult) -> None:
    log = result.log or {}
    names = ["t", "vehicle_id", "lane", "x", "y", "v", "a", "fuel_rate"]

    def emit(fh):
        writer = csv.writer(fh)
        writer.writerow(names)
        if not log:
            return
        n = len(log["t"])
        for i in range(n):
            writer.writerow(
                [
                    f"{log['t'][i]:.2f}",
                    int(log["vehicle_id"][i]),
                    int(log["lane"][i]),
                    f"{log['x'][i]:.3f}",
                    f"{log['y'][i]:.3f}",
                    f"{log['v'][i]:.3f}",
                    f"{log['a'][i]:.3f}",
                    f"{log['fuel_rate'][i]:.4f}",
                ]
            )

    _atomic_write(path, emit)


def write_summary_csv(path: str, rows: list[dict]) -> None:
    names = [
        "volume_per_lane",
        "mode",
        "seed",
        "mean_travel_time_s",
        "mean_fuel_l_per_100km",
        "completed",
        "violations",
        "status",
    ]

    def emit(fh):
        writer = csv.DictWriter(fh, fieldnames=names)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)

    _atomic_write(path, emit)


def write_case_artifacts(out_dir: str, case: CaseResult) -> None:
    os.makedirs(out_dir, exist_ok=True)
    map_path = os.path.join(out_dir, f"case_{case.case_id}_map.txt")
    _atomic_write(map_path, lambda fh: fh.write(case.text))
    csv_path = os.path.join(out_dir, f"case_{case.case_id}_trajectories.csv")
    dump_trajectory_csv(csv_path, case.segments)
