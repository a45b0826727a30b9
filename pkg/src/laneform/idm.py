"""Car-following and gap-acceptance models for the conventional baseline.

The longitudinal model is the Intelligent Driver Model in its standard
form: acceleration decays with the ratio of current to desired speed and
with the ratio of a desired dynamic gap to the actual gap,

    a = a_max * (1 - (v / v0)^delta - (s* / s)^2)
    s* = s0 + max(0, v * T + v * dv / (2 sqrt(a_max * b)))

where dv is the closing speed to the leader (positive when closing).
All entry points accept scalars or numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Gaps below this are treated as touching; the separate overlap monitor
# is responsible for flagging actual contact.
_GAP_FLOOR = 1e-3


@dataclass
class IdmParams:
    desired_speed: float = 33.3  # m/s
    time_headway: float = 1.5  # s
    min_gap: float = 2.0  # m, standstill bumper distance
    max_accel: float = 1.5  # m/s^2
    comfort_decel: float = 2.0  # m/s^2
    exponent: float = 4.0


def idm_accel(speed, gap, closing_speed, params: IdmParams):
    """IDM acceleration; pass gap=inf for a free road."""
    v = np.asarray(speed, dtype=float)
    s = np.maximum(np.asarray(gap, dtype=float), _GAP_FLOOR)
    dv = np.asarray(closing_speed, dtype=float)
    s_star = params.min_gap + np.maximum(
        0.0,
        v * params.time_headway
        + v * dv / (2.0 * np.sqrt(params.max_accel * params.comfort_decel)),
    )
    with np.errstate(divide="ignore"):
        interaction = np.where(np.isinf(s), 0.0, (s_star / s) ** 2)
    accel = params.max_accel * (
        1.0 - (v / params.desired_speed) ** params.exponent - interaction
    )
    if np.ndim(speed) == 0:
        return float(accel)
    return accel


def gap_acceptable(
    lead_gap,
    lag_gap,
    speed,
    follower_speed,
    min_gap: float,
    time_headway: float,
    urgency=1.0,
):
    """Whether a lane change into the adjacent gap is safe to execute.

    Both the gap to the new leader and the gap left to the new follower
    must cover the standstill distance plus a speed-dependent headway
    term.  `urgency` in (0, 1] scales the headway term down; drivers
    close to a forced-merge point accept progressively tighter gaps.
    """
    need_lead = min_gap + urgency * time_headway * np.asarray(speed, dtype=float)
    need_lag = min_gap + urgency * time_headway * np.asarray(follower_speed, dtype=float)
    ok = (np.asarray(lead_gap, dtype=float) >= need_lead) & (
        np.asarray(lag_gap, dtype=float) >= need_lag
    )
    if np.ndim(lead_gap) == 0 and np.ndim(lag_gap) == 0:
        return bool(ok)
    return ok
