"""Instantaneous fuel consumption from tractive power.

The model follows the usual power-demand structure: a constant idle
draw, plus fuel proportional to positive tractive power.  Tractive
force combines rolling resistance, aerodynamic drag, and inertia:

    F = c_roll + c_drag * v^2 + mass * a          [N]
    P = F * v                                     [W]
    rate = idle + k_e * max(0, P) / 1000          [mL/s]

Negative power (braking, coasting) burns at the idle rate; there is no
regeneration.  The default coefficients describe a mid-size passenger
car and put steady cruising at 28.8 m/s near 6.0 L/100km.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class FuelParams:
    idle_rate: float = 0.44  # mL/s at zero tractive power
    energy_rate: float = 0.09  # mL per kJ of positive tractive work
    mass: float = 1500.0  # kg
    rolling_resistance: float = 180.0  # N
    drag_coeff: float = 0.39  # N per (m/s)^2


def fuel_rate(speed, accel, params: FuelParams):
    """Fuel flow in mL/s for scalar or array speed [m/s] and accel [m/s^2]."""
    v = np.asarray(speed, dtype=float)
    a = np.asarray(accel, dtype=float)
    force = params.rolling_resistance + params.drag_coeff * v * v + params.mass * a
    power = force * v  # W
    rate = params.idle_rate + params.energy_rate * np.maximum(0.0, power) / 1000.0
    if np.ndim(speed) == 0 and np.ndim(accel) == 0:
        return float(rate)
    return rate


def liters_per_100km(total_ml: float, distance_m: float) -> float:
    """Convert an accumulated burn over a driven distance to L/100km."""
    if distance_m <= 0:
        raise ValueError("distance must be positive")
    return (total_ml / 1000.0) / (distance_m / 100_000.0)
