"""Fuel consumption model."""

import numpy as np
import pytest

from laneform import FuelParams, fuel_rate, liters_per_100km

P = FuelParams()  # idle 0.44, 0.09 mL/kJ, 1500 kg, 180 N, 0.39 N/(m/s)^2


def test_idle_at_rest():
    assert fuel_rate(0.0, 0.0, P) == pytest.approx(0.44, abs=1e-12)


def test_steady_cruise_hand_value():
    # force = 180 + 0.39 * 28.8^2, power = force * 28.8 W,
    # rate = 0.44 + 0.09 * power / 1000
    v = 28.8
    power = (180.0 + 0.39 * v * v) * v
    want = 0.44 + 0.09 * power / 1000.0
    assert fuel_rate(v, 0.0, P) == pytest.approx(want, abs=1e-9)


def test_acceleration_adds_inertial_power():
    v, a = 20.0, 1.0
    power = (180.0 + 0.39 * v * v + 1500.0 * a) * v
    want = 0.44 + 0.09 * power / 1000.0
    assert fuel_rate(v, a, P) == pytest.approx(want, abs=1e-9)


def test_braking_clamps_to_idle():
    # hard braking makes tractive power negative; the engine only idles
    assert fuel_rate(25.0, -3.0, P) == pytest.approx(0.44, abs=1e-12)


def test_array_matches_scalar():
    vs = np.array([0.0, 10.0, 28.8])
    accs = np.array([0.0, 0.5, -2.0])
    arr = fuel_rate(vs, accs, P)
    assert isinstance(arr, np.ndarray)
    for k in range(3):
        assert arr[k] == pytest.approx(
            fuel_rate(float(vs[k]), float(accs[k]), P), abs=1e-12
        )


def test_liters_per_100km_conversion():
    # 1000 mL over 1000 m is 1 L per km, i.e. 100 L/100km
    assert liters_per_100km(1000.0, 1000.0) == pytest.approx(100.0, abs=1e-12)
    assert liters_per_100km(500.0, 10_000.0) == pytest.approx(5.0, abs=1e-12)


def test_liters_per_100km_rejects_nonpositive_distance():
    with pytest.raises(ValueError):
        liters_per_100km(10.0, 0.0)
    with pytest.raises(ValueError):
        liters_per_100km(10.0, -5.0)
