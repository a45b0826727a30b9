"""Grid geometry: distances, formation layouts, cost matrices."""

import numpy as np
import pytest

from laneform import (
    FormationShape,
    MalformedInstanceError,
    cost_matrix,
    formation_targets,
    grid_distance,
    is_valid_pos,
    is_valid_step,
)

from oracles import bfs_grid_distance


def test_distance_unit_weights_is_chebyshev():
    assert grid_distance((0, 0), (0, 0)) == 0
    assert grid_distance((0, 0), (3, 0)) == 3
    assert grid_distance((0, 0), (0, 2)) == 2
    assert grid_distance((2, 0), (0, 2)) == 2  # two oblique moves
    assert grid_distance((5, 1), (1, 3)) == 4
    assert grid_distance((1, 3), (5, 1)) == 4  # symmetric


def test_distance_weighted_fixture():
    # 3 slots, 1 lane apart: one oblique plus two straight moves
    assert grid_distance((0, 0), (3, 1), 1.5, 2.0) == pytest.approx(2.0 + 3.0)
    # pure diagonal pays only the oblique weight
    assert grid_distance((0, 0), (2, 2), 1.5, 2.0) == pytest.approx(4.0)


def test_distance_matches_graph_search():
    rng = np.random.default_rng(101)
    for _ in range(250):
        lanes = int(rng.integers(1, 5))
        a = (int(rng.integers(0, 7)), int(rng.integers(0, lanes)))
        b = (int(rng.integers(0, 7)), int(rng.integers(0, lanes)))
        # closed form equals the true graph distance when an oblique
        # move costs at least a straight one and at most two (otherwise
        # zig-zag detours undercut it)
        sw = float(rng.uniform(0.7, 1.4))
        ow = float(rng.uniform(sw, 2.0 * sw))
        want = bfs_grid_distance(a, b, lanes, sw, ow)
        got = grid_distance(a, b, sw, ow)
        assert got == pytest.approx(want, abs=1e-9), (a, b, lanes, sw, ow)


def test_distance_triangle_inequality():
    rng = np.random.default_rng(7)
    for _ in range(200):
        pts = [(int(rng.integers(0, 8)), int(rng.integers(0, 4))) for _ in range(3)]
        a, b, c = pts
        assert grid_distance(a, c) <= grid_distance(a, b) + grid_distance(b, c)


def test_validity_predicates():
    assert is_valid_pos((0, 0), 3)
    assert is_valid_pos((9, 2), 3)
    assert not is_valid_pos((-1, 0), 3)
    assert not is_valid_pos((0, 3), 3)
    assert not is_valid_pos((0, -1), 3)
    assert is_valid_step((0, 0))
    assert is_valid_step((-1, 1))
    assert not is_valid_step((2, 0))
    assert not is_valid_step((0, -2))


def test_interlaced_targets_three_lanes():
    assert formation_targets(FormationShape.INTERLACED, 3, 3) == [
        (0, 0), (0, 2), (1, 1),
    ]
    assert formation_targets(FormationShape.INTERLACED, 3, 4) == [
        (0, 0), (0, 2), (1, 1), (2, 0),
    ]
    assert formation_targets(FormationShape.INTERLACED, 3, 5) == [
        (0, 0), (0, 2), (1, 1), (2, 0), (2, 2),
    ]


def test_interlaced_targets_edge_lane_counts():
    assert formation_targets(FormationShape.INTERLACED, 1, 3) == [
        (0, 0), (2, 0), (4, 0),
    ]
    assert formation_targets(FormationShape.INTERLACED, 4, 5) == [
        (0, 0), (0, 2), (1, 1), (1, 3), (2, 0),
    ]
    assert formation_targets(FormationShape.INTERLACED, 2, 4) == [
        (0, 0), (1, 1), (2, 0), (3, 1),
    ]


def test_parallel_targets_fill_every_cell():
    assert formation_targets(FormationShape.PARALLEL, 3, 4) == [
        (0, 0), (0, 1), (0, 2), (1, 0),
    ]
    assert formation_targets(FormationShape.PARALLEL, 2, 5) == [
        (0, 0), (0, 1), (1, 0), (1, 1), (2, 0),
    ]


def test_targets_prefix_monotone():
    rng = np.random.default_rng(3)
    for _ in range(50):
        lanes = int(rng.integers(1, 5))
        n = int(rng.integers(0, 12))
        shape = rng.choice(list(FormationShape))
        small = formation_targets(shape, lanes, n)
        big = formation_targets(shape, lanes, n + 1)
        assert big[:n] == small


def test_interlaced_cells_never_laterally_or_longitudinally_adjacent():
    for lanes in (2, 3, 4, 5):
        cells = formation_targets(FormationShape.INTERLACED, lanes, 12)
        assert all((s + l) % 2 == 0 for s, l in cells)
        for i, (s1, l1) in enumerate(cells):
            for s2, l2 in cells[i + 1 :]:
                same_lane_touching = l1 == l2 and abs(s1 - s2) == 1
                same_slot_touching = s1 == s2 and abs(l1 - l2) == 1
                assert not same_lane_touching and not same_slot_touching


def test_targets_rejects_bad_arguments():
    with pytest.raises(MalformedInstanceError):
        formation_targets(FormationShape.INTERLACED, 0, 3)
    with pytest.raises(MalformedInstanceError):
        formation_targets(FormationShape.PARALLEL, 3, -1)


def test_cost_matrix_values_and_shape():
    vehicles = [(0, 0), (1, 0), (2, 0)]
    targets = [(0, 0), (1, 1), (0, 2)]
    m = cost_matrix(vehicles, targets)
    assert m.shape == (3, 3)
    for i, v in enumerate(vehicles):
        for j, t in enumerate(targets):
            assert m[i, j] == grid_distance(v, t)


def test_cost_matrix_size_mismatch():
    with pytest.raises(MalformedInstanceError):
        cost_matrix([(0, 0)], [(0, 0), (1, 0)])
