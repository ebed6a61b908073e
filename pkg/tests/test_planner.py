import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from smartbsp import nets
from smartbsp.grid import OccupancyGrid, SensorGeometry, cell_center
from smartbsp.planner import (ALL_BLOCKED, FALLBACK_OK, OK, ConfigurationError, PolicySet,
                              normalized_targets, plan_step, select_network, to_robot_frame,
                              to_world_frame)
from smartbsp.spline import CostWeights, action_table, build_spline, total_cost

G = SensorGeometry()


def fixed_pair(index, rows, seed=0):
    """A pair whose actor ignores the grid and always prefers ``rows``."""
    pair = nets.PolicyPair.init(index, np.random.default_rng(seed))
    logits = np.zeros((5, 5))
    for k, r in enumerate(rows):
        logits[r, k + 1] = 5.0
    pair.actor["head.b"] = logits.ravel()
    return pair


def fixed_policies(actions):
    return PolicySet([fixed_pair(i + 1, a) for i, a in enumerate(actions)])


# each network heads for its own outer cell in a straight-ish line
DEFAULT_ACTIONS = [(1, 0, 0, 0), (1, 1, 1, 1), (2, 2, 2, 2), (3, 3, 3, 3), (3, 4, 4, 4)]


def test_normalized_targets():
    t = normalized_targets(G)
    np.testing.assert_allclose(t[2], [2.25, 0.0], atol=1e-12)
    for i in range(5):
        np.testing.assert_allclose(t[i], cell_center(4, i, G))
        np.testing.assert_allclose(t[i] * [1, -1], t[4 - i], atol=1e-12)
    wide = normalized_targets(G.with_fov(180))
    assert np.allclose(np.linalg.norm(wide, axis=1), 2.25)
    assert abs(wide[0][1]) > abs(t[0][1])


def test_select_network_examples():
    t = normalized_targets(G)
    assert select_network(t, (10, 0)) == 3
    d = [np.linalg.norm(np.subtract(p, (0, 10))) for p in t]
    assert select_network(t, (0, 10)) == int(np.argmin(d)) + 1 == 5
    assert select_network(t, t[1]) == 2
    # equidistant from every target -> middle
    assert select_network(t, (0, 0)) == 3


@given(st.floats(-20, 20), st.floats(-20, 20), st.floats(0.1, 10))
def test_select_network_scale_invariant(x, y, s):
    # scaling the whole picture about the origin scales every distance
    t = normalized_targets(G)
    scaled = [p * s for p in t]
    assert select_network(t, (x, y)) == select_network(scaled, (x * s, y * s))


def test_free_grid_goes_straight():
    res = plan_step(OccupancyGrid.free(G), (10, 0), fixed_policies(DEFAULT_ACTIONS), geometry=G)
    assert res.status == OK and res.used_network == 3 and not res.fallback_used
    assert res.cost.obs == 0
    assert res.action == (2, 2, 2, 2)


def test_blocked_corridor_falls_back():
    cells = np.zeros((5, 5), bool)
    # rings 1..4 only: the ring-0 middle cell holds the fixed second control
    # point, so blocking it too leaves no collision-free path at all
    cells[1:, 2] = True
    grid = OccupancyGrid(cells, G)
    res = plan_step(grid, (10, 0), fixed_policies(DEFAULT_ACTIONS), geometry=G)
    assert res.fallback_used and res.status == FALLBACK_OK
    assert res.cost.obs == 0
    assert res.used_network != 3
    assert len(res.fallback_costs) == 5
    # exhaustive check that some side path was available at all
    assert action_table(G).collisions(cells[None]).min() == 0
    cells[0, 2] = True
    assert action_table(G).collisions(cells[None]).min() == 1


def test_fallback_ignores_distance():
    cells = np.zeros((5, 5), bool)
    cells[2:, 2] = True
    grid = OccupancyGrid(cells, G)
    pols = fixed_policies(DEFAULT_ACTIONS)
    a = plan_step(grid, (10, 0), pols, CostWeights(0.3, 0.15, 10), G)
    b = plan_step(grid, (10, 0), pols, CostWeights(0.0, 0.15, 10), G)
    assert a.used_network == b.used_network and a.fallback_costs == b.fallback_costs


def test_fallback_costs_are_curvature_plus_collision():
    cells = np.zeros((5, 5), bool)
    cells[3, 2] = True
    grid = OccupancyGrid(cells, G)
    w = CostWeights()
    res = plan_step(grid, (10, 0), fixed_policies(DEFAULT_ACTIONS), w, G)
    for i, a in enumerate(DEFAULT_ACTIONS):
        c = total_cost(build_spline(a, G), grid, (0, 0), w)
        assert res.fallback_costs[i] == pytest.approx(w.rho2 * c.curv + w.rho3 * c.obs)


def test_all_blocked():
    grid = OccupancyGrid(np.ones((5, 5), bool), G)
    res = plan_step(grid, (10, 0), fixed_policies(DEFAULT_ACTIONS), geometry=G)
    assert res.status == ALL_BLOCKED and res.cost.obs == 1


def test_ok_status_never_collides():
    rng = np.random.default_rng(0)
    pols = fixed_policies([tuple(rng.integers(0, 5, 4)) for _ in range(5)])
    for cells in rng.random((10_000, 5, 5)) < 0.15:
        res = plan_step(OccupancyGrid(cells, G), rng.uniform(-5, 15, 2), pols, geometry=G)
        if res.status == OK:
            assert res.cost.obs == 0
        if res.status == ALL_BLOCKED:
            assert all(c >= 10 for c in res.fallback_costs)


def test_missing_network():
    pols = PolicySet([fixed_pair(i, (2, 2, 2, 2)) for i in (1, 2, 3, 5)])
    with pytest.raises(ConfigurationError):
        plan_step(OccupancyGrid.free(G), (10, 0), pols, geometry=G)


def test_policy_dir_round_trip(tmp_path):
    pols = fixed_policies(DEFAULT_ACTIONS)
    pols.save_dir(tmp_path)
    back = PolicySet.load_dir(tmp_path)
    for i in range(1, 6):
        np.testing.assert_array_equal(back[i].actor["head.b"], pols[i].actor["head.b"])
    (tmp_path / "network_4.json").unlink()
    with pytest.raises(ConfigurationError):
        PolicySet.load_dir(tmp_path)


def test_frames():
    np.testing.assert_allclose(to_robot_frame((3.0, -2.0), (0, 0, 0)), (3, -2))
    np.testing.assert_allclose(to_robot_frame((2.0, 0.0), (1, 0, 0)), (1, 0))
    np.testing.assert_allclose(to_robot_frame((0.0, 1.0), (0, 0, math.pi / 2)), (1, 0), atol=1e-15)


@given(st.tuples(st.floats(-50, 50), st.floats(-50, 50)),
       st.tuples(st.floats(-50, 50), st.floats(-50, 50), st.floats(-7, 7)))
def test_frame_round_trip(p, pose):
    back = to_world_frame(to_robot_frame(p, pose), pose)
    np.testing.assert_allclose(back, p, atol=1e-12)
