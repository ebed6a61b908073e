import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smartbsp.grid import (ContractError, OccupancyGrid, PolarCountGrid, SensorGeometry,
                           cell_center, locate_cell, locate_cells, polar_binning,
                           read_cloud_csv, threshold_grid, write_cloud_csv)

from oracles import brute_force_bin

G = SensorGeometry()
FOVS = (100.0, 120.0, 180.0)


def test_empty_cloud_gives_zero_counts():
    c = polar_binning(np.empty((0, 2)), G)
    assert c.counts.shape == (5, 5)
    assert c.counts.sum() == 0


def test_single_point_on_axis():
    c = polar_binning([[1.2, 0.0]], G).counts
    expected = brute_force_bin([[1.2, 0.0]], G)
    assert c[2, 2] == 1 and c.sum() == 1
    np.testing.assert_array_equal(c, expected)


def test_point_beyond_grid_span_dropped():
    # inside the 3 m sensor range but outside the 2.5 m ring span
    assert polar_binning([[2.8, 0.0]], G).counts.sum() == 0


@pytest.mark.parametrize("fov", FOVS)
def test_binning_matches_brute_force(fov):
    g = G.with_fov(fov)
    rng = np.random.default_rng(int(fov))
    r = 1.2 * g.span_m * np.sqrt(rng.random(10_000))
    th = rng.uniform(-np.pi, np.pi, 10_000)
    pts = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
    np.testing.assert_array_equal(polar_binning(pts, g).counts, brute_force_bin(pts, g))


def test_boundaries_are_half_open():
    # on the outer radius or the upper angular bound -> dropped
    outer = [G.span_m, 0.0]
    upper = [math.cos(G.half_fov), math.sin(G.half_fov)]
    lower = [math.cos(-G.half_fov), math.sin(-G.half_fov)]
    assert locate_cell(outer, G) is None
    assert locate_cell(upper, G) is None
    assert locate_cell(lower, G) == (2, 0)
    # ring boundary belongs to the outer ring
    assert locate_cell([0.5, 0.0], G) == (1, 2)


def test_threshold_rule():
    counts = np.zeros((5, 5), dtype=int)
    assert not threshold_grid(PolarCountGrid(counts, G)).cells.any()
    counts[1, 3] = 1
    assert threshold_grid(PolarCountGrid(counts, G)).cells[1, 3]
    counts[1, 3] = 2
    g2 = SensorGeometry(point_threshold=2)
    assert not threshold_grid(PolarCountGrid(counts, g2)).cells[1, 3]


@given(st.lists(st.integers(0, 6), min_size=25, max_size=25), st.integers(0, 5))
def test_threshold_monotone_in_m(values, m):
    counts = np.array(values).reshape(5, 5)
    lo = threshold_grid(PolarCountGrid(counts, SensorGeometry(point_threshold=m))).cells
    hi = threshold_grid(PolarCountGrid(counts, SensorGeometry(point_threshold=m + 1))).cells
    assert not (hi & ~lo).any()


@settings(max_examples=60)
@given(st.lists(st.tuples(st.floats(-4, 4), st.floats(-4, 4)), max_size=80),
       st.sampled_from(FOVS))
def test_counts_conserve_points_in_sector(points, fov):
    g = G.with_fov(fov)
    pts = np.array(points, dtype=float).reshape(-1, 2)
    ring, _ = locate_cells(pts, g)
    assert polar_binning(pts, g).counts.sum() == (ring >= 0).sum()
    np.testing.assert_array_equal(polar_binning(pts, g).counts, brute_force_bin(pts, g))


@pytest.mark.parametrize("ring,row,expected", [
    (0, 2, (0.25, 0.0)),
    (4, 2, (2.25, 0.0)),
    (0, 4, (0.25 * math.cos(math.radians(40)), 0.25 * math.sin(math.radians(40)))),
])
def test_cell_center_values(ring, row, expected):
    np.testing.assert_allclose(cell_center(ring, row, G), expected, atol=1e-12)


def test_cell_center_rejects_bad_index():
    with pytest.raises(ContractError):
        cell_center(5, 0, G)
    with pytest.raises(ContractError):
        cell_center(0, -1, G)


@pytest.mark.parametrize("fov", FOVS)
def test_center_round_trip(fov):
    g = G.with_fov(fov)
    for i in range(g.n):
        for j in range(g.n):
            c = cell_center(i, j, g)
            assert locate_cell(c, g) == (i, j)
            assert brute_force_bin([c], g)[i, j] == 1


def test_locate_origin_and_outside():
    assert locate_cell((0.0, 0.0), G) == (0, 2)
    a = math.radians(60)
    assert locate_cell((math.cos(a), math.sin(a)), G) is None


def test_row_zero_is_rightmost():
    # negative bearing (y < 0) is row 0
    assert locate_cell((1.0, -0.7), G)[1] == 0
    assert locate_cell((1.0, 0.7), G)[1] == 4


def test_geometry_validation():
    with pytest.raises(ContractError):
        SensorGeometry(fov_deg=0)
    with pytest.raises(ContractError):
        SensorGeometry(angular_intervals=4)
    with pytest.raises(ContractError):
        SensorGeometry(range_m=2.0)


def test_ascii_and_mask_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(20):
        grid = OccupancyGrid(rng.random((5, 5)) < 0.3, G)
        assert np.array_equal(OccupancyGrid.from_ascii(grid.to_ascii(), G).cells, grid.cells)
        assert np.array_equal(OccupancyGrid.from_mask(grid.to_mask(), G).cells, grid.cells)


def test_ascii_top_line_is_leftmost_row():
    cells = np.zeros((5, 5), bool)
    cells[0, 4] = True
    text = OccupancyGrid(cells, G).to_ascii().splitlines()
    assert text[0] == "1 0 0 0 0"


def test_malformed_ascii():
    with pytest.raises(ContractError):
        OccupancyGrid.from_ascii("0 1\n1 0", G)


def test_cloud_csv_round_trip(tmp_path):
    pts = np.random.default_rng(0).normal(size=(30, 2))
    p = tmp_path / "cloud.csv"
    write_cloud_csv(p, pts)
    np.testing.assert_array_equal(read_cloud_csv(p), pts)
