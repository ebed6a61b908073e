"""Clamped B-spline paths over grid control points, and the path cost.

The cost of a path is a weighted sum of three terms: distance from the
path end to a target, curvature energy, and a 0/1 collision indicator
against the occupancy grid.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels
from .grid import ContractError, OccupancyGrid, SensorGeometry, cell_center, locate_cells


class DegenerateCurveError(ArithmeticError):
    """Path speed vanishes at a quadrature node, so curvature is undefined."""


DEGREE = 3
QUAD_NODES = 201
COLLISION_SAMPLES = 200


def clamped_uniform_knots(n_ctrl: int, degree: int = DEGREE) -> np.ndarray:
    if n_ctrl < degree + 1:
        raise ContractError(f"need at least {degree + 1} control points, got {n_ctrl}")
    inner = np.linspace(0.0, 1.0, n_ctrl - degree + 1)
    return np.concatenate([np.zeros(degree), inner, np.ones(degree)])


@lru_cache(maxsize=64)
def _basis_cached(n_ctrl, degree, n_samples, nderiv):
    knots = clamped_uniform_knots(n_ctrl, degree)
    ts = np.linspace(0.0, 1.0, n_samples)
    b = _kernels.basis(knots, degree, ts, nderiv)
    b.setflags(write=False)
    return ts, b


def basis_matrices(n_ctrl, n_samples, nderiv=0, degree=DEGREE):
    """Parameter values and basis (and derivative) matrices on a uniform grid."""
    return _basis_cached(int(n_ctrl), int(degree), int(n_samples), int(nderiv))


@dataclass(frozen=True)
class ActionVector:
    rows: tuple

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(int(r) for r in self.rows))

    def validate(self, geometry: SensorGeometry):
        n = geometry.n
        if len(self.rows) != n - 1:
            raise ContractError(f"action needs {n - 1} rows, got {len(self.rows)}")
        for r in self.rows:
            if not 0 <= r < n:
                raise ContractError(f"row index {r} outside [0, {n})")

    def mirrored(self, geometry: SensorGeometry | None = None) -> "ActionVector":
        n = (geometry or SensorGeometry()).n
        return ActionVector(tuple(n - 1 - r for r in self.rows))


@dataclass(frozen=True)
class CostWeights:
    rho1: float = 0.3
    rho2: float = 0.15
    rho3: float = 10.0

    def __post_init__(self):
        if min(self.rho1, self.rho2, self.rho3) < 0:
            raise ContractError("cost weights must be nonnegative")

    def to_dict(self):
        return {"rho1": self.rho1, "rho2": self.rho2, "rho3": self.rho3}


@dataclass(frozen=True)
class CostBreakdown:
    dist: float
    curv: float
    obs: int
    total: float


@dataclass(frozen=True)
class SplinePath:
    """Clamped uniform B-spline through ``points[0]`` and ``points[-1]``."""

    points: np.ndarray
    degree: int = DEGREE
    n_samples: int = COLLISION_SAMPLES
    knots: np.ndarray = field(init=False, repr=False)
    samples: np.ndarray = field(init=False, repr=False)
    sample_t: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 2)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "knots", clamped_uniform_knots(len(pts), self.degree))
        ts, b = basis_matrices(len(pts), self.n_samples, 0, self.degree)
        object.__setattr__(self, "sample_t", ts)
        object.__setattr__(self, "samples", b[0] @ pts)

    @property
    def start(self):
        return self.points[0]

    @property
    def end(self):
        return self.points[-1]

    def evaluate(self, ts, nderiv=0):
        """Points (and derivatives) at parameters ``ts``; shape (nderiv+1, len, 2)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=np.float64))
        if ((ts < 0) | (ts > 1)).any():
            raise ContractError("spline parameter outside [0, 1]")
        b = _kernels.basis(self.knots, self.degree, ts, nderiv)
        return b @ self.points

    def dense(self, n):
        ts, b = basis_matrices(len(self.points), n, 0, self.degree)
        return ts, b[0] @ self.points

    def arc_length(self, n=401):
        _, pts = self.dense(n)
        return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())

    def to_csv(self, path, n=None):
        ts, pts = (self.sample_t, self.samples) if n is None else self.dense(n)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x_m", "y_m"])
            for t, (x, y) in zip(ts, pts):
                w.writerow([f"{t:.6f}", f"{x:.9f}", f"{y:.9f}"])


def control_polygon(action: ActionVector, geometry: SensorGeometry | None = None) -> np.ndarray:
    """Origin, the fixed straight-ahead point, then one chosen cell per outer ring."""
    g = geometry or SensorGeometry()
    action.validate(g)
    pts = [np.zeros(2), cell_center(0, g.middle_row, g)]
    for k, row in enumerate(action.rows):
        pts.append(cell_center(k + 1, row, g))
    return np.array(pts)


def build_spline(action, geometry: SensorGeometry | None = None) -> SplinePath:
    if not isinstance(action, ActionVector):
        action = ActionVector(action)
    return SplinePath(control_polygon(action, geometry))


def distance_cost(path: SplinePath, target) -> float:
    return float(np.linalg.norm(path.end - np.asarray(target, dtype=np.float64)))


def _simpson_weights(n):
    if n < 3 or n % 2 == 0:
        raise ContractError("Simpson's rule needs an odd node count >= 3")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / (3.0 * (n - 1))


def curvature_integrand(d1, d2, arc_length=True):
    speed2 = d1[..., 0] ** 2 + d1[..., 1] ** 2
    speed = np.sqrt(speed2)
    cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
    with np.errstate(invalid="ignore", divide="ignore"):
        kappa2 = cross ** 2 / np.maximum(speed2, 1e-300) ** 3
    return kappa2 * speed if arc_length else kappa2, speed


@lru_cache(maxsize=64)
def _quadrature(n_ctrl, degree, nodes):
    """Composite Simpson nodes/weights laid out span by span.

    Curvature is only piecewise smooth (kinks at interior knots), so each
    knot span gets its own panels; ``nodes`` is split evenly across spans
    and rounded up to an even interval count per span.
    """
    knots = clamped_uniform_knots(n_ctrl, degree)
    edges = np.unique(knots)
    spans = len(edges) - 1
    per = max(2, int(math.ceil((nodes - 1) / spans)))
    per += per % 2
    ts, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        t = np.linspace(a, b, per + 1)
        w = _simpson_weights(per + 1) * (b - a)
        ts.append(t)
        ws.append(w)
    ts, ws = np.concatenate(ts), np.concatenate(ws)
    b = _kernels.basis(knots, degree, ts, 2)
    for arr in (ts, ws, b):
        arr.setflags(write=False)
    return ts, ws, b


def curvature_cost(path: SplinePath, nodes: int = QUAD_NODES, arc_length: bool = True) -> float:
    """Integral of squared curvature, by composite Simpson over the spline parameter.

    With ``arc_length`` (default) the integrand carries the speed factor so the
    result is the parametrization-free energy; otherwise it integrates over t.
    """
    _, w, b = _quadrature(len(path.points), path.degree, int(nodes))
    d1 = b[1] @ path.points
    d2 = b[2] @ path.points
    f, speed = curvature_integrand(d1, d2, arc_length)
    if speed.min() < 1e-9:
        raise DegenerateCurveError(f"path speed {speed.min():.3g} below 1e-9")
    return float(w @ f)


def obstacle_cost(path: SplinePath, grid: OccupancyGrid) -> int:
    ring, row = locate_cells(path.samples, grid.geometry)
    ok = ring >= 0
    return int(grid.cells[ring[ok], row[ok]].any())


def total_cost(path: SplinePath, grid: OccupancyGrid, target,
               weights: CostWeights | None = None, nodes: int = QUAD_NODES,
               arc_length: bool = True) -> CostBreakdown:
    w = weights or CostWeights()
    d = distance_cost(path, target)
    c = curvature_cost(path, nodes, arc_length)
    o = obstacle_cost(path, grid)
    return CostBreakdown(d, c, o, w.rho1 * d + w.rho2 * c + w.rho3 * o)


# ---------------------------------------------------------------------------
# exhaustive action table
# ---------------------------------------------------------------------------

def all_actions(geometry: SensorGeometry | None = None) -> np.ndarray:
    g = geometry or SensorGeometry()
    return np.array(list(itertools.product(range(g.n), repeat=g.n - 1)), dtype=np.int64)


def action_index(rows, n: int = 5):
    """Flat index of an action (or array of actions) into ``all_actions`` order."""
    rows = np.asarray(rows, dtype=np.int64)
    powers = n ** np.arange(rows.shape[-1] - 1, -1, -1)
    return rows @ powers


class ActionTable:
    """Grid-independent path quantities for every action, computed once.

    Curvature and endpoints depend only on the action; collision depends on
    the grid only through the set of cells each path's samples fall in, so
    ``visits[a, ring * n + row]`` records that set.
    """

    def __init__(self, geometry: SensorGeometry | None = None, nodes: int = QUAD_NODES,
                 arc_length: bool = True):
        g = geometry or SensorGeometry()
        self.geometry = g
        self.actions = all_actions(g)
        n = g.n
        self.endpoints = np.empty((len(self.actions), 2))
        self.curv = np.empty(len(self.actions))
        self.visits = np.zeros((len(self.actions), n * n), dtype=bool)
        for i, a in enumerate(self.actions):
            path = build_spline(ActionVector(a), g)
            self.endpoints[i] = path.end
            self.curv[i] = curvature_cost(path, nodes, arc_length)
            ring, row = locate_cells(path.samples, g)
            ok = ring >= 0
            self.visits[i, ring[ok] * n + row[ok]] = True
        self._visits_f = self.visits.astype(np.float64)

    def distances(self, target) -> np.ndarray:
        return np.linalg.norm(self.endpoints - np.asarray(target, dtype=np.float64), axis=1)

    def collisions(self, grids) -> np.ndarray:
        """Collision indicator, shape (len(grids), n_actions), for a stack of cell arrays."""
        flat = np.asarray(grids, dtype=np.float64).reshape(-1, self.visits.shape[1])
        return (flat @ self._visits_f.T > 0).astype(np.int64)

    def costs(self, grids, target, weights: CostWeights | None = None) -> np.ndarray:
        w = weights or CostWeights()
        base = w.rho1 * self.distances(target) + w.rho2 * self.curv
        return base[None, :] + w.rho3 * self.collisions(grids)

    def lookup(self, rows) -> np.ndarray:
        return action_index(rows, self.geometry.n)


@lru_cache(maxsize=8)
def action_table(geometry: SensorGeometry | None = None) -> ActionTable:
    return ActionTable(geometry or SensorGeometry())


def arc_polygon(radius, sweep_rad, n_ctrl=6):
    """Control points evenly spaced on a circular arc leaving the origin along +x."""
    phi = np.linspace(0.0, sweep_rad, n_ctrl)
    return np.stack([radius * np.sin(phi), radius * (1 - np.cos(phi))], axis=1)
