"""Sector point-cloud binning and the square occupancy grid fed to the networks.

Points live in the robot frame: robot at the origin, heading along +x,
y to the left. Cells are indexed ``[ring][angular_row]``; ring 0 is the
innermost annulus and angular row 0 the most negative (rightmost) bearing.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels


class ContractError(ValueError):
    """Raised when an operation is called outside its preconditions."""


@dataclass(frozen=True)
class SensorGeometry:
    fov_deg: float = 100.0
    range_m: float = 3.0
    radial_interval_m: float = 0.5
    angular_intervals: int = 5
    radial_intervals: int = 5
    point_threshold: int = 0

    def __post_init__(self):
        if not 0.0 < self.fov_deg <= 360.0:
            raise ContractError(f"fov_deg must lie in (0, 360], got {self.fov_deg}")
        if self.radial_interval_m <= 0:
            raise ContractError("radial_interval_m must be positive")
        if self.angular_intervals != self.radial_intervals:
            raise ContractError("grid must be square (angular_intervals == radial_intervals)")
        if self.angular_intervals < 2:
            raise ContractError("need at least two intervals")
        if self.span_m > self.range_m + 1e-12:
            raise ContractError(
                f"ring span {self.span_m} m exceeds sensor range {self.range_m} m")
        if self.point_threshold < 0:
            raise ContractError("point_threshold must be >= 0")

    @property
    def n(self) -> int:
        return self.radial_intervals

    @property
    def span_m(self) -> float:
        """Outer radius of the ring grid (not the sensor range)."""
        return self.radial_intervals * self.radial_interval_m

    @property
    def half_fov(self) -> float:
        return math.radians(self.fov_deg) / 2.0

    @property
    def dtheta(self) -> float:
        return math.radians(self.fov_deg) / self.angular_intervals

    @property
    def middle_row(self) -> int:
        return self.angular_intervals // 2

    def with_fov(self, fov_deg: float) -> "SensorGeometry":
        return SensorGeometry(fov_deg, self.range_m, self.radial_interval_m,
                              self.angular_intervals, self.radial_intervals,
                              self.point_threshold)

    def to_dict(self) -> dict:
        return {
            "fov_deg": self.fov_deg,
            "range_m": self.range_m,
            "radial_interval_m": self.radial_interval_m,
            "angular_intervals": self.angular_intervals,
            "radial_intervals": self.radial_intervals,
            "point_threshold": self.point_threshold,
        }

    def _kernel_args(self):
        return (self.radial_intervals, self.angular_intervals,
                self.radial_interval_m, self.half_fov, self.dtheta)


@dataclass(frozen=True)
class PolarCountGrid:
    counts: np.ndarray
    geometry: SensorGeometry = field(default_factory=SensorGeometry)

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64)
        g = self.geometry
        if c.shape != (g.radial_intervals, g.angular_intervals):
            raise ContractError(f"counts shape {c.shape} does not match geometry")
        if (c < 0).any():
            raise ContractError("counts must be nonnegative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)


@dataclass(frozen=True)
class OccupancyGrid:
    cells: np.ndarray
    geometry: SensorGeometry = field(default_factory=SensorGeometry)
    counts: np.ndarray | None = None

    def __post_init__(self):
        c = np.array(self.cells, dtype=bool)
        g = self.geometry
        if c.shape != (g.radial_intervals, g.angular_intervals):
            raise ContractError(f"cells shape {c.shape} does not match geometry")
        c.setflags(write=False)
        object.__setattr__(self, "cells", c)

    @classmethod
    def free(cls, geometry: SensorGeometry | None = None) -> "OccupancyGrid":
        g = geometry or SensorGeometry()
        return cls(np.zeros((g.n, g.n), dtype=bool), g)

    @classmethod
    def from_mask(cls, mask: int, geometry: SensorGeometry | None = None) -> "OccupancyGrid":
        """Decode a bit mask where bit ``ring * n + row`` marks an obstacle."""
        g = geometry or SensorGeometry()
        bits = (int(mask) >> np.arange(g.n * g.n)) & 1
        return cls(bits.reshape(g.n, g.n).astype(bool), g)

    def to_mask(self) -> int:
        flat = self.cells.ravel()
        return int(sum(1 << i for i in np.flatnonzero(flat)))

    def as_image(self) -> np.ndarray:
        """Square-grid view: rows = angular rows (y), columns = rings (x)."""
        return self.cells.T.astype(np.float64)

    def to_ascii(self) -> str:
        # printed with the leftmost angular row on top, like a top-down view
        img = self.cells.T[::-1]
        return "\n".join(" ".join("1" if v else "0" for v in row) for row in img)

    @classmethod
    def from_ascii(cls, text: str, geometry: SensorGeometry | None = None) -> "OccupancyGrid":
        g = geometry or SensorGeometry()
        rows = []
        for line in text.strip().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.replace(",", " ").split()
            rows.append([int(t) for t in tokens])
        arr = np.array(rows)
        if arr.shape != (g.n, g.n) or not np.isin(arr, (0, 1)).all():
            raise ContractError(f"expected a {g.n}x{g.n} matrix of 0/1, got shape {arr.shape}")
        return cls(arr[::-1].T.astype(bool), g)


def polar_binning(cloud, geometry: SensorGeometry | None = None) -> PolarCountGrid:
    g = geometry or SensorGeometry()
    pts = np.asarray(cloud, dtype=np.float64).reshape(-1, 2)
    counts = _kernels.bin_points(pts[:, 0], pts[:, 1], *g._kernel_args())
    return PolarCountGrid(counts, g)


def threshold_grid(counts: PolarCountGrid) -> OccupancyGrid:
    g = counts.geometry
    return OccupancyGrid(counts.counts > g.point_threshold, g, counts=counts.counts)


def cell_center(ring: int, angular_row: int, geometry: SensorGeometry | None = None):
    g = geometry or SensorGeometry()
    if not (0 <= ring < g.radial_intervals and 0 <= angular_row < g.angular_intervals):
        raise ContractError(f"cell ({ring}, {angular_row}) out of range")
    rc = (ring + 0.5) * g.radial_interval_m
    tc = -g.half_fov + (angular_row + 0.5) * g.dtheta
    return np.array([rc * math.cos(tc), rc * math.sin(tc)])


def locate_cell(point, geometry: SensorGeometry | None = None):
    """The (ring, angular_row) containing ``point``, or None outside the sector."""
    g = geometry or SensorGeometry()
    p = np.asarray(point, dtype=np.float64)
    ring, row = _kernels.locate_points(p[:1], p[1:2], *g._kernel_args())
    if ring[0] < 0:
        return None
    return int(ring[0]), int(row[0])


def locate_cells(points, geometry: SensorGeometry | None = None):
    """Vectorized locate_cell; returns (ring, row) arrays with -1 outside."""
    g = geometry or SensorGeometry()
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return _kernels.locate_points(pts[:, 0], pts[:, 1], *g._kernel_args())


def read_cloud_csv(path) -> np.ndarray:
    """Two-column x_m,y_m CSV; a non-numeric first row is treated as a header."""
    pts = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                pts.append((float(row[0]), float(row[1])))
            except ValueError:
                if i == 0:
                    continue
                raise
    return np.array(pts, dtype=np.float64).reshape(-1, 2)


def write_cloud_csv(path, cloud) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_m", "y_m"])
        for x, y in np.asarray(cloud).reshape(-1, 2):
            w.writerow([repr(float(x)), repr(float(y))])
