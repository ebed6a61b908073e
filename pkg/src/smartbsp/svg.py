"""Minimal self-contained SVG output for grids, planned paths and episodes."""
from __future__ import annotations

import math

import numpy as np

from .grid import OccupancyGrid, SensorGeometry


class _Canvas:
    def __init__(self, xmin, xmax, ymin, ymax, width=800):
        self.xmin, self.ymax = xmin, ymax
        self.scale = width / max(xmax - xmin, 1e-9)
        self.w = width
        self.h = int(math.ceil((ymax - ymin) * self.scale))
        self.items = []

    def pt(self, x, y):
        return (x - self.xmin) * self.scale, (self.ymax - y) * self.scale

    def polyline(self, xy, stroke, width=2.0, dash=None):
        if len(xy) < 2:
            return
        pts = " ".join("%.2f,%.2f" % self.pt(x, y) for x, y in xy)
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
                          f'stroke-width="{width}"{extra}/>')

    def polygon(self, xy, fill, stroke="#888", opacity=1.0):
        pts = " ".join("%.2f,%.2f" % self.pt(x, y) for x, y in xy)
        self.items.append(f'<polygon points="{pts}" fill="{fill}" stroke="{stroke}" '
                          f'stroke-width="0.5" fill-opacity="{opacity}"/>')

    def dots(self, xy, fill, r=1.5):
        for x, y in xy:
            cx, cy = self.pt(x, y)
            self.items.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{r}" fill="{fill}"/>')

    def circle(self, x, y, radius_m, stroke, fill="none"):
        cx, cy = self.pt(x, y)
        self.items.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{radius_m * self.scale:.2f}" '
                          f'fill="{fill}" stroke="{stroke}" stroke-width="1"/>')

    def render(self):
        body = "\n".join(self.items)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
                f'viewBox="0 0 {self.w} {self.h}">\n<rect width="100%" height="100%" fill="white"/>\n'
                f"{body}\n</svg>\n")


def _cell_polygon(ring, row, g: SensorGeometry, pose=None, k=6):
    r0, r1 = ring * g.radial_interval_m, (ring + 1) * g.radial_interval_m
    a0 = -g.half_fov + row * g.dtheta
    a = np.linspace(a0, a0 + g.dtheta, k)
    outer = np.stack([r1 * np.cos(a), r1 * np.sin(a)], axis=1)
    inner = np.stack([r0 * np.cos(a[::-1]), r0 * np.sin(a[::-1])], axis=1)
    poly = np.concatenate([outer, inner])
    if pose is not None:
        from .planner import to_world_frame
        poly = to_world_frame(poly, pose)
    return poly


def grid_path_svg(grid: OccupancyGrid, path_xy=None, target=None, control_points=None) -> str:
    """Polar grid (obstacles shaded) with an optional path overlay, robot frame."""
    g = grid.geometry
    R = g.span_m
    c = _Canvas(-0.2, R + 0.3, -R - 0.2, R + 0.2, width=600)
    for i in range(g.n):
        for j in range(g.n):
            c.polygon(_cell_polygon(i, j, g), "#d33" if grid.cells[i, j] else "#f4f4f4",
                      opacity=0.8 if grid.cells[i, j] else 1.0)
    if control_points is not None:
        c.polyline(control_points, "#999", 1.0, dash="4,3")
        c.dots(control_points, "#555", 3)
    if path_xy is not None:
        c.polyline(path_xy, "#1565c0", 2.5)
    if target is not None:
        c.dots([target], "#2e7d32", 5)
    c.dots([(0.0, 0.0)], "#000", 4)
    return c.render()


def episode_svg(scenario, result, every=1) -> str:
    """World view: obstacle points, sensed points and planned splines per replan, driven path."""
    traj = result.trajectory[:, 1:3]
    pts = [traj, np.asarray([scenario.target])]
    if len(scenario.obstacle_points):
        pts.append(scenario.obstacle_points)
    allp = np.concatenate(pts)
    lo = allp.min(axis=0) - 1.0
    hi = allp.max(axis=0) + 1.0
    c = _Canvas(lo[0], hi[0], lo[1], hi[1], width=1000)
    c.circle(scenario.target[0], scenario.target[1], scenario.arrival_radius, "#2e7d32")
    c.dots(scenario.obstacle_points, "#333", 1.2)
    for k, ev in enumerate(result.replan_events):
        if k % every:
            continue
        if len(ev.sensed_world):
            c.dots(ev.sensed_world, "#e53935", 1.0)
        c.polyline(ev.path_world, "#90caf9" if not ev.result.fallback_used else "#ffb74d", 1.0)
    c.polyline(traj, "#0d47a1", 2.0)
    c.dots([traj[0]], "#fbc02d", 5)
    c.dots([scenario.target], "#2e7d32", 5)
    return c.render()
