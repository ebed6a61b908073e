"""One planning decision: pick a target network, check its path, fall back if blocked."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nets
from .grid import OccupancyGrid, SensorGeometry, cell_center
from .spline import CostBreakdown, CostWeights, SplinePath, build_spline, total_cost

OK = "ok"
FALLBACK_OK = "fallback_ok"
ALL_BLOCKED = "all_blocked"


class ConfigurationError(RuntimeError):
    """Planner is missing networks or was configured inconsistently."""


def normalized_targets(geometry: SensorGeometry | None = None) -> list:
    """Outer-ring cell centers ordered by angular row (index 1 = rightmost)."""
    g = geometry or SensorGeometry()
    return [cell_center(g.n - 1, j, g) for j in range(g.angular_intervals)]


def select_network(targets, final_target_robot) -> int:
    """1-based index of the target closest to the final target.

    Ties go to the middle row first, then to the lower index.
    """
    if len(targets) == 0:
        raise ValueError("no candidate targets")
    goal = np.asarray(final_target_robot, dtype=np.float64)
    d = np.array([np.linalg.norm(np.asarray(t) - goal) for t in targets])
    mid = len(targets) // 2
    best = d.min()
    tied = [i for i in range(len(targets)) if d[i] <= best * (1 + 1e-12) + 1e-15]
    i = min(tied, key=lambda k: (abs(k - mid), k))
    return i + 1


class PolicySet:
    """The five trained pairs, addressed by 1-based target index."""

    def __init__(self, pairs):
        self.pairs = {}
        for p in pairs:
            self.pairs[int(p.target_index)] = p

    def __getitem__(self, index) -> nets.PolicyPair:
        try:
            return self.pairs[index]
        except KeyError:
            raise ConfigurationError(f"no network loaded for target {index}") from None

    def __len__(self):
        return len(self.pairs)

    def require(self, n):
        missing = [i for i in range(1, n + 1) if i not in self.pairs]
        if missing:
            raise ConfigurationError(f"missing network weights for targets {missing}")

    @classmethod
    def load_dir(cls, directory, n=5) -> "PolicySet":
        d = Path(directory)
        pairs = []
        for i in range(1, n + 1):
            f = d / weight_filename(i)
            if not f.exists():
                raise ConfigurationError(f"missing weight file {f}")
            pairs.append(nets.load_weights(f, expect_target=i))
        return cls(pairs)

    def save_dir(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for i, p in sorted(self.pairs.items()):
            nets.save_weights(p, d / weight_filename(i))


def weight_filename(index: int) -> str:
    return f"network_{index}.json"


@dataclass(frozen=True)
class TargetFrame:
    final_target_world: np.ndarray
    final_target_robot: np.ndarray
    normalized_targets: tuple
    chosen_index: int
    temporary_index: int | None = None


@dataclass(frozen=True)
class PlanResult:
    path: SplinePath
    action: tuple
    cost: CostBreakdown
    used_network: int
    fallback_used: bool
    status: str
    chosen_index: int
    fallback_costs: tuple = ()


def plan_step(grid: OccupancyGrid, final_target_robot, policies: PolicySet,
              weights: CostWeights | None = None,
              geometry: SensorGeometry | None = None) -> PlanResult:
    g = geometry or grid.geometry
    w = weights or CostWeights()
    policies.require(g.n)
    targets = normalized_targets(g)
    chosen = select_network(targets, final_target_robot)
    action = policies[chosen].modal_action(grid)
    path = build_spline(action, g)
    cost = total_cost(path, grid, targets[chosen - 1], w)
    if cost.obs == 0:
        return PlanResult(path, action.rows, cost, chosen, False, OK, chosen)

    # distance-free cost over every network's modal path
    goal = np.asarray(final_target_robot, dtype=np.float64)
    cands = []
    for i in range(1, g.n + 1):
        a = action if i == chosen else policies[i].modal_action(grid)
        p = path if i == chosen else build_spline(a, g)
        c = total_cost(p, grid, targets[i - 1], w)
        cands.append((w.rho2 * c.curv + w.rho3 * c.obs, i, a, p, c))
    fb = tuple(c[0] for c in cands)
    best = min(cands, key=lambda c: (c[0], float(np.linalg.norm(targets[c[1] - 1] - goal)), c[1]))
    _, i, a, p, c = best
    status = FALLBACK_OK if c.obs == 0 else ALL_BLOCKED
    return PlanResult(p, a.rows, c, i, True, status, chosen, fb)


def to_robot_frame(world_point, pose):
    """World point into the frame of a robot at ``pose = (x, y, heading)``."""
    x, y, h = pose
    dx = np.asarray(world_point, dtype=np.float64)[..., 0] - x
    dy = np.asarray(world_point, dtype=np.float64)[..., 1] - y
    c, s = math.cos(h), math.sin(h)
    return np.stack([c * dx + s * dy, -s * dx + c * dy], axis=-1)


def to_world_frame(robot_point, pose):
    x, y, h = pose
    p = np.asarray(robot_point, dtype=np.float64)
    c, s = math.cos(h), math.sin(h)
    return np.stack([x + c * p[..., 0] - s * p[..., 1], y + s * p[..., 0] + c * p[..., 1]], axis=-1)
