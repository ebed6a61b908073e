"""Kinematic differential-drive simulation of the sense-plan-follow-replan loop."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import SensorGeometry, polar_binning, threshold_grid
from .planner import ALL_BLOCKED, PlanResult, PolicySet, plan_step, to_robot_frame, to_world_frame
from .spline import CostWeights

WHEELBASE = 0.15
WHEEL_RADIUS = 0.05


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2 * math.pi)
    if a <= 0:
        a += 2 * math.pi
    return a - math.pi


@dataclass(frozen=True)
class RobotState:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    wheelbase: float = WHEELBASE
    wheel_radius: float = WHEEL_RADIUS

    @property
    def pose(self):
        return (self.x, self.y, self.heading)

    @property
    def xy(self):
        return np.array([self.x, self.y])


def wheel_twist(omega_left, omega_right, wheel_radius=WHEEL_RADIUS, wheelbase=WHEELBASE):
    """Body speed and yaw rate from wheel angular speeds."""
    v = wheel_radius * (omega_left + omega_right) / 2.0
    w = wheel_radius * (omega_right - omega_left) / wheelbase
    return v, w


def step_dynamics(state: RobotState, v: float, omega: float, dt: float) -> RobotState:
    """Forward-Euler unicycle step."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    h = state.heading
    return replace(state, x=state.x + v * math.cos(h) * dt, y=state.y + v * math.sin(h) * dt,
                   heading=wrap_angle(h + omega * dt))


@dataclass(frozen=True)
class PidGains:
    kp: float = 2.0
    ki: float = 0.0
    kd: float = 0.1
    omega_max: float = 2.5


@dataclass
class PidState:
    integral: float = 0.0
    prev_error: float | None = None


def pid_steer(state: RobotState, waypoint, gains: PidGains, dt: float,
              memory: PidState | None = None) -> float:
    """Yaw-rate command from the heading error toward ``waypoint``.

    ``memory`` carries the integral and previous error between calls; the
    derivative term is zero on the first call.
    """
    memory = memory if memory is not None else PidState()
    bearing = math.atan2(waypoint[1] - state.y, waypoint[0] - state.x)
    e = wrap_angle(bearing - state.heading)
    memory.integral += e * dt
    de = 0.0 if memory.prev_error is None else wrap_angle(e - memory.prev_error) / dt
    memory.prev_error = e
    w = gains.kp * e + gains.ki * memory.integral + gains.kd * de
    return float(np.clip(w, -gains.omega_max, gains.omega_max))


@dataclass(frozen=True)
class WorldScenario:
    obstacle_points: np.ndarray
    start: RobotState = field(default_factory=RobotState)
    target: tuple = (15.0, 0.0)
    arrival_radius: float = 3.0
    kind: str = "custom"

    def __post_init__(self):
        pts = np.asarray(self.obstacle_points, dtype=np.float64).reshape(-1, 2)
        object.__setattr__(self, "obstacle_points", pts)
        if math.dist(self.start.xy, self.target) < self.arrival_radius:
            raise ValueError("start lies inside the arrival radius")


def sense(scenario: WorldScenario, state: RobotState, geometry: SensorGeometry) -> np.ndarray:
    """Obstacle points in the robot frame within range and field of view (no occlusion)."""
    if len(scenario.obstacle_points) == 0:
        return np.zeros((0, 2))
    local = to_robot_frame(scenario.obstacle_points, state.pose)
    r = np.hypot(local[:, 0], local[:, 1])
    bearing = np.abs(np.arctan2(local[:, 1], local[:, 0]))
    keep = (r <= geometry.range_m) & (bearing <= geometry.half_fov)
    return local[keep]


@dataclass(frozen=True)
class SimConfig:
    speed: float = 0.3
    dt: float = 0.05
    gains: PidGains = field(default_factory=PidGains)
    lookahead: float = 0.15
    replan_fraction: float = 0.10
    clearance: float = 0.05
    max_steps: int = 6000
    follow_samples: int = 200


@dataclass
class ReplanEvent:
    step: int
    pose: tuple
    result: PlanResult
    cloud_size: int
    path_world: np.ndarray
    sensed_world: np.ndarray


@dataclass
class EpisodeResult:
    trajectory: np.ndarray  # columns: t, x, y, heading, v, omega, replan_flag
    replan_events: list
    reached: bool
    collided: bool
    steps: int
    cause: str

    @property
    def fallbacks(self) -> int:
        return sum(1 for e in self.replan_events if e.result.fallback_used)

    def path_length(self) -> float:
        xy = self.trajectory[:, 1:3]
        return float(np.linalg.norm(np.diff(xy, axis=0), axis=1).sum())

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y", "heading", "v", "omega", "replan_flag"])
            for row in self.trajectory:
                w.writerow([f"{row[0]:.4f}"] + [f"{v:.9f}" for v in row[1:6]] + [int(row[6])])


def min_clearance(points, xy) -> float:
    if len(points) == 0:
        return math.inf
    d = points - np.asarray(xy)
    return float(np.sqrt((d * d).sum(axis=1)).min())


def _lookahead_point(path_xy, s, start_idx, pos, lookahead):
    seg = path_xy[start_idx:]
    d = np.hypot(seg[:, 0] - pos[0], seg[:, 1] - pos[1])
    k = start_idx + int(d.argmin())
    j = int(np.searchsorted(s, s[k] + lookahead))
    return k, path_xy[min(j, len(path_xy) - 1)]


def run_episode(scenario: WorldScenario, policies: PolicySet,
                config: SimConfig | None = None,
                geometry: SensorGeometry | None = None,
                weights: CostWeights | None = None) -> EpisodeResult:
    cfg = config or SimConfig()
    g = geometry or SensorGeometry()
    w = weights or CostWeights()
    obstacles = scenario.obstacle_points
    target = np.asarray(scenario.target, dtype=np.float64)
    state = scenario.start
    memory = PidState()
    rows = [(0.0, state.x, state.y, state.heading, 0.0, 0.0, 0)]
    events = []
    step = 0
    cause = "step_budget"
    reached = collided = False

    while step < cfg.max_steps:
        if math.dist(state.xy, target) < scenario.arrival_radius:
            reached, cause = True, "reached"
            break
        cloud = sense(scenario, state, g)
        grid = threshold_grid(polar_binning(cloud, g))
        goal_local = to_robot_frame(target, state.pose)
        result = plan_step(grid, goal_local, policies, w, g)
        _, local_pts = result.path.dense(cfg.follow_samples)
        path_xy = to_world_frame(local_pts, state.pose)
        events.append(ReplanEvent(step, state.pose, result, len(cloud), path_xy,
                                  to_world_frame(cloud, state.pose)))
        rows[-1] = rows[-1][:6] + (1,)
        if result.status == ALL_BLOCKED:
            cause = "all_blocked"
            break
        s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(path_xy, axis=0), axis=1))])
        quota = cfg.replan_fraction * s[-1]
        travelled = 0.0
        idx = 0
        while travelled < quota and step < cfg.max_steps:
            idx, wp = _lookahead_point(path_xy, s, idx, state.xy, cfg.lookahead)
            omega = pid_steer(state, wp, cfg.gains, cfg.dt, memory)
            state = step_dynamics(state, cfg.speed, omega, cfg.dt)
            step += 1
            travelled += cfg.speed * cfg.dt
            rows.append((step * cfg.dt, state.x, state.y, state.heading, cfg.speed, omega, 0))
            if min_clearance(obstacles, state.xy) < cfg.clearance:
                collided = True
                break
            if math.dist(state.xy, target) < scenario.arrival_radius:
                break
        if collided:
            cause = "collision"
            break
    return EpisodeResult(np.array(rows, dtype=np.float64), events, reached, collided, step, cause)


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

def square_outline(center, side, spacing=0.05):
    h = side / 2.0
    k = max(1, int(round(side / spacing)))
    t = np.linspace(-h, h, k + 1)[:-1]
    cx, cy = center
    edges = [
        np.stack([cx + t, np.full_like(t, cy - h)], axis=1),
        np.stack([np.full_like(t, cx + h), cy + t], axis=1),
        np.stack([cx - t, np.full_like(t, cy + h)], axis=1),
        np.stack([np.full_like(t, cx - h), cy - t], axis=1),
    ]
    return np.concatenate(edges)


def segment_points(a, b, spacing=0.05):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    length = float(np.linalg.norm(b - a))
    if length == 0:
        return np.zeros((0, 2))
    k = max(1, int(math.ceil(length / spacing)))
    t = np.linspace(0.0, 1.0, k + 1)
    return a + t[:, None] * (b - a)


class ScenarioError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioParams:
    target_distance: float = 15.0
    corridor_width: float = 10.0
    arrival_radius: float = 3.0
    count: int = 10
    obstacle_side: float = 0.4
    min_separation: float = 1.2
    margin_start: float = 1.5
    field_half_width: float = 5.0
    wall_length: float = 2.0
    wall_offset: float = 0.0
    spacing: float = 0.05
    max_attempts: int = 10000


def make_scenario(kind: str, seed: int = 0, params: ScenarioParams | None = None,
                  csv_path=None) -> WorldScenario:
    """Build a world: ``random_field``, ``wall``, or ``custom_csv``.

    Robot starts at the origin heading +x; the target sits
    ``target_distance`` ahead on the x axis.
    """
    p = params or ScenarioParams()
    target = (p.target_distance, 0.0)
    start = RobotState()
    if kind == "random_field":
        rng = np.random.default_rng(seed)
        centers = []
        attempts = 0
        lo_x = p.margin_start
        hi_x = p.target_distance - p.arrival_radius
        while len(centers) < p.count:
            attempts += 1
            if attempts > p.max_attempts:
                raise ScenarioError(f"could not place {p.count} obstacles")
            c = np.array([rng.uniform(lo_x, hi_x), rng.uniform(-p.field_half_width, p.field_half_width)])
            if np.linalg.norm(c) < p.margin_start or np.linalg.norm(c - target) < p.arrival_radius:
                continue
            if any(np.linalg.norm(c - o) < p.min_separation for o in centers):
                continue
            centers.append(c)
        pts = [square_outline(c, p.obstacle_side, p.spacing) for c in centers]
        obstacle_points = np.concatenate(pts) if pts else np.zeros((0, 2))
    elif kind == "wall":
        xw = p.target_distance / 2.0
        half = p.wall_length / 2.0
        obstacle_points = segment_points((xw, p.wall_offset - half), (xw, p.wall_offset + half), p.spacing)
    elif kind == "custom_csv":
        if csv_path is None:
            raise ScenarioError("custom_csv needs a scenario file")
        return read_scenario_csv(csv_path)
    else:
        raise ScenarioError(f"unknown scenario kind {kind!r}")
    return WorldScenario(obstacle_points, start, target, p.arrival_radius, kind)


def write_scenario_csv(path, scenario: WorldScenario):
    s = scenario.start
    with open(path, "w", newline="") as fh:
        fh.write(f"# start {s.x!r} {s.y!r} {s.heading!r}\n")
        fh.write(f"# target {scenario.target[0]!r} {scenario.target[1]!r}\n")
        fh.write(f"# arrival_radius {scenario.arrival_radius!r}\n")
        w = csv.writer(fh)
        w.writerow(["x_m", "y_m"])
        for x, y in scenario.obstacle_points:
            w.writerow([repr(float(x)), repr(float(y))])


def read_scenario_csv(path) -> WorldScenario:
    start, target, radius = RobotState(), (15.0, 0.0), 3.0
    pts = []
    with open(path, newline="") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts and parts[0] == "start":
                    start = RobotState(*map(float, parts[1:4]))
                elif parts and parts[0] == "target":
                    target = (float(parts[1]), float(parts[2]))
                elif parts and parts[0] == "arrival_radius":
                    radius = float(parts[1])
                continue
            fields = line.split(",")
            try:
                pts.append((float(fields[0]), float(fields[1])))
            except ValueError:
                continue
    return WorldScenario(np.array(pts).reshape(-1, 2), start, target, radius, "custom_csv")
