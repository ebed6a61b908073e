"""Self-supervised PPO training of the five target-specific policy pairs.

There are no state transitions: each grid is a one-shot decision, the
sampled path's cost is the whole return, and the critic regresses the
expected cost for that grid.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import nets
from .grid import OccupancyGrid, SensorGeometry, cell_center
from .spline import ActionTable, CostWeights, action_table

log = logging.getLogger(__name__)

N_TARGETS = 5


class TrainingDiverged(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class PpoHyper:
    batch_size: int = 10
    epochs: int = 3
    learning_rate: float = 0.001
    clip_epsilon: float = 0.2
    updates_per_iteration: int = 5
    dataset_size: int = 10000
    obstacle_prob: float = 0.15
    seed: int = 0
    normalize_advantage: bool = False

    def __post_init__(self):
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        for name in ("batch_size", "updates_per_iteration", "dataset_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not 0.0 <= self.obstacle_prob <= 1.0:
            raise ValueError("obstacle_prob must be a probability")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class PpoBatchItem:
    grid: np.ndarray
    action: np.ndarray
    log_prob_old: float
    cost: float
    baseline: float
    advantage: float


@dataclass
class TrainReport:
    target_index: int
    seed: int
    mean_cost: list = field(default_factory=list)
    collision_rate: list = field(default_factory=list)
    actor_loss: list = field(default_factory=list)
    critic_loss: list = field(default_factory=list)
    success_rate: float = float("nan")
    wall_clock_s: float = 0.0
    skipped_updates: int = 0

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "mean_cost", "collision_rate", "actor_loss", "critic_loss"])
            for i, row in enumerate(zip(self.mean_cost, self.collision_rate,
                                        self.actor_loss, self.critic_loss)):
                w.writerow([i] + [repr(float(v)) for v in row])


def normalized_target(index: int, geometry: SensorGeometry | None = None):
    """Center of outer-ring cell for network ``index`` (1-based, by angular row)."""
    g = geometry or SensorGeometry()
    if not 1 <= index <= g.n:
        raise ValueError(f"target index {index} outside 1..{g.n}")
    return cell_center(g.n - 1, index - 1, g)


def gen_training_grids(count, obstacle_prob, seed, geometry: SensorGeometry | None = None):
    """Random grids as a (count, n, n) bool array indexed [k][ring][row].

    Each cell is independently an obstacle with probability ``obstacle_prob``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    n = (geometry or SensorGeometry()).n
    rng = np.random.default_rng(seed)
    return rng.random((count, n, n)) < obstacle_prob


def compute_advantage(cost, baseline):
    """Cost minus baseline: positive when the sample was worse than expected."""
    return cost - baseline


def cso_objective(log_prob_new, log_prob_old, advantage, clip_epsilon):
    """Clipped surrogate objective (to be maximized) for cost-sense advantages.

    The advantage is negated internally so that cheaper-than-expected
    samples get positive weight.
    """
    r = np.exp(np.asarray(log_prob_new) - np.asarray(log_prob_old))
    a = -np.asarray(advantage, dtype=np.float64)
    return np.minimum(r * a, np.clip(r, 1 - clip_epsilon, 1 + clip_epsilon) * a)


def cso_grad(log_prob_new, log_prob_old, advantage, clip_epsilon):
    """d cso_objective / d log_prob_new, elementwise."""
    r = np.exp(log_prob_new - log_prob_old)
    a = -advantage
    unclipped = r * a
    clipped = np.clip(r, 1 - clip_epsilon, 1 + clip_epsilon) * a
    return np.where(unclipped <= clipped, unclipped, 0.0)


def critic_loss(costs, estimates):
    costs = np.asarray(costs, dtype=np.float64)
    estimates = np.asarray(estimates, dtype=np.float64)
    if costs.shape != estimates.shape or costs.size == 0:
        raise ValueError("costs and estimates must be nonempty and equal length")
    return float(np.mean((costs - estimates) ** 2))


def _actor_step(pair, state, grids, rows, lp_old, adv, hyper):
    logits, cache = nets.actor_logits(pair.actor, grids)
    probs = nets.column_softmax(logits)
    lp = nets.log_probs(probs, rows)
    obj = cso_objective(lp, lp_old, adv, hyper.clip_epsilon)
    # descend on the negated mean objective
    up = -cso_grad(lp, lp_old, adv, hyper.clip_epsilon) / len(rows)
    dlogits = nets.log_prob_grad_logits(probs, rows, up)
    grads = nets.backward(pair.actor, dlogits.reshape(len(rows), -1), cache)
    pair.actor = nets.optimizer_step(pair.actor, grads, state, hyper.learning_rate)
    return float(obj.mean())


def _critic_step(pair, state, grids, costs, hyper):
    out, cache = nets.trunk_forward(pair.critic, nets.as_batch(grids))
    est = out[:, 0]
    dout = (2.0 / len(costs)) * (est - costs)
    grads = nets.backward(pair.critic, dout[:, None], cache)
    pair.critic = nets.optimizer_step(pair.critic, grads, state, hyper.learning_rate)
    return critic_loss(costs, est)


def train_network(target_index, dataset, hyper: PpoHyper | None = None,
                  geometry: SensorGeometry | None = None,
                  weights: CostWeights | None = None,
                  table: ActionTable | None = None,
                  pair: nets.PolicyPair | None = None):
    """Train one actor/critic pair toward normalized target ``target_index``.

    Returns ``(pair, report)``. Runs ``hyper.epochs`` shuffled passes over
    ``dataset`` in minibatches; each minibatch is sampled once and then used
    for ``updates_per_iteration`` actor and critic steps.
    """
    hyper = hyper or PpoHyper()
    g = geometry or SensorGeometry()
    w = weights or CostWeights()
    table = table or action_table(g)
    dataset = np.asarray(dataset, dtype=bool)
    rng = np.random.default_rng(np.random.SeedSequence([hyper.seed, target_index]))
    if pair is None:
        pair = nets.PolicyPair.init(target_index, rng)
    target = normalized_target(target_index, g)
    base_cost = w.rho1 * table.distances(target) + w.rho2 * table.curv
    report = TrainReport(target_index, hyper.seed)
    a_state, c_state = nets.AdamState(), nets.AdamState()
    t0 = time.perf_counter()
    bs = hyper.batch_size
    for _ in range(hyper.epochs):
        order = rng.permutation(len(dataset))
        for start in range(0, len(order), bs):
            grids = dataset[order[start:start + bs]]
            probs = nets.actor_probs(pair.actor, grids)
            rows = nets.sample_rows(probs, rng)
            lp_old = nets.log_probs(probs, rows)
            idx = table.lookup(rows)
            coll = table.collisions(grids)[np.arange(len(idx)), idx]
            costs = base_cost[idx] + w.rho3 * coll
            if not np.isfinite(costs).all():
                report.wall_clock_s = time.perf_counter() - t0
                raise TrainingDiverged("non-finite training cost", report)
            baseline = nets.critic_values(pair.critic, grids)
            adv = compute_advantage(costs, baseline)
            if hyper.normalize_advantage and len(adv) > 1:
                adv = (adv - adv.mean()) / (adv.std() + 1e-8)
            a_loss = c_loss = 0.0
            for _ in range(hyper.updates_per_iteration):
                a_loss = -_actor_step(pair, a_state, grids, rows, lp_old, adv, hyper)
            for _ in range(hyper.updates_per_iteration):
                c_loss = _critic_step(pair, c_state, grids, costs, hyper)
            report.mean_cost.append(float(costs.mean()))
            report.collision_rate.append(float(coll.mean()))
            report.actor_loss.append(a_loss)
            report.critic_loss.append(critic_loss(costs, baseline))
    report.skipped_updates = a_state.skipped + c_state.skipped
    report.wall_clock_s = time.perf_counter() - t0
    return pair, report


def evaluate_success(pair: nets.PolicyPair, grids, geometry: SensorGeometry | None = None,
                     mode: str = "modal", rng=None, table: ActionTable | None = None) -> float:
    """Fraction of grids whose chosen path (modal by default) is collision-free."""
    g = geometry or SensorGeometry()
    table = table or action_table(g)
    cells = _cells(grids)
    if len(cells) == 0:
        return float("nan")
    rows = chosen_rows(pair, cells, mode, rng)
    idx = table.lookup(rows)
    coll = table.collisions(cells)[np.arange(len(idx)), idx]
    return float(1.0 - coll.mean())


def chosen_rows(pair, cells, mode="modal", rng=None, chunk=500):
    out = []
    for s in range(0, len(cells), chunk):
        probs = nets.actor_probs(pair.actor, cells[s:s + chunk])
        if mode == "modal":
            out.append(probs[:, :, 1:].argmax(axis=1))
        elif mode == "sampled":
            out.append(nets.sample_rows(probs, rng if rng is not None else np.random.default_rng()))
        else:
            raise ValueError(f"unknown evaluation mode {mode!r}")
    return np.concatenate(out)


def _cells(grids) -> np.ndarray:
    if isinstance(grids, np.ndarray):
        return grids.astype(bool)
    return np.stack([g.cells if isinstance(g, OccupancyGrid) else np.asarray(g) for g in grids])


def feasible_mask(grids, geometry: SensorGeometry | None = None) -> np.ndarray:
    """True where at least one of the n^(n-1) actions is collision-free."""
    table = action_table(geometry or SensorGeometry())
    return table.collisions(_cells(grids)).min(axis=1) == 0


def _train_one(args):
    target_index, dataset, hyper, geometry, weights = args
    pair, report = train_network(target_index, dataset, hyper, geometry, weights)
    return pair, report


def train_all(dataset, hyper: PpoHyper | None = None, geometry: SensorGeometry | None = None,
              weights: CostWeights | None = None, workers: int | None = None,
              targets=range(1, N_TARGETS + 1)):
    """Train every target network; independent, so optionally in worker processes."""
    hyper = hyper or PpoHyper()
    g = geometry or SensorGeometry()
    jobs = [(t, dataset, hyper, g, weights) for t in targets]
    if workers and workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_train_one, jobs))
    else:
        results = [_train_one(j) for j in jobs]
    return results
