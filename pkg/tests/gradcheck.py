"""Central finite-difference gradient checks for the two networks."""
import numpy as np

from smartbsp import nets
from smartbsp.grid import SensorGeometry
from smartbsp.spline import CostWeights, action_table

STEP = 1e-5
PER_LAYER = 6


def random_pair(rng):
    pair = nets.PolicyPair.init(int(rng.integers(1, 6)), rng)
    # zero heads would kill every upstream gradient, and zero biases put
    # pre-activations of empty patches exactly on the relu kink
    for p in (pair.actor, pair.critic):
        p["head.w"] = rng.normal(0, 0.1, p["head.w"].shape)
        for name in p:
            if name.endswith(".b"):
                p[name] = rng.normal(0, 0.1, p[name].shape)
    return pair


def random_triple(rng, g=SensorGeometry()):
    grid = rng.random((g.n, g.n)) < 0.3
    rows = rng.integers(0, g.n, size=(1, g.n - 1))
    target = rng.uniform([0.5, -2.0], [2.5, 2.0])
    table = action_table(g)
    idx = table.lookup(rows)
    cost = float(table.costs(grid[None], target, CostWeights())[0, idx[0]])
    return grid, rows, cost


def actor_loss(params, grid, rows, cost):
    probs = nets.actor_probs(params, grid[None])
    return float(cost * nets.log_probs(probs, rows)[0])


def actor_grad(params, grid, rows, cost):
    logits, cache = nets.actor_logits(params, grid[None])
    probs = nets.column_softmax(logits)
    d = nets.log_prob_grad_logits(probs, rows, np.array([cost]))
    return nets.backward(params, d.reshape(1, -1), cache)


def critic_loss(params, grid, cost):
    return float((nets.critic_values(params, grid[None])[0] - cost) ** 2)


def critic_grad(params, grid, cost):
    out, cache = nets.trunk_forward(params, nets.as_batch(grid[None]))
    return nets.backward(params, 2.0 * (out - cost), cache)


def compare(loss, grads, params, rng, per_layer=PER_LAYER, h=STEP):
    """Worst relative error over a random subset of coordinates in every layer."""
    analytic, numeric = [], []
    for name in sorted(params):
        p = params[name]
        for flat in rng.choice(p.size, size=min(per_layer, p.size), replace=False):
            i = np.unravel_index(flat, p.shape)
            old = p[i]
            p[i] = old + h
            up = loss(params)
            p[i] = old - h
            down = loss(params)
            p[i] = old
            numeric.append((up - down) / (2 * h))
            analytic.append(grads[name][i])
    a, n = np.array(analytic), np.array(numeric)
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), 1e-12))


def check_triple(rng):
    pair = random_pair(rng)
    grid, rows, cost = random_triple(rng)
    ea = compare(lambda p: actor_loss(p, grid, rows, cost),
                 actor_grad(pair.actor, grid, rows, cost), pair.actor, rng)
    ec = compare(lambda p: critic_loss(p, grid, cost),
                 critic_grad(pair.critic, grid, cost), pair.critic, rng)
    return ea, ec
