"""Actor and critic CNNs with hand-written backpropagation.

Both networks read the 5x5 square grid (rows = angular rows, columns =
rings) as a single-channel image and share one trunk layout::

    conv3x3(16) -> relu -> conv3x3(32) -> relu -> flatten -> dense(256) -> relu -> head

The actor head is dense(25) reshaped to a 5x5 logit matrix whose columns
are softmaxed independently; column k is the distribution over angular
rows for the control point in ring k. Column 0 (the fixed second control
point) is computed but never sampled or trained. The critic head is
dense(1), an estimate of the expected path cost.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .grid import OccupancyGrid
from .spline import ActionVector

log = logging.getLogger(__name__)

GRID = 5
CONV1, CONV2, HIDDEN = 16, 32, 256
LOG_ZERO = -np.inf
# uniform limit is sqrt(INIT_GAIN / fan_in); 6 is He-uniform
INIT_GAIN = 6.0


class NetworkFault(RuntimeError):
    """Non-finite parameters or mismatched shapes inside a network."""


class WeightFileError(ValueError):
    """Weight file is corrupt or was written for another architecture."""


def layer_shapes(head: int) -> list:
    flat = CONV2 * GRID * GRID
    return [
        ("conv1.w", (CONV1, 1, 3, 3)),
        ("conv1.b", (CONV1,)),
        ("conv2.w", (CONV2, CONV1, 3, 3)),
        ("conv2.b", (CONV2,)),
        ("fc1.w", (flat, HIDDEN)),
        ("fc1.b", (HIDDEN,)),
        ("head.w", (HIDDEN, head)),
        ("head.b", (head,)),
    ]


ACTOR_HEAD = GRID * GRID
CRITIC_HEAD = 1


def signature() -> str:
    def fmt(prefix, head):
        return ",".join(f"{prefix}/{n}:{'x'.join(map(str, s))}" for n, s in layer_shapes(head))
    return "smartbsp-cnn-v1|" + fmt("actor", ACTOR_HEAD) + "|" + fmt("critic", CRITIC_HEAD)


def init_params(head: int, rng: np.random.Generator) -> dict:
    """He-uniform weights, zero biases, zero head (uniform policy / zero baseline)."""
    params = {}
    for name, shape in layer_shapes(head):
        if name.endswith(".b") or name.startswith("head"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:])) if name.startswith("conv") else shape[0]
            lim = math.sqrt(INIT_GAIN / fan_in)
            params[name] = rng.uniform(-lim, lim, size=shape)
    return params


def _check_finite(params):
    for name, v in params.items():
        if not np.isfinite(v).all():
            raise NetworkFault(f"non-finite value in layer {name}")


def as_batch(grids) -> np.ndarray:
    """Stack grids (OccupancyGrid or [ring][row] arrays) into (B, 1, 5, 5) images."""
    if isinstance(grids, OccupancyGrid):
        grids = [grids]
    if isinstance(grids, np.ndarray) and grids.ndim == 3:
        cells = grids
    else:
        cells = np.stack([g.cells if isinstance(g, OccupancyGrid) else np.asarray(g)
                          for g in grids])
    return np.ascontiguousarray(cells.transpose(0, 2, 1)[:, None].astype(np.float64))


def trunk_forward(params, x):
    z1 = _kernels.conv3x3_forward(x, params["conv1.w"], params["conv1.b"])
    a1 = np.maximum(z1, 0.0)
    z2 = _kernels.conv3x3_forward(a1, params["conv2.w"], params["conv2.b"])
    a2 = np.maximum(z2, 0.0)
    flat = a2.reshape(len(x), -1)
    z3 = flat @ params["fc1.w"] + params["fc1.b"]
    a3 = np.maximum(z3, 0.0)
    out = a3 @ params["head.w"] + params["head.b"]
    cache = (x, z1, a1, z2, a2, flat, z3, a3)
    return out, cache


def trunk_backward(params, dout, cache) -> dict:
    x, z1, a1, z2, a2, flat, z3, a3 = cache
    if dout.shape != (len(x), params["head.w"].shape[1]):
        raise NetworkFault(f"adjoint shape {dout.shape} does not match head output")
    g = {}
    g["head.w"] = a3.T @ dout
    g["head.b"] = dout.sum(axis=0)
    da3 = dout @ params["head.w"].T
    dz3 = da3 * (z3 > 0)
    g["fc1.w"] = flat.T @ dz3
    g["fc1.b"] = dz3.sum(axis=0)
    da2 = (dz3 @ params["fc1.w"].T).reshape(a2.shape)
    dz2 = da2 * (z2 > 0)
    da1, g["conv2.w"], g["conv2.b"] = _kernels.conv3x3_backward(a1, params["conv2.w"], dz2)
    dz1 = da1 * (z1 > 0)
    _, g["conv1.w"], g["conv1.b"] = _kernels.conv3x3_backward(x, params["conv1.w"], dz1)
    return g


def column_softmax(logits):
    """logits (B, 5, 5) -> probabilities normalized down each column."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class ActionDistribution:
    probs: np.ndarray  # [angular_row, column]

    def modal(self) -> ActionVector:
        return ActionVector(tuple(int(i) for i in self.probs[:, 1:].argmax(axis=0)))


@dataclass(frozen=True)
class SampledAction:
    action: ActionVector
    log_prob: float


def actor_logits(params, grids):
    out, cache = trunk_forward(params, as_batch(grids))
    return out.reshape(-1, GRID, GRID), cache


def actor_probs(params, grids) -> np.ndarray:
    _check_finite(params)
    logits, _ = actor_logits(params, grids)
    return column_softmax(logits)


def actor_forward(grid, params) -> ActionDistribution:
    return ActionDistribution(actor_probs(params, [grid])[0])


def critic_values(params, grids) -> np.ndarray:
    _check_finite(params)
    out, _ = trunk_forward(params, as_batch(grids))
    return out[:, 0]


def critic_forward(grid, params) -> float:
    return float(critic_values(params, [grid])[0])


def sample_rows(probs, rng) -> np.ndarray:
    """Draw one row per column 1..4 for each (B, 5, 5) distribution; returns (B, 4)."""
    p = probs[:, :, 1:]
    cdf = np.cumsum(p, axis=1)
    u = rng.random((p.shape[0], 1, p.shape[2]))
    rows = (u * cdf[:, -1:, :] >= cdf).sum(axis=1)
    return np.minimum(rows, GRID - 1)


def log_probs(probs, rows) -> np.ndarray:
    """Sum over columns 1..4 of log probs[row_k, k]; -inf where a probability is 0."""
    b = np.arange(len(rows))[:, None]
    cols = np.arange(1, GRID)[None, :]
    sel = probs[b, rows, cols]
    with np.errstate(divide="ignore"):
        return np.log(sel).sum(axis=1)


def sample_action(dist: ActionDistribution, rng) -> SampledAction:
    rows = sample_rows(dist.probs[None], rng)
    lp = log_probs(dist.probs[None], rows)[0]
    return SampledAction(ActionVector(tuple(rows[0])), float(lp))


def log_prob_of(dist: ActionDistribution, action: ActionVector) -> float:
    lp = float(log_probs(dist.probs[None], np.array([action.rows]))[0])
    if lp == LOG_ZERO:
        log.warning("action %s has zero probability", action.rows)
    return lp


def log_prob_grad_logits(probs, rows, upstream):
    """d(sum_b upstream_b * log_prob_b)/d logits, shape (B, 5, 5); column 0 gets zero."""
    g = np.zeros_like(probs)
    onehot = np.zeros_like(probs)
    b = np.arange(len(rows))[:, None]
    onehot[b, rows, np.arange(1, GRID)[None, :]] = 1.0
    g[:, :, 1:] = (onehot[:, :, 1:] - probs[:, :, 1:]) * upstream[:, None, None]
    return g


def backward(params, dout, cache) -> dict:
    """Parameter gradients of a scalar loss given its adjoint w.r.t. the head output."""
    return trunk_backward(params, np.asarray(dout, dtype=np.float64), cache)


# ---------------------------------------------------------------------------
# flat parameter views (used by gradient checks)
# ---------------------------------------------------------------------------

class Params(dict):
    """Layer dict whose values are views into one contiguous buffer ``flat``."""

    flat: np.ndarray


def flatten(params) -> np.ndarray:
    if isinstance(params, Params):
        return params.flat
    return np.concatenate([params[k].ravel() for k in sorted(params)])


def unflatten(vec, like, copy=True) -> dict:
    vec = vec.copy() if copy else vec
    out, i = Params(), 0
    for k in sorted(like):
        n = like[k].size
        out[k] = vec[i:i + n].reshape(like[k].shape)
        i += n
    out.flat = vec
    return out


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    skipped: int = 0


def optimizer_step(params, grads, state: AdamState, lr=1e-3) -> dict:
    """One adaptive-moment step with bias correction; returns new parameters.

    A non-finite gradient skips the step (counted in ``state.skipped``).
    """
    g = flatten(grads)
    if not np.isfinite(g).all():
        state.skipped += 1
        bad = [k for k in sorted(grads) if not np.isfinite(grads[k]).all()]
        log.warning("non-finite gradient in %s; update skipped", ", ".join(bad))
        return params
    p = flatten(params)
    if not isinstance(params, Params):
        p = p.copy()
    if state.m is None:
        state.m = np.zeros_like(p)
        state.v = np.zeros_like(p)
    state.step += 1
    _kernels.adam_update(p, g, state.m, state.v, lr, state.beta1, state.beta2,
                         state.eps, state.step)
    return unflatten(p, params, copy=False)


# ---------------------------------------------------------------------------
# policy pairs and weight files
# ---------------------------------------------------------------------------

@dataclass
class PolicyPair:
    actor: dict
    critic: dict
    target_index: int

    @classmethod
    def init(cls, target_index: int, rng) -> "PolicyPair":
        return cls(init_params(ACTOR_HEAD, rng), init_params(CRITIC_HEAD, rng), target_index)

    def distribution(self, grid) -> ActionDistribution:
        return actor_forward(grid, self.actor)

    def modal_action(self, grid) -> ActionVector:
        return self.distribution(grid).modal()

    def modal_rows(self, grids) -> np.ndarray:
        return actor_probs(self.actor, grids)[:, :, 1:].argmax(axis=1)

    def baseline(self, grid) -> float:
        return critic_forward(grid, self.critic)


def save_weights(pair: PolicyPair, path) -> None:
    layers = []
    for prefix, params, head in (("actor", pair.actor, ACTOR_HEAD),
                                 ("critic", pair.critic, CRITIC_HEAD)):
        for name, shape in layer_shapes(head):
            arr = params[name]
            layers.append({"name": f"{prefix}/{name}", "shape": list(arr.shape),
                           "row_major_values": arr.ravel().tolist()})
    doc = {"architecture_signature": signature(), "target_index": int(pair.target_index),
           "layers": layers}
    Path(path).write_text(json.dumps(doc))


def load_weights(path, expect_target: int | None = None) -> PolicyPair:
    try:
        doc = json.loads(Path(path).read_text())
        sig = doc["architecture_signature"]
        target = int(doc["target_index"])
        layers = {d["name"]: d for d in doc["layers"]}
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise WeightFileError(f"cannot read weight file {path}: {exc}") from exc
    if sig != signature():
        raise WeightFileError(f"architecture signature mismatch in {path}")
    if expect_target is not None and target != expect_target:
        raise WeightFileError(f"{path} holds network {target}, expected {expect_target}")
    nets = {}
    for prefix, head in (("actor", ACTOR_HEAD), ("critic", CRITIC_HEAD)):
        params = {}
        for name, shape in layer_shapes(head):
            d = layers.get(f"{prefix}/{name}")
            if d is None:
                raise WeightFileError(f"layer {prefix}/{name} missing from {path}")
            if tuple(d["shape"]) != shape:
                raise WeightFileError(f"layer {prefix}/{name} has shape {d['shape']}, expected {shape}")
            vals = np.asarray(d["row_major_values"], dtype=np.float64)
            if vals.size != int(np.prod(shape)):
                raise WeightFileError(f"layer {prefix}/{name} value count mismatch")
            params[name] = vals.reshape(shape)
        _check_finite(params)
        nets[prefix] = params
    return PolicyPair(nets["actor"], nets["critic"], target)
