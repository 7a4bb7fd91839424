"""Q-network: a small fully-connected net with hand-written backprop.

Layer widths default to input -> 64 -> 96 -> 64 -> 23 with ReLU after each
hidden layer. Training uses a per-sample Huber loss against the target
network's bootstrapped values, weighted by the replay importance weights.
"""
from __future__ import annotations

import copy

import numpy as np

from ..errors import NonFiniteLoss
from ..optim import SGDMomentum
from .params import HyperParams
from .replay import Transition

NUM_ACTIONS = 23
HIDDEN = (64, 96, 64)


class QNetwork:
    def __init__(self, input_dim: int, hidden: tuple[int, ...] = HIDDEN,
                 n_actions: int = NUM_ACTIONS, seed: int = 0):
        self.input_dim = input_dim
        self.hidden = tuple(hidden)
        self.n_actions = n_actions
        rng = np.random.default_rng(seed)
        dims = [input_dim, *hidden, n_actions]
        self.params: dict[str, np.ndarray] = {}
        last = len(dims) - 2
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            # zero-init the action head so initial values carry no spurious
            # per-action ordering
            scale = 0.0 if i == last else np.sqrt(2.0 / fan_in)
            self.params[f"w{i}"] = rng.standard_normal((fan_in, fan_out)) * scale
            self.params[f"b{i}"] = np.zeros(fan_out)
        self.n_layers = len(dims) - 1
        self.optimizer: SGDMomentum | None = None

    def forward(self, x: np.ndarray, with_cache: bool = False):
        squeeze = x.ndim == 1
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        cache = [h]
        for i in range(self.n_layers):
            h = h @ self.params[f"w{i}"] + self.params[f"b{i}"]
            if i < self.n_layers - 1:
                np.maximum(h, 0, out=h)
            cache.append(h)
        out = h[0] if squeeze else h
        if with_cache:
            return out, cache
        return out

    def backward(self, cache: list[np.ndarray], d_out: np.ndarray) -> dict[str, np.ndarray]:
        grads: dict[str, np.ndarray] = {}
        delta = d_out
        for i in reversed(range(self.n_layers)):
            h_in = cache[i]
            grads[f"w{i}"] = h_in.T @ delta
            grads[f"b{i}"] = delta.sum(0)
            if i > 0:
                delta = delta @ self.params[f"w{i}"].T
                delta[cache[i] <= 0] = 0.0
        return grads

    def clone(self) -> "QNetwork":
        other = QNetwork(self.input_dim, self.hidden, self.n_actions)
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def ensure_optimizer(self, lr: float, momentum: float = 0.9) -> SGDMomentum:
        if self.optimizer is None:
            self.optimizer = SGDMomentum(self.params, lr=lr, momentum=momentum)
        else:
            self.optimizer.lr = lr
        return self.optimizer


def q_forward(net: QNetwork, obs: np.ndarray) -> np.ndarray:
    """Action values for one observation (length 23)."""
    return net.forward(obs)


def sync_target(net: QNetwork, target: QNetwork) -> None:
    """Copy the online parameters into the target network."""
    for k, v in net.params.items():
        target.params[k] = v.copy()


def _huber(delta: np.ndarray):
    absd = np.abs(delta)
    quadratic = absd <= 1.0
    loss = np.where(quadratic, 0.5 * delta * delta, absd - 0.5)
    grad = np.clip(delta, -1.0, 1.0)
    return loss, grad


def td_update(
    net: QNetwork,
    target: QNetwork,
    batch: list[Transition],
    weights: np.ndarray,
    hp: HyperParams,
) -> tuple[float, np.ndarray]:
    """One gradient step on a replay batch.

    Bootstrapped target r + gamma * max_a q_target(o') for non-terminal
    transitions, plain r for terminal ones. Returns (weighted mean Huber
    loss, |td error| per sample) for priority updates.
    """
    obs = np.stack([t.observation for t in batch])
    next_obs = np.stack([t.next_observation for t in batch])
    actions = np.array([t.action - 1 for t in batch], dtype=np.int64)
    rewards = np.array([t.reward for t in batch], dtype=np.float64)
    terminal = np.array([t.terminal for t in batch], dtype=bool)
    weights = np.asarray(weights, dtype=np.float64)

    q_next = target.forward(next_obs).max(axis=1)
    if hp.value_clip is not None:
        q_next = np.clip(q_next, -hp.value_clip, hp.value_clip)
    targets = rewards + np.where(terminal, 0.0, hp.gamma * q_next)

    q_all, cache = net.forward(obs, with_cache=True)
    rows = np.arange(len(batch))
    delta = q_all[rows, actions] - targets
    loss_vec, grad_vec = _huber(delta)
    loss = float((weights * loss_vec).mean())
    if not np.isfinite(loss):
        raise NonFiniteLoss("td loss diverged")

    d_out = np.zeros_like(q_all)
    d_out[rows, actions] = weights * grad_vec / len(batch)
    grads = net.backward(cache, d_out)
    net.ensure_optimizer(hp.lr, hp.momentum).step(net.params, grads)
    return loss, np.abs(delta)
