"""Action selection: epsilon-greedy over the Q-network, plus the uniform
random baseline policy."""
from __future__ import annotations

import numpy as np

from .qnet import NUM_ACTIONS, QNetwork, q_forward


def select_action(net: QNetwork, obs: np.ndarray, epsilon: float,
                  rng: np.random.Generator) -> int:
    """Uniform action with probability epsilon, else the greedy argmax
    (ties resolved to the lowest action id). Returns an id in 1..23."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(1, NUM_ACTIONS + 1))
    q = q_forward(net, obs)
    return int(np.argmax(q)) + 1


def random_policy(rng: np.random.Generator) -> int:
    """The random baseline: uniform over the 23 actions."""
    return int(rng.integers(1, NUM_ACTIONS + 1))
