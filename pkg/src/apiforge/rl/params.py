"""Training hyperparameters with their defaults."""
from __future__ import annotations

from dataclasses import dataclass, asdict


@dataclass
class HyperParams:
    gamma: float = 0.9
    lr: float = 0.005
    momentum: float = 0.9
    batch_size: int = 128
    target_sync_interval: int = 100  # gradient steps between target copies
    max_steps_per_episode: int = 10
    epsilon_start: float = 1.0
    epsilon_decay: float = 0.999  # multiplicative, applied after each episode
    epsilon_floor: float = 0.05
    replay_capacity: int = 100_000
    per_alpha: float = 0.6
    per_beta_start: float = 0.4
    per_beta_end: float = 1.0
    per_beta_anneal_steps: int = 100_000
    priority_epsilon: float = 1e-3
    updates_per_step: int = 1  # gradient steps per environment step
    # clamp the bootstrapped next-state value to +-this bound; None keeps the
    # raw Bellman target. The status-class rewards cannot return more than 10
    # (a 5XX ends the episode), so 10 bounds every true value and the clamp
    # only suppresses estimator runaway.
    value_clip: float | None = None

    def __post_init__(self):
        if not 0 <= self.epsilon_floor <= self.epsilon_start <= 1:
            raise ValueError("need 0 <= epsilon_floor <= epsilon_start <= 1")
        for name in ("gamma", "lr", "batch_size", "target_sync_interval",
                     "max_steps_per_episode", "replay_capacity", "per_alpha",
                     "priority_epsilon"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def beta_at(self, step: int) -> float:
        """Importance-sampling exponent, annealed linearly over training."""
        frac = min(1.0, step / self.per_beta_anneal_steps)
        return self.per_beta_start + frac * (self.per_beta_end - self.per_beta_start)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "HyperParams":
        return cls(**data)
