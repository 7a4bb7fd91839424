"""Campaign configuration shared by the train and fuzz entry points."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ConfigError
from ..rl.params import HyperParams
from ..rl.rewards import REWARD_VARIANTS

EMBEDDER_CHOICES = ("transformer", "null", "hash")
DEFAULT_EMBED_WIDTH = 768


@dataclass
class CampaignConfig:
    mode: str
    spec_source: str
    base_url: str
    seed: int = 0
    token: str | None = None
    alt_token: str | None = None
    refresh_url: str | None = None
    refresh_credentials: dict = field(default_factory=dict)
    reward_variant: str = "sc"
    embedder: str = "transformer"
    embedder_checkpoint: str | None = None
    embed_width: int = DEFAULT_EMBED_WIDTH
    episodes_per_operation: int | None = None
    epsilon: float | None = None
    max_steps: int = 10
    agent_in: str | None = None  # checkpoint to fuzz with, or "random"
    agent_out: str | None = None
    report_path: str | None = None
    pool_path: str | None = None
    timeout_ms: int = 10_000
    connect_timeout_ms: int = 2_000
    collect_coverage: bool = False
    reset_between_ops: bool = False  # POST /__lab__/reset at curriculum boundaries
    checkpoint_every: int = 1000
    hp: HyperParams = field(default_factory=HyperParams)

    def __post_init__(self):
        if self.mode not in ("train", "fuzz"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.reward_variant not in REWARD_VARIANTS:
            raise ConfigError(f"unknown reward variant {self.reward_variant!r}")
        if self.embedder not in EMBEDDER_CHOICES:
            raise ConfigError(f"unknown embedder {self.embedder!r}")
        if self.episodes_per_operation is None:
            self.episodes_per_operation = 10_000 if self.mode == "train" else 3
        if self.episodes_per_operation < 1:
            raise ConfigError("episodes_per_operation must be >= 1")
        if self.mode == "fuzz":
            if self.epsilon is None:
                self.epsilon = 0.05
            if not self.agent_in:
                raise ConfigError("fuzz mode needs --agent (a checkpoint or 'random')")
        if self.mode == "train" and self.embedder == "transformer" and not self.embedder_checkpoint:
            raise ConfigError("the transformer embedder needs --embedder-checkpoint")
        if self.epsilon is not None and not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must lie in [0, 1]")
        self.hp.max_steps_per_episode = self.max_steps

    def echo(self) -> dict:
        """Deterministic summary embedded in reports."""
        return {
            "mode": self.mode,
            "spec_source": self.spec_source,
            "base_url": self.base_url,
            "seed": self.seed,
            "reward_variant": self.reward_variant,
            "embedder": self.embedder,
            "embedder_checkpoint": self.embedder_checkpoint,
            "episodes_per_operation": self.episodes_per_operation,
            "epsilon": self.epsilon,
            "max_steps": self.max_steps,
            "agent": self.agent_in,
            "pool": self.pool_path,
        }
