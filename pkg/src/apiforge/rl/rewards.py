"""The seven reward variants over status classes and coverage deltas."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import MissingOracle
from ..httpexec import HttpExchange

REWARD_VARIANTS = ("sc", "cov", "u", "cov-u", "r", "cov-r", "arat")
COVERAGE_VARIANTS = ("cov", "cov-u", "cov-r")


@dataclass
class EpisodeStats:
    """Per-episode response counters, updated before the reward is computed
    so ratio rewards include the current step."""

    responses: int = 0
    n_2xx: int = 0
    n_4xx: int = 0
    n_5xx: int = 0
    new_blocks_sum: int = 0
    executed_blocks_sum: int = 0
    last_new_blocks: int = 0
    last_executed_blocks: int = 0

    def update(self, x: HttpExchange, new_blocks: int | None = None,
               executed_blocks: int | None = None) -> None:
        self.responses += 1
        if 200 <= x.status <= 299:
            self.n_2xx += 1
        elif 400 <= x.status <= 499:
            self.n_4xx += 1
        elif 500 <= x.status <= 599:
            self.n_5xx += 1
        if new_blocks is not None:
            self.new_blocks_sum += new_blocks
            self.last_new_blocks = new_blocks
        if executed_blocks is not None:
            self.executed_blocks_sum += executed_blocks
            self.last_executed_blocks = executed_blocks


def reward(
    variant: str,
    x: HttpExchange,
    new_blocks: int | None,
    stats: EpisodeStats,
) -> float:
    """Reward for the current step.

    `new_blocks` is the number of previously unseen coverage blocks this
    request executed; pass None when no coverage oracle is attached (raises
    MissingOracle for the coverage-based variants). `stats` must already
    include the current response.
    """
    if variant not in REWARD_VARIANTS:
        raise ValueError(f"unknown reward variant {variant!r}")
    if variant in COVERAGE_VARIANTS and new_blocks is None:
        raise MissingOracle(f"reward variant {variant!r} needs a coverage oracle")

    s = x.status
    is_2xx = 200 <= s <= 299
    is_4xx = 400 <= s <= 499
    is_5xx = 500 <= s <= 599

    if variant == "sc":
        if is_5xx:
            return 10.0
        if is_2xx:
            return 1.0
        return -1.0
    if variant == "cov":
        if new_blocks > 0:
            return 10.0
        if stats.last_executed_blocks > 0:
            return 1.0
        return -1.0
    if variant == "u":
        return 1.0 if (is_2xx or is_5xx) else -1.0
    if variant == "cov-u":
        return 1.0 if new_blocks > 0 else -1.0
    if variant == "r":
        return (stats.n_2xx + stats.n_5xx) / stats.responses if stats.responses else 0.0
    if variant == "cov-r":
        if stats.executed_blocks_sum <= 0:
            return 0.0
        return stats.new_blocks_sum / stats.executed_blocks_sum
    # arat: reward any client or server error, penalize success and the rest
    return 1.0 if (is_4xx or is_5xx) else -1.0
