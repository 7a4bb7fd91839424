"""Deep Q-learning core: observations, rewards, network, replay, policy."""

from .params import HyperParams
from .observation import build_observation, initial_observation, OBS_EXTRA
from .rewards import REWARD_VARIANTS, EpisodeStats, reward
from .qnet import QNetwork, q_forward, sync_target, td_update
from .replay import PrioritizedReplay, Transition
from .policy import random_policy, select_action

__all__ = [
    "HyperParams",
    "build_observation",
    "initial_observation",
    "OBS_EXTRA",
    "REWARD_VARIANTS",
    "EpisodeStats",
    "reward",
    "QNetwork",
    "q_forward",
    "sync_target",
    "td_update",
    "PrioritizedReplay",
    "Transition",
    "random_policy",
    "select_action",
]
