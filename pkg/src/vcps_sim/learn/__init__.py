"""Learning substrate: networks, replay, the per-RSU agent and training loops."""

from .agent import AgentConfig, D4pgAgent, RandomAgent, ra_policy
from .nn import Adam, MlpNetwork
from .replay import ReplayBuffer
from .testenv import StationaryTarget, train_on_target
from .train import Trainer, evaluate, train

__all__ = [
    "Adam",
    "AgentConfig",
    "D4pgAgent",
    "MlpNetwork",
    "RandomAgent",
    "ReplayBuffer",
    "StationaryTarget",
    "Trainer",
    "evaluate",
    "ra_policy",
    "train",
    "train_on_target",
]
