"""Stationary single-step task with a known optimum, for checking that the learner learns."""

from __future__ import annotations

import numpy as np

from .agent import AgentConfig, D4pgAgent


class StationaryTarget:
    """Every episode is one step from the same observation.

    The reward is ``1 - k * mean((a - a_star)**2)`` so the optimum is the
    action ``a_star`` with value exactly 1. Targets sit near the edges of
    the unit box so the near-0.5 initial policy starts well below optimal.
    """

    def __init__(self, obs_dim: int = 8, act_dim: int = 4, k: float = 4.0, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.obs = rng.standard_normal(obs_dim)
        self.a_star = np.where(rng.random(act_dim) < 0.5, 0.1, 0.9)
        self.k = k
        self.obs_dim = obs_dim
        self.act_dim = act_dim

    optimal_value = 1.0

    def reward(self, action: np.ndarray) -> float:
        a = np.asarray(action, dtype=np.float64)
        return float(1.0 - self.k * np.mean((a - self.a_star) ** 2))


def train_on_target(
    env: StationaryTarget, config: AgentConfig = AgentConfig(), updates: int = 2000, seed: int = 0, noise: float = 0.3
) -> tuple[D4pgAgent, list[float]]:
    """Interleave one environment step and one update; returns the agent and greedy values per 100 updates."""
    agent = D4pgAgent(env.obs_dim, env.act_dim, config, seed)
    values = []
    ep = 0
    while agent.updates < updates:
        a = agent.select_action(env.obs, explore=True, noise_scale=noise)
        agent.buffer.add(env.obs, a, env.reward(a), env.obs, True, ep)
        ep += 1
        if agent.update() is not None and agent.updates % 100 == 0:
            values.append(env.reward(agent.select_action(env.obs)))
    return agent, values
