"""Per-RSU deterministic-policy actor-critic with N-step targets, plus the random baseline."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .nn import Adam, MlpNetwork
from .replay import ReplayBuffer, WindowBatch


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.99
    n_step: int = 5
    batch_size: int = 64
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    tau: float = 0.01  # soft target update rate
    target_period: int = 1
    noise_start: float = 0.3
    noise_end: float = 0.05
    buffer_capacity: int = 100_000
    actor_hidden: tuple[int, ...] = (256, 256, 256)
    critic_hidden: tuple[int, ...] = (512, 512, 256)
    final_init: float = 3e-3
    dtype: str = "float32"

    def problems(self) -> list[str]:
        out = []
        if not 0 < self.gamma <= 1:
            out.append("agent.gamma: must be in (0, 1]")
        if self.n_step < 1:
            out.append("agent.n_step: must be >= 1")
        if self.batch_size < 1:
            out.append("agent.batch_size: must be >= 1")
        for name in ("actor_lr", "critic_lr", "tau"):
            if not getattr(self, name) > 0:
                out.append(f"agent.{name}: must be > 0")
        if not self.tau <= 1:
            out.append("agent.tau: must be <= 1")
        if self.target_period < 1:
            out.append("agent.target_period: must be >= 1")
        if self.noise_start < 0 or self.noise_end < 0:
            out.append("agent.noise: scales must be >= 0")
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["actor_hidden"] = list(self.actor_hidden)
        d["critic_hidden"] = list(self.critic_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AgentConfig":
        d = dict(d)
        for k in ("actor_hidden", "critic_hidden"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


class D4pgAgent:
    """Local and target actor/critic pairs for one RSU.

    The critic sees the RSU's own observation and action.
    """

    def __init__(self, obs_dim: int, act_dim: int, config: AgentConfig = AgentConfig(), seed: int = 0):
        self.config = config
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.rng = np.random.default_rng(seed)
        dt = np.dtype(config.dtype)
        self.actor = MlpNetwork(
            (obs_dim, *config.actor_hidden, act_dim), "sigmoid", self.rng, dt, final_scale=config.final_init
        )
        self.critic = MlpNetwork(
            (obs_dim + act_dim, *config.critic_hidden, 1), "linear", self.rng, dt, final_scale=config.final_init
        )
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam([self.actor.flat], config.actor_lr)
        self.critic_opt = Adam([self.critic.flat], config.critic_lr)
        self.buffer = ReplayBuffer(config.buffer_capacity, obs_dim, act_dim, dt)
        self.updates = 0

    def select_action(self, obs: np.ndarray, explore: bool = False, noise_scale: float | None = None) -> np.ndarray:
        a = self.actor.forward(obs).astype(np.float64)
        if explore:
            eps = self.config.noise_start if noise_scale is None else noise_scale
            if eps > 0:
                a = a + eps * self.rng.standard_normal(a.shape)
            a = np.clip(a, 0.0, 1.0)
        return a

    def n_step_target(self, batch: WindowBatch) -> np.ndarray:
        """Discounted window reward plus the discounted target-network value when not terminal."""
        g = self.config.gamma
        n = batch.rewards.shape[1]
        ret = batch.rewards @ (g ** np.arange(n))
        a_next = self.actor_target.forward(batch.boot_obs)
        q_next = self.critic_target.forward(np.concatenate([batch.boot_obs, a_next], axis=1))[:, 0]
        boot = np.where(batch.terminal, 0.0, g ** batch.lengths.astype(np.float64))
        return ret + boot * q_next

    def critic_step(self, obs, act, target) -> float:
        q = self.critic.forward(np.concatenate([obs, act], axis=1))[:, 0]
        diff = q - target
        loss = float(np.mean(diff**2))
        self.critic.backward((2.0 / len(diff)) * diff[:, None])
        self.critic_opt.step([self.critic.grad_flat])
        return loss

    def actor_gradients(self, obs):
        """Returns ``(objective, grads)`` for the mean critic value at the policy's actions.

        ``grads`` are gradients of the negated objective, ready for a descent step.
        """
        a = self.actor.forward(obs)
        q = self.critic.forward(np.concatenate([obs, a], axis=1))
        _, dq_dx = self.critic.backward(np.full_like(q, 1.0 / len(q)), param_grads=False)
        dq_da = dq_dx[:, self.obs_dim :]
        grads, _ = self.actor.backward(-dq_da)
        return float(q.mean()), grads

    def update(self, batch: WindowBatch | None = None) -> tuple[float, float] | None:
        """One critic and one actor step; ``None`` while the buffer is too small."""
        cfg = self.config
        if batch is None:
            if len(self.buffer) < max(cfg.batch_size, cfg.n_step):
                return None
            batch = self.buffer.sample(self.rng, cfg.batch_size, cfg.n_step)
        target = self.n_step_target(batch)
        loss = self.critic_step(batch.obs, batch.act, target)
        obj, _ = self.actor_gradients(batch.obs)
        self.actor_opt.step([self.actor.grad_flat])
        self.updates += 1
        if self.updates % cfg.target_period == 0:
            self.soft_update()
        return loss, obj

    def soft_update(self, rate: float | None = None) -> None:
        n = self.config.tau if rate is None else rate
        self.actor_target.soft_update_from(self.actor, n)
        self.critic_target.soft_update_from(self.critic, n)

    def networks(self) -> dict[str, MlpNetwork]:
        return {
            "actor": self.actor,
            "critic": self.critic,
            "actor_target": self.actor_target,
            "critic_target": self.critic_target,
        }


def ra_policy(obs: np.ndarray, act_dim: int, seed: int) -> np.ndarray:
    """Random allocation: every raw action entry uniform in [0, 1]."""
    return np.random.default_rng(seed).random(act_dim)


class RandomAgent:
    """Stateful random-allocation agent drawing from one seeded stream."""

    def __init__(self, act_dim: int, seed: int = 0):
        self.act_dim = act_dim
        self.rng = np.random.default_rng(seed)

    def select_action(self, obs: np.ndarray, explore: bool = False, noise_scale: float | None = None) -> np.ndarray:
        return self.rng.random(self.act_dim)
