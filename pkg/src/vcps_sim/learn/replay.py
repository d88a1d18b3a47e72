"""Bounded FIFO experience store sampled in N-step windows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class WindowBatch:
    obs: np.ndarray  # (B, obs_dim) first observation of each window
    act: np.ndarray  # (B, act_dim)
    rewards: np.ndarray  # (B, N) zero-padded past a terminal step
    lengths: np.ndarray  # (B,) number of real steps in each window
    boot_obs: np.ndarray  # (B, obs_dim) observation to bootstrap from
    terminal: np.ndarray  # (B,) window ended on an episode boundary
    episodes: np.ndarray  # (B, N) episode id per step, -1 for padding


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int, act_dim: int, dtype=np.float32):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim), dtype)
        self.act = np.zeros((capacity, act_dim), dtype)
        self.rew = np.zeros(capacity, np.float64)
        self.next_obs = np.zeros((capacity, obs_dim), dtype)
        self.done = np.zeros(capacity, bool)
        self.episode = np.full(capacity, -1, np.int64)
        self.serial = np.full(capacity, -1, np.int64)  # insertion counter per slot
        self.cursor = 0
        self.count = 0

    def __len__(self) -> int:
        return min(self.count, self.capacity)

    def add(self, obs, act, reward: float, next_obs, done: bool, episode: int) -> None:
        i = self.cursor
        self.obs[i] = obs
        self.act[i] = act
        self.rew[i] = reward
        self.next_obs[i] = next_obs
        self.done[i] = done
        self.episode[i] = episode
        self.serial[i] = self.count
        self.count += 1
        self.cursor = (i + 1) % self.capacity

    def _windows(self, starts: np.ndarray, n: int):
        offs = np.arange(n)
        idx = (starts[:, None] + offs[None, :]) % self.capacity
        first_serial = self.serial[starts]
        contiguous = self.serial[idx] == first_serial[:, None] + offs[None, :]
        same_ep = self.episode[idx] == self.episode[starts][:, None]
        alive = np.zeros_like(contiguous)
        alive[:, 0] = True
        for j in range(1, n):
            alive[:, j] = alive[:, j - 1] & ~self.done[idx[:, j - 1]] & contiguous[:, j] & same_ep[:, j]
        lengths = alive.sum(axis=1)
        last = idx[np.arange(len(starts)), lengths - 1]
        terminal = self.done[last]
        complete = terminal | (lengths == n)
        return idx, alive, lengths, last, terminal, complete

    def sample(self, rng: np.random.Generator, batch_size: int, n: int) -> WindowBatch:
        """Sample ``batch_size`` windows of up to ``n`` consecutive steps.

        A window stops early only at an episode's final step. Windows that
        would run into not-yet-written steps are redrawn.
        """
        size = len(self)
        if size == 0:
            raise ValueError("empty buffer")
        starts = rng.integers(0, size, size=batch_size)
        for _ in range(100):
            *_, complete = self._windows(starts, n)
            if complete.all():
                break
            bad = ~complete
            starts[bad] = rng.integers(0, size, size=int(bad.sum()))
        else:
            raise RuntimeError("could not draw complete windows; buffer holds too few steps")
        idx, alive, lengths, last, terminal, _ = self._windows(starts, n)
        rewards = np.where(alive, self.rew[idx], 0.0)
        episodes = np.where(alive, self.episode[idx], -1)
        return WindowBatch(
            obs=self.obs[starts],
            act=self.act[starts],
            rewards=rewards,
            lengths=lengths,
            boot_obs=self.next_obs[last],
            terminal=terminal,
            episodes=episodes,
        )

    def n_complete_windows(self, n: int) -> int:
        size = len(self)
        if size == 0:
            return 0
        *_, complete = self._windows(np.arange(size), n)
        return int(complete.sum())
