"""Training and evaluation loops."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import pickle
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..domain import Scenario
from ..env import VcpsEnv, episode_return
from ..metrics import score_rows_csv
from .agent import AgentConfig, D4pgAgent, RandomAgent
from .checkpoint import save_networks

log = logging.getLogger(__name__)

CURVE_HEADER = ["episode", "agent", "cr_train", "cr_eval"]


class TrainingDivergedError(RuntimeError):
    pass


def train_seed(seed: int, episode: int) -> int:
    return seed * 1_000_003 + episode


def eval_seeds(seed: int, n: int) -> list[int]:
    return [seed * 1_000_003 + 900_000 + k for k in range(n)]


@dataclass
class EvalResult:
    cr: float
    aaov: float
    acov: float
    crs: list[float] = field(default_factory=list)


def evaluate(env: VcpsEnv, agents, seeds, explore: bool = False) -> EvalResult:
    """Mean CR, AoV and CoV over one episode per environment seed."""
    crs, aovs, covs = [], [], []
    for s in seeds:
        obs = env.reset(s)
        rewards = []
        done = False
        while not done:
            acts = [ag.select_action(o, explore=explore) for ag, o in zip(agents, obs)]
            obs, r, done, _ = env.step(acts)
            rewards.append(r)
        crs.append(episode_return(np.array(rewards)))
        aovs += [sc.aov for *_, sc in env.score_rows]
        covs += [sc.cov for *_, sc in env.score_rows]
    return EvalResult(
        float(np.mean(crs)),
        float(np.mean(aovs)) if aovs else math.nan,
        float(np.mean(covs)) if covs else math.nan,
        [float(c) for c in crs],
    )


@dataclass
class Trainer:
    """Resumable training run over one scenario.

    ``kind`` is ``"d4pg"`` or ``"ra"``; the random baseline only runs
    episodes and evaluations.
    """

    scenario: Scenario
    config: AgentConfig = field(default_factory=AgentConfig)
    kind: str = "d4pg"
    seed: int = 0
    episodes: int = 200
    eval_every: int = 10
    eval_episodes: int = 3
    curve: list[dict[str, Any]] = field(default_factory=list)
    episode: int = 0
    score_rows: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("d4pg", "ra"):
            raise ValueError(f"unknown agent kind {self.kind!r}")
        probs = self.config.problems()
        if probs:
            raise ValueError("; ".join(probs))
        self.env = VcpsEnv(self.scenario)
        ss = np.random.SeedSequence(self.seed)
        seeds = [int(s.generate_state(1)[0]) for s in ss.spawn(self.env.E)]
        if self.kind == "d4pg":
            self.agents = [D4pgAgent(self.env.obs_dim, self.env.act_dim, self.config, s) for s in seeds]
        else:
            self.agents = [RandomAgent(self.env.act_dim, s) for s in seeds]

    def noise_scale(self, episode: int) -> float:
        c = self.config
        frac = episode / max(1, self.episodes - 1)
        return c.noise_start + (c.noise_end - c.noise_start) * min(1.0, frac)

    def run_episode(self) -> float:
        env = self.env
        ep = self.episode
        obs = env.reset(train_seed(self.seed, ep))
        eps = self.noise_scale(ep)
        rewards = []
        done = False
        while not done:
            acts = [ag.select_action(o, explore=True, noise_scale=eps) for ag, o in zip(self.agents, obs)]
            nxt, r, done, _ = env.step(acts)
            rewards.append(r)
            if self.kind == "d4pg":
                for e, ag in enumerate(self.agents):
                    ag.buffer.add(obs[e], acts[e], r[e], nxt[e], done, ep)
                    res = ag.update()
                    if res is not None and not (math.isfinite(res[0]) and math.isfinite(res[1])):
                        raise TrainingDivergedError(
                            f"non-finite loss at episode {ep}, slot {env.t - 1}, rsu {e}: critic={res[0]} actor={res[1]}"
                        )
            obs = nxt
        return episode_return(np.array(rewards))

    def step(self) -> dict[str, Any]:
        cr_train = self.run_episode()
        ep = self.episode
        self.episode += 1
        cr_eval: float | str = ""
        if self.eval_every > 0 and (self.episode % self.eval_every == 0 or self.episode == self.episodes):
            res = evaluate(self.env, self.agents, eval_seeds(self.seed, self.eval_episodes))
            cr_eval = res.cr
            self.score_rows = list(self.env.score_rows)
        row = {"episode": ep, "agent": self.kind, "cr_train": cr_train, "cr_eval": cr_eval}
        self.curve.append(row)
        log.info("seed=%d %s episode %d cr_train=%.3f cr_eval=%s", self.seed, self.kind, ep, cr_train, cr_eval)
        return row

    def run(self, until: int | None = None) -> list[dict[str, Any]]:
        stop = self.episodes if until is None else min(until, self.episodes)
        while self.episode < stop:
            self.step()
        return self.curve

    def final_evaluation(self, n: int | None = None) -> EvalResult:
        return evaluate(self.env, self.agents, eval_seeds(self.seed, n or self.eval_episodes))

    # --- persistence ----------------------------------------------------------

    def curve_csv(self) -> str:
        return curve_csv(self.curve)

    def save_checkpoint(self, path: str | Path) -> None:
        if self.kind != "d4pg":
            return
        groups = {f"rsu{e}": ag.networks() for e, ag in enumerate(self.agents)}
        save_networks(path, groups, {"episode": self.episode, "seed": self.seed, "agent": self.config.to_dict()})

    def save_state(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            pickle.dump(self, fh)

    @staticmethod
    def load_state(path: str | Path) -> "Trainer":
        with open(path, "rb") as fh:
            return pickle.load(fh)


def curve_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_HEADER)
    for r in rows:
        w.writerow([r["episode"], r["agent"], repr(float(r["cr_train"])), "" if r["cr_eval"] == "" else repr(float(r["cr_eval"]))])
    return buf.getvalue()


def train(
    scenario: Scenario,
    config: AgentConfig = AgentConfig(),
    episodes: int = 200,
    seed: int = 0,
    kind: str = "d4pg",
    out_dir: str | Path | None = None,
    eval_every: int = 10,
    eval_episodes: int = 3,
    save_state: bool = False,
) -> Trainer:
    """Train (or, for ``kind="ra"``, just run) and optionally write artifacts.

    With ``out_dir`` set, writes ``curves.csv``, ``scores.csv`` (last
    evaluation) and ``checkpoints/`` holding the initial and final networks.
    Non-finite losses raise :class:`TrainingDivergedError` after dumping a
    diagnostic file.
    """
    tr = Trainer(scenario, config, kind, seed, episodes, eval_every, eval_episodes)
    return run_trainer(tr, out_dir, save_state)


def run_trainer(tr: Trainer, out_dir: str | Path | None = None, save_state: bool = False) -> Trainer:
    ckdir = None
    if out_dir is not None:
        out = Path(out_dir)
        ckdir = out / "checkpoints"
        ckdir.mkdir(parents=True, exist_ok=True)
        if tr.episode == 0:
            tr.save_checkpoint(ckdir / "ep0000.ckpt")
    try:
        tr.run()
    except TrainingDivergedError as exc:
        if out_dir is not None:
            diag = {"error": str(exc), "episode": tr.episode, "curve": tr.curve}
            (Path(out_dir) / "diverged.json").write_text(json.dumps(diag, indent=1, default=str))
        raise
    if out_dir is not None:
        out = Path(out_dir)
        (out / "curves.csv").write_text(tr.curve_csv())
        (out / "scores.csv").write_text(score_rows_csv(tr.score_rows))
        tr.save_checkpoint(ckdir / f"ep{tr.episode:04d}.ckpt")
        if save_state:
            tr.save_state(out / "state.pkl")
    return tr
