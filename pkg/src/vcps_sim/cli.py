"""Command-line experiment runner: ``validate``, ``train``, ``sweep``, ``calibrate``.

Every run writes into ``<out>/<run-id>/`` with ``manifest.json`` (the only
file holding wall-clock data), ``config.json`` (the exact resolved config),
CSV artifacts and ``checkpoints/``. Failures exit nonzero after printing one
JSON line ``{"error": kind, "message": ..., "problems": [...]}`` to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, channel, queueing
from .domain import ConfigError, ScenarioConfig, build_scenario
from .env import calibrate_bounds
from .learn.agent import AgentConfig
from .learn.train import Trainer, TrainingDivergedError, run_trainer

log = logging.getLogger("vcps_sim")

SWEEP_HEADER = ["axis_value", "agent", "seed", "cr", "aaov", "acov"]
AXES = ("bandwidth", "view_size")


class CliError(Exception):
    def __init__(self, kind: str, message: str, problems=()):
        super().__init__(message)
        self.kind = kind
        self.problems = list(problems)


# --- config loading ---------------------------------------------------------


def load_config(path: str | Path) -> tuple[ScenarioConfig, AgentConfig]:
    """Scenario and agent configs from one JSON file; ``agent`` is optional."""
    cfg = ScenarioConfig.load(path)
    raw = json.loads(Path(path).read_text())
    try:
        agent = AgentConfig.from_dict(raw.get("agent", {}))
    except TypeError as exc:
        raise ConfigError([f"agent: malformed section ({exc})"]) from exc
    probs = cfg.problems() + agent.problems()
    if probs:
        raise ConfigError(probs)
    return cfg, agent


def resolved_config(cfg: ScenarioConfig, agent: AgentConfig) -> dict:
    d = cfg.to_dict()
    d["agent"] = agent.to_dict()
    return d


def build_id() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return f"vcps_sim-{__version__}"


def write_manifest(run_dir: Path, **fields) -> None:
    manifest = {"build": build_id(), "wall_clock": time.strftime("%Y-%m-%dT%H:%M:%S%z"), **fields}
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


# --- validate ---------------------------------------------------------------


def validation_report(cfg: ScenarioConfig) -> dict:
    """Derived quantities: workload bounds per vehicle and power floors per distance decile."""
    sc = build_scenario(cfg)
    info = {d.id: d for d in sc.info_types}
    rho = []
    for v in sc.vehicles:
        ent = v.sensable
        if not ent:
            continue
        lo = sum(s.lambda_min * info[s.info_id].mean_service for s in ent)
        hi = sum(s.lambda_max * info[s.info_id].mean_service for s in ent)
        rho.append((lo, hi))
    rho_arr = np.array(rho) if rho else np.zeros((0, 2))
    floors = {}
    for r in sc.rsus:
        row = []
        for q in range(1, 11):
            dist = r.radio_range * q / 10
            row.append(channel.power_floor(dist, cfg.channel))
        floors[str(r.id)] = [None if not np.isfinite(p) else p for p in row]
    max_power = cfg.fleet.max_power
    feasible_range = {
        str(r.id): float(
            max(
                [r.radio_range * q / 100 for q in range(1, 101) if channel.power_floor(r.radio_range * q / 100, cfg.channel) <= max_power]
                or [0.0]
            )
        )
        for r in sc.rsus
    }
    return {
        "rsus": len(sc.rsus),
        "vehicles": len(sc.vehicles),
        "info_types": len(sc.info_types),
        "views": len(sc.views),
        "time_slots": sc.T,
        "rho_min": {"min": float(rho_arr[:, 0].min()), "max": float(rho_arr[:, 0].max())} if len(rho) else None,
        "rho_max": {"min": float(rho_arr[:, 1].min()), "max": float(rho_arr[:, 1].max())} if len(rho) else None,
        "vehicles_unstable_at_lambda_min": int((rho_arr[:, 0] >= 1).sum()) if len(rho) else 0,
        "power_floor_by_distance_decile_w": floors,
        "max_feasible_distance_m": feasible_range,
        "snr_target": cfg.channel.snr_target,
        "reliability": cfg.channel.reliability,
    }


def cmd_validate(args) -> int:
    cfg, _ = load_config(args.config)
    report = {"config": str(args.config), "valid": True, **validation_report(cfg)}
    sys.stdout.write(_dump_json(report))
    return 0


# --- train ------------------------------------------------------------------


def default_run_id(config_path: str, agent: str, seed: int) -> str:
    return f"{Path(config_path).stem}-{agent}-s{seed}"


def cmd_train(args) -> int:
    cfg, agent_cfg = load_config(args.config)
    run_dir = Path(args.out) / (args.run_id or default_run_id(args.config, args.agent, args.seed))
    state_path = run_dir / "state.pkl"
    if args.resume and state_path.is_file():
        tr = Trainer.load_state(state_path)
        if tr.kind != args.agent or tr.seed != args.seed:
            raise CliError("resume_mismatch", f"{state_path} holds agent={tr.kind} seed={tr.seed}")
        tr.episodes = args.episodes
        log.info("resuming %s at episode %d", run_dir, tr.episode)
    else:
        scenario = build_scenario(cfg)
        tr = Trainer(scenario, agent_cfg, args.agent, args.seed, args.episodes, args.eval_every, args.eval_episodes)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(_dump_json(resolved_config(cfg, agent_cfg)))
    write_manifest(
        run_dir,
        command="train",
        config=str(args.config),
        agent=args.agent,
        episodes=args.episodes,
        seed=args.seed,
        output=str(run_dir),
        resumed_from=tr.episode if args.resume else None,
    )
    if args.stop_after is not None:
        # partial run: advance, persist resumable state, stop
        stop = min(args.stop_after, tr.episodes)
        if tr.episode == 0:
            (run_dir / "checkpoints").mkdir(exist_ok=True)
            tr.save_checkpoint(run_dir / "checkpoints" / "ep0000.ckpt")
        tr.run(until=stop)
        tr.save_state(state_path)
        (run_dir / "curves.csv").write_text(tr.curve_csv())
        print(json.dumps({"run_dir": str(run_dir), "episode": tr.episode, "status": "paused"}))
        return 0
    run_trainer(tr, run_dir, save_state=True)
    res = tr.final_evaluation()
    summary = {"run_dir": str(run_dir), "episode": tr.episode, "cr": res.cr, "aaov": res.aaov, "acov": res.acov}
    (run_dir / "summary.json").write_text(_dump_json(summary))
    print(json.dumps(summary, sort_keys=True))
    return 0


# --- sweep ------------------------------------------------------------------


def apply_axis(cfg: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    if axis == "bandwidth":
        return cfg.with_bandwidth(value * 1e6)  # values given in MHz
    if axis == "view_size":
        return cfg.with_view_size(value)
    raise CliError("bad_axis", f"axis must be one of {AXES}, got {axis!r}")


def _sweep_job(job: dict) -> dict:
    cfg = ScenarioConfig.from_dict(job["config"])
    agent_cfg = AgentConfig.from_dict(job["agent_config"])
    tr = Trainer(
        build_scenario(cfg.validate()),
        agent_cfg,
        job["agent"],
        job["seed"],
        job["episodes"],
        job["eval_every"],
        job["eval_episodes"],
    )
    run_trainer(tr, job["run_dir"])
    res = tr.final_evaluation()
    return {"axis_value": job["value"], "agent": job["agent"], "seed": job["seed"], "cr": res.cr, "aaov": res.aaov, "acov": res.acov}


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow([repr(float(r["axis_value"])), r["agent"], r["seed"], repr(r["cr"]), repr(r["aaov"]), repr(r["acov"])])
    return buf.getvalue()


def parse_values(text: str) -> list[float]:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if not parts:
        raise CliError("empty_values", "--values must list at least one number")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise CliError("bad_values", f"--values: {exc}") from exc


def cmd_sweep(args) -> int:
    cfg, agent_cfg = load_config(args.config)
    values = parse_values(args.values)
    seeds = [args.seed + k for k in range(args.seeds)]
    agents = [a for a in args.agent.split(",") if a]
    for a in agents:
        if a not in ("d4pg", "ra"):
            raise CliError("bad_agent", f"unknown agent {a!r}")
    variants = {}
    for v in values:
        c = apply_axis(cfg, args.axis, v)
        probs = c.problems()
        if probs:
            raise ConfigError([f"{args.axis}={v}: {p}" for p in probs])
        variants[v] = c
    run_dir = Path(args.out) / (args.run_id or f"{Path(args.config).stem}-sweep-{args.axis}")
    run_dir.mkdir(parents=True, exist_ok=True)
    jobs = [
        {
            "config": variants[v].to_dict(),
            "agent_config": agent_cfg.to_dict(),
            "agent": a,
            "seed": s,
            "value": v,
            "episodes": args.episodes if a == "d4pg" else 0,
            "eval_every": args.eval_every,
            "eval_episodes": args.eval_episodes,
            "run_dir": str(run_dir / "runs" / f"{args.axis}={v:g}-{a}-s{s}"),
        }
        for v in values
        for a in agents
        for s in seeds
    ]
    (run_dir / "config.json").write_text(_dump_json(resolved_config(cfg, agent_cfg)))
    write_manifest(
        run_dir,
        command="sweep",
        config=str(args.config),
        axis=args.axis,
        values=values,
        agents=agents,
        seeds=seeds,
        episodes=args.episodes,
        workers=args.workers,
        output=str(run_dir),
    )
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_job, jobs))
    else:
        rows = [_sweep_job(j) for j in jobs]
    text = sweep_csv(rows)
    (run_dir / "sweep.csv").write_text(text)
    sys.stdout.write(text)
    return 0


# --- calibrate --------------------------------------------------------------


def cmd_calibrate(args) -> int:
    cfg, agent_cfg = load_config(args.config)
    bounds = calibrate_bounds(build_scenario(cfg), episodes=args.episodes, quantile=args.quantile, seed=args.seed)
    out = {"normalization": {"mode": "fixed", "window": cfg.normalization.window, "bounds": {k: list(v) for k, v in bounds.items()}}}
    sys.stdout.write(_dump_json(out))
    return 0


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vcps-sim", description="Vehicular view-assembly simulator and trainer.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a config and print derived quantities")
    v.add_argument("--config", required=True)
    v.set_defaults(func=cmd_validate)

    def common(sp):
        sp.add_argument("--config", required=True)
        sp.add_argument("--episodes", type=int, default=200)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default="out")
        sp.add_argument("--run-id", default=None)
        sp.add_argument("--eval-every", type=int, default=10)
        sp.add_argument("--eval-episodes", type=int, default=3)

    t = sub.add_parser("train", help="train an agent (ra: evaluation only)")
    common(t)
    t.add_argument("--agent", choices=("d4pg", "ra"), default="d4pg")
    t.add_argument("--resume", action="store_true", help="continue from <run>/state.pkl when present")
    t.add_argument("--stop-after", type=int, default=None, help="pause after this many episodes, saving state")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="seeded runs over bandwidth (MHz) or view size")
    common(s)
    s.add_argument("--agent", default="d4pg,ra", help="comma-separated subset of d4pg,ra")
    s.add_argument("--axis", choices=AXES, required=True)
    s.add_argument("--values", required=True, help="comma-separated axis values")
    s.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds starting at --seed")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("calibrate", help="fixed normalization bounds from random-action rollouts")
    c.add_argument("--config", required=True)
    c.add_argument("--episodes", type=int, default=5)
    c.add_argument("--quantile", type=float, default=99.0)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_calibrate)
    return p


def _log_level() -> int:
    raw = os.environ.get("VCPS_SIM_LOG", "")
    if raw.isdigit():
        return logging.DEBUG if int(raw) > 0 else logging.WARNING
    return getattr(logging, raw.upper(), logging.WARNING) if raw else logging.WARNING


def _fail(kind: str, message: str, problems=()) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "problems": list(problems)}) + "\n")
    return 2


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=_log_level(), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail("config", "; ".join(exc.problems), exc.problems)
    except CliError as exc:
        return _fail(exc.kind, str(exc), exc.problems)
    except TrainingDivergedError as exc:
        return _fail("diverged", str(exc))
    except queueing.UnstableQueueError as exc:
        return _fail("unstable_queue", str(exc))
    except (OSError, ValueError) as exc:
        return _fail(type(exc).__name__, str(exc).replace("\n", " "))


if __name__ == "__main__":
    sys.exit(main())
