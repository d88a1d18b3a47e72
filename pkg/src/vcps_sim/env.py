"""Discrete-time environment: one RSU agent per edge node, one slot per step."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import channel, queueing
from .domain import Scenario
from .metrics import DeliveryRecord, Normalizer, SensedItem, ViewScore, raw_components, score_view, score_rows_csv

MIN_DISTANCE = 1.0  # m, keeps the path-loss term finite for co-located vehicles
RATE_RESCALE = 0.99


@dataclass
class VehicleDecision:
    vehicle: int
    slot: int  # position k in the RSU's observation
    sensed: list[int]
    rates: dict[int, float]
    priorities: dict[int, int]
    power: float
    bandwidth: float
    transmits: bool
    distance: float


@dataclass
class RsuDecision:
    rsu: int
    t: int
    vehicles: list[VehicleDecision] = field(default_factory=list)
    overflow: list[int] = field(default_factory=list)


@dataclass
class _Upload:
    vehicle: int
    info_id: int
    rsu: int
    arrival: float
    queuing: float
    update: float
    start: float
    left: float
    power: float
    sensing_cost: float


class VcpsEnv:
    """Gym-style environment over a fixed :class:`Scenario`.

    ``reset`` returns one observation per RSU; ``step`` takes one raw action
    vector per RSU (entries in [0, 1]) and returns
    ``(observations, rewards, done, info)``.
    """

    def __init__(self, scenario: Scenario, queue_mode: str = queueing.LITERAL, trace: bool | None = None):
        self.scenario = scenario
        cfg = scenario.config
        self.E = len(scenario.rsus)
        self.M = scenario.n_types
        self.K = cfg.max_vehicles_per_rsu
        self.V = scenario.max_views_per_rsu()
        self.T = scenario.T
        self.L = cfg.slot_length
        self.queue_mode = queue_mode
        self.trace = bool(int(os.environ.get("VCPS_SIM_LOG", "0") or 0)) if trace is None else trace
        self.obs_dim = self.E + 1 + self.K + self.K * self.M + self.M + self.V * self.M
        self.block = 3 * self.M + 1
        self.act_dim = self.K * self.block + self.K
        self._ranges = np.array([r.radio_range for r in scenario.rsus])
        self._bw = np.array([r.bandwidth for r in scenario.rsus])
        self._sensable = np.zeros((len(scenario.vehicles), self.M))
        for v in scenario.vehicles:
            for s in v.sensable:
                self._sensable[v.id, s.info_id] = 1.0
        self._view_mask = np.zeros((len(scenario.views), self.M))
        for v in scenario.views:
            self._view_mask[v.id, list(v.required)] = 1.0
        self.normalizer = Normalizer(cfg.normalization, self.E)
        self.t = 0
        self.rng = np.random.default_rng(0)

    # --- lifecycle ----------------------------------------------------------

    def reset(self, seed: int = 0) -> list[np.ndarray]:
        self.rng = np.random.default_rng(seed)
        self.t = 0
        self.pending: list[_Upload] = []
        self.cache: list[dict[tuple[int, int], float]] = [dict() for _ in range(self.E)]
        self.normalizer.reset()
        self.score_rows: list[tuple[int, int, int, ViewScore]] = []
        self.trace_rows: list[tuple] = []
        return self.observe()

    # --- association & observation -----------------------------------------

    def association(self, t: int) -> tuple[np.ndarray, list[list[int]], np.ndarray]:
        """Distances ``(S, E)``, per-RSU served vehicles (nearest first) and the serving RSU per vehicle.

        A vehicle is served by the nearest RSU whose range covers it; ``-1``
        means uncovered.
        """
        dist = self.scenario.distances(t)
        covered = dist <= self._ranges[None, :]
        masked = np.where(covered, dist, np.inf)
        serving = np.where(covered.any(axis=1), np.argmin(masked, axis=1), -1)
        served = []
        for e in range(self.E):
            ids = np.flatnonzero(serving == e)
            ids = sorted(ids.tolist(), key=lambda s: (dist[s, e], s))
            served.append(ids)
        return dist, served, serving

    def observe(self) -> list[np.ndarray]:
        t = min(self.t, self.T - 1)
        dist, served, _ = self.association(t)
        out = []
        now = self.t * self.L
        age_cap = self.scenario.config.cache_age_cap
        for e in range(self.E):
            o = np.zeros(self.obs_dim)
            o[0] = self.t / self.T
            o[1 + e] = 1.0
            i = 1 + self.E
            vs = served[e][: self.K]
            for k, s in enumerate(vs):
                o[i + k] = dist[s, e] / self._ranges[e]
                o[i + self.K + k * self.M : i + self.K + (k + 1) * self.M] = self._sensable[s]
            i += self.K + self.K * self.M
            ages = np.ones(self.M)
            for (d, _s), u in self.cache[e].items():
                ages[d] = min(ages[d], min(1.0, max(0.0, now - u) / age_cap))
            o[i : i + self.M] = ages
            i += self.M
            for row, view in enumerate(self.scenario.views_at(e, t)):
                o[i + row * self.M : i + (row + 1) * self.M] = self._view_mask[view.id]
            out.append(o)
        return out

    # --- action decoding ----------------------------------------------------

    def decode_action(self, raw: np.ndarray, rsu: int, t: int | None = None, _assoc=None) -> RsuDecision:
        """Map a raw action in [0, 1]^act_dim to decisions satisfying every hard constraint."""
        t = self.t if t is None else t
        raw = np.clip(np.asarray(raw, float).reshape(-1), 0.0, 1.0)
        if raw.shape[0] != self.act_dim:
            raise ValueError(f"action length {raw.shape[0]} != {self.act_dim}")
        dist, served, _ = _assoc if _assoc is not None else self.association(t)
        vs = served[rsu][: self.K]
        dec = RsuDecision(rsu, t, overflow=served[rsu][self.K :])
        if not vs:
            return dec
        M, M3 = self.M, self.block
        ch = self.scenario.config.channel
        info = self.scenario.info_types
        bw_frac = raw[self.K * M3 : self.K * M3 + len(vs)]
        total = float(bw_frac.sum())
        if total > 0:
            bws = self._bw[rsu] * bw_frac / total
        else:
            bws = np.full(len(vs), self._bw[rsu] / len(vs))

        for k, s in enumerate(vs):
            veh = self.scenario.vehicles[s]
            blk = raw[k * M3 : (k + 1) * M3]
            logits, freq, prio, pfrac = blk[:M], blk[M : 2 * M], blk[2 * M : 3 * M], blk[3 * M]
            sensed = [d for d in range(M) if logits[d] > 0.5 and self._sensable[s, d] > 0]
            rates = {}
            for d in sensed:
                ent = veh.entry(d)
                rates[d] = ent.lambda_min + freq[d] * (ent.lambda_max - ent.lambda_min)
            order = sorted(sensed, key=lambda d: (-prio[d], d))
            priorities = {d: len(order) - r for r, d in enumerate(order)}
            sensed, rates = _enforce_stability(sensed, rates, priorities, veh, info)
            priorities = {d: priorities[d] for d in sensed}

            d_se = max(float(dist[s, rsu]), MIN_DISTANCE)
            floor = channel.power_floor(d_se, ch)
            power = max(pfrac * veh.max_power, floor)
            transmits = power <= veh.max_power
            if not transmits:
                power = 0.0
            dec.vehicles.append(
                VehicleDecision(s, k, sensed, rates, priorities, float(power), float(bws[k]), bool(transmits), d_se)
            )
        return dec

    # --- dynamics -----------------------------------------------------------

    def step(self, actions: Sequence[np.ndarray]):
        if len(actions) != self.E:
            raise ValueError(f"expected {self.E} actions, got {len(actions)}")
        if self.t >= self.T:
            raise RuntimeError("episode finished; call reset()")
        t = self.t
        t0, t1 = t * self.L, (t + 1) * self.L
        assoc = self.association(t)
        dist, served, serving = assoc
        decisions = [self.decode_action(a, e, t, assoc) for e, a in enumerate(actions)]
        ch = self.scenario.config.channel
        fading = channel.sample_fading(self.rng, ch, (dist.shape[0], self.E))

        link_rate = np.zeros(dist.shape[0])
        sensed_items: list[list[SensedItem]] = [[] for _ in range(self.E)]
        for dec in decisions:
            e = dec.rsu
            for vd in dec.vehicles:
                veh = self.scenario.vehicles[vd.vehicle]
                if vd.transmits:
                    z = channel.shannon_rate(
                        vd.bandwidth, channel.snr_array(vd.power, fading[vd.vehicle, e], vd.distance, ch)
                    )
                    link_rate[vd.vehicle] = float(z)
                if not vd.sensed:
                    continue
                plan = queueing.SensingPlan.build(
                    [
                        (
                            d,
                            vd.rates[d],
                            vd.priorities[d],
                            self.scenario.info_types[d].mean_service,
                            self.scenario.info_types[d].service_variance,
                        )
                        for d in vd.sensed
                    ]
                )
                qs = queueing.queuing_times(plan, self.queue_mode)
                for d in vd.sensed:
                    cost = veh.entry(d).sensing_cost
                    sensed_items[e].append(SensedItem(vd.vehicle, d, cost))
                    a, u = queueing.moments(t0, vd.rates[d], self.scenario.info_types[d].update_interval)
                    if vd.transmits:
                        self.pending.append(
                            _Upload(vd.vehicle, d, e, a, qs[d], u, t0 + qs[d], self.scenario.info_types[d].size, vd.power, cost)
                        )
                        if self.trace:
                            self.trace_rows.append((t, e, vd.vehicle, d, "sense", a, qs[d], u))

        delivered: list[list[DeliveryRecord]] = [[] for _ in range(self.E)]
        still = []
        for up in self.pending:
            if serving[up.vehicle] != up.rsu:
                if self.trace:
                    self.trace_rows.append((t, up.rsu, up.vehicle, up.info_id, "drop", up.arrival, up.queuing, up.update))
                continue
            begin = max(up.start, t0)
            if begin >= t1:
                still.append(up)
                continue
            z = link_rate[up.vehicle]
            if z > 0 and begin + up.left / z <= t1:
                finish = begin + up.left / z
                rec = DeliveryRecord(
                    up.vehicle, up.info_id, up.rsu, up.arrival, up.queuing, finish - up.start, up.update, up.power, up.sensing_cost
                )
                delivered[up.rsu].append(rec)
                if self.trace:
                    self.trace_rows.append((t, up.rsu, up.vehicle, up.info_id, "deliver", up.arrival, up.queuing, up.update))
            else:
                up.left -= z * (t1 - begin)
                still.append(up)
        self.pending = still

        rewards = np.zeros(self.E)
        scores: list[list[tuple[int, ViewScore]]] = []
        w = self.scenario.config.weights
        for e in range(self.E):
            views = self.scenario.views_at(e, t)
            raws = [raw_components(v.required, delivered[e], sensed_items[e]) for v in views]
            for raw in raws:
                if not raw.missing:
                    for m, x in raw.as_dict().items():
                        self.normalizer.observe(e, m, x)
            sc = [(v.id, score_view(raw, self.normalizer, e, w)) for v, raw in zip(views, raws)]
            self.normalizer.commit(e)
            if sc:
                rewards[e] = sum(2.0 - s.aov - s.cov for _, s in sc) / len(sc)
            scores.append(sc)
            self.score_rows.extend((t, e, vid, s) for vid, s in sc)
            for rec in delivered[e]:
                key = (rec.info_id, rec.vehicle)
                self.cache[e][key] = max(self.cache[e].get(key, -math.inf), rec.update)

        self.t += 1
        done = self.t >= self.T
        info = {"decisions": decisions, "scores": scores, "deliveries": delivered, "t": t}
        return self.observe(), rewards, done, info

    # --- exports ------------------------------------------------------------

    def scores_csv(self) -> str:
        return score_rows_csv(self.score_rows)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", "rsu", "vehicle", "info", "event", "arrival", "queuing", "update"])
        wr.writerows(self.trace_rows)
        return buf.getvalue()


def _enforce_stability(sensed, rates, priorities, veh, info):
    """Rescale rates so the upload workload stays below one.

    All rates are scaled by ``0.99 / rho``; rates pushed below their minimum
    are clamped back, and if the load is still too high the lowest-priority
    types are dropped.
    """
    rho = sum(rates[d] * info[d].mean_service for d in sensed)
    if rho < 1:
        return sensed, rates
    scale = RATE_RESCALE / rho
    rates = {d: max(rates[d] * scale, veh.entry(d).lambda_min) for d in sensed}
    sensed = sorted(sensed, key=lambda d: -priorities[d])
    while sensed and sum(rates[d] * info[d].mean_service for d in sensed) >= 1:
        sensed = sensed[:-1]
    sensed = sorted(sensed)
    return sensed, {d: rates[d] for d in sensed}


def constraint_violations(env: VcpsEnv, dec: RsuDecision) -> list[str]:
    """Hard-constraint audit of one RSU's decoded decisions."""
    out = []
    sc = env.scenario
    ch = sc.config.channel
    b_e = sc.rsus[dec.rsu].bandwidth
    for vd in dec.vehicles:
        veh = sc.vehicles[vd.vehicle]
        tag = f"t={dec.t} rsu={dec.rsu} vehicle={vd.vehicle}"
        if not set(vd.sensed) <= veh.sensable_ids():
            out.append(f"{tag}: sensing indicator set on a non-sensable type")
        for d in vd.sensed:
            ent = veh.entry(d)
            if not ent.lambda_min - 1e-12 <= vd.rates[d] <= ent.lambda_max + 1e-12:
                out.append(f"{tag}: rate of type {d} outside [min, max]")
        if len(set(vd.priorities[d] for d in vd.sensed)) != len(vd.sensed):
            out.append(f"{tag}: priorities not distinct")
        if not 0 <= vd.power <= veh.max_power:
            out.append(f"{tag}: power outside [0, max]")
        if not 0 <= vd.bandwidth <= b_e * (1 + 1e-12):
            out.append(f"{tag}: bandwidth outside [0, b_e]")
        rho = sum(vd.rates[d] * sc.info_types[d].mean_service for d in vd.sensed)
        if not rho < 1:
            out.append(f"{tag}: workload {rho:.4f} >= 1")
        if vd.transmits and not channel.reliability_holds(vd.power, vd.distance, ch):
            out.append(f"{tag}: reliability target not met")
    total = sum(vd.bandwidth for vd in dec.vehicles)
    if total > b_e * (1 + 1e-12):
        out.append(f"t={dec.t} rsu={dec.rsu}: bandwidth sum {total} > {b_e}")
    return out


def episode_return(rewards: np.ndarray) -> float:
    """Cumulative reward: per-slot mean over RSUs, summed over slots."""
    r = np.asarray(rewards, float)
    if r.size == 0:
        return 0.0
    if r.ndim == 1:
        return float(r.sum())
    return float(r.mean(axis=1).sum())


def rollout(env: VcpsEnv, policy, seed: int = 0) -> tuple[float, np.ndarray, list]:
    """Run one episode with ``policy(obs_list, t) -> actions``; return CR, rewards (T, E), scores."""
    obs = env.reset(seed)
    rewards = []
    done = False
    while not done:
        obs, r, done, _ = env.step(policy(obs, env.t))
        rewards.append(r)
    return episode_return(np.array(rewards)), np.array(rewards), list(env.score_rows)


def random_policy(env: VcpsEnv, seed: int = 0):
    rng = np.random.default_rng(seed)
    return lambda obs, t: [rng.random(env.act_dim) for _ in obs]


def calibrate_bounds(
    scenario: Scenario, episodes: int = 5, quantile: float = 99.0, seed: int = 0
) -> dict[str, tuple[float, float]]:
    """Fixed normalization bounds from random-action rollouts.

    The lower bound is 0 for every component and the upper bound is the
    ``quantile`` percentile of its raw values over delivered views.
    """
    env = VcpsEnv(scenario)
    vals = []
    for ep in range(episodes):
        _, _, rows = rollout(env, random_policy(env, seed + ep), seed=seed + ep)
        vals += [list(s.raw.as_dict().values()) for *_, s in rows if not s.missing]
    if not vals:
        raise ValueError("no view received any information during calibration")
    hi = np.percentile(np.array(vals), quantile, axis=0)
    names = ("theta", "psi", "xi", "phi", "omega")
    return {n: (0.0, float(max(h, 1e-9))) for n, h in zip(names, hi)}
