"""Multi-class M/G/1 priority-queue analytics and a discrete-event oracle.

Priorities follow the convention "larger integer = served first".
"""

from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

LITERAL = "literal"
TEXTBOOK = "textbook"


class UnstableQueueError(ValueError):
    pass


@dataclass(frozen=True)
class SensingPlan:
    """What one vehicle senses in one slot.

    Arrays are aligned: entry ``i`` describes information type ``info_ids[i]``
    sensed at ``rates[i]`` Hz with upload priority ``priorities[i]``.
    """

    info_ids: tuple[int, ...]
    rates: tuple[float, ...]
    priorities: tuple[int, ...]
    mean_service: tuple[float, ...]
    service_variance: tuple[float, ...]

    def __post_init__(self):
        n = len(self.info_ids)
        if not all(len(x) == n for x in (self.rates, self.priorities, self.mean_service, self.service_variance)):
            raise ValueError("SensingPlan arrays must have equal length")
        if len(set(self.priorities)) != n:
            raise ValueError("priorities must be pairwise distinct")
        if len(set(self.info_ids)) != n:
            raise ValueError("info_ids must be distinct")

    @classmethod
    def build(cls, entries: Sequence[tuple[int, float, int, float, float]]) -> "SensingPlan":
        """From ``(info_id, rate, priority, mean_service, service_variance)`` tuples."""
        if not entries:
            return cls((), (), (), (), ())
        cols = list(zip(*entries))
        return cls(
            tuple(int(x) for x in cols[0]),
            tuple(float(x) for x in cols[1]),
            tuple(int(x) for x in cols[2]),
            tuple(float(x) for x in cols[3]),
            tuple(float(x) for x in cols[4]),
        )

    def index(self, info_id: int) -> int:
        try:
            return self.info_ids.index(info_id)
        except ValueError:
            raise KeyError(f"information {info_id} is not sensed in this plan") from None


def workload(plan: SensingPlan) -> float:
    """Total upload workload: sum of rate * mean service time."""
    return float(sum(l * a for l, a in zip(plan.rates, plan.mean_service)))


def check_stability(plan: SensingPlan) -> bool:
    return workload(plan) < 1.0


def higher_priority_workload(plan: SensingPlan, info_id: int) -> float:
    k = plan.index(info_id)
    p = plan.priorities[k]
    return float(sum(l * a for l, a, q in zip(plan.rates, plan.mean_service, plan.priorities) if q > p))


def _floor(x: float) -> int:
    # guard against 2.9999999 from rate arithmetic
    return math.floor(x + 1e-9 * max(1.0, abs(x)))


def moments(t: float, rate: float, update_interval: float) -> tuple[float, float]:
    """Arrival moment of the freshest sensed copy before ``t`` and its update moment."""
    if not rate > 0:
        raise ValueError("sensing rate must be > 0")
    if not update_interval > 0:
        raise ValueError("update interval must be > 0")
    a = _floor(t * rate) / rate
    u = _floor(a / update_interval) * update_interval
    return a, u


def priority_wait(
    rate: float,
    mean: float,
    var: float,
    higher_rates: Sequence[float],
    higher_means: Sequence[float],
    higher_vars: Sequence[float],
    mode: str = LITERAL,
) -> float:
    """Queuing time of one class given the classes ranked above it.

    ``mode="literal"`` uses the service-time variance in the residual terms,
    exactly as the model states it. ``mode="textbook"`` substitutes the second
    moment ``var + mean**2``, which yields the preemptive-resume M/G/1 priority
    waiting time (sojourn minus own service).
    """
    if mode not in (LITERAL, TEXTBOOK):
        raise ValueError(f"unknown mode {mode!r}")
    rho_h = float(sum(l * a for l, a in zip(higher_rates, higher_means)))
    if not rho_h < 1:
        raise UnstableQueueError(f"1 - higher-priority workload = {1 - rho_h:.6g} <= 0")
    denom = 1.0 - rho_h - rate * mean
    if not denom > 0:
        raise UnstableQueueError(f"1 - higher-priority workload - own workload = {denom:.6g} <= 0")
    if mode == LITERAL:
        resid = rate * var + sum(l * b for l, b in zip(higher_rates, higher_vars))
    else:
        resid = rate * (var + mean**2) + sum(l * (b + a**2) for l, a, b in zip(higher_rates, higher_means, higher_vars))
    return (mean + resid / (2.0 * denom)) / (1.0 - rho_h) - mean


def queuing_time(plan: SensingPlan, info_id: int, mode: str = LITERAL) -> float:
    k = plan.index(info_id)
    p = plan.priorities[k]
    hi = [j for j, q in enumerate(plan.priorities) if q > p]
    return priority_wait(
        plan.rates[k],
        plan.mean_service[k],
        plan.service_variance[k],
        [plan.rates[j] for j in hi],
        [plan.mean_service[j] for j in hi],
        [plan.service_variance[j] for j in hi],
        mode,
    )


def queuing_times(plan: SensingPlan, mode: str = LITERAL) -> dict[int, float]:
    return {d: queuing_time(plan, d, mode) for d in plan.info_ids}


def nonpreemptive_wait(
    rates: Sequence[float], means: Sequence[float], variances: Sequence[float], priorities: Sequence[int]
) -> np.ndarray:
    """Cobham's non-preemptive priority waiting times, one per class."""
    rates = np.asarray(rates, float)
    means = np.asarray(means, float)
    second = np.asarray(variances, float) + means**2
    prio = np.asarray(priorities)
    residual = 0.5 * float(np.sum(rates * second))
    out = np.empty(len(rates))
    for k in range(len(rates)):
        above = float(np.sum((rates * means)[prio > prio[k]]))
        out[k] = residual / ((1 - above) * (1 - above - rates[k] * means[k]))
    return out


# --- discrete-event oracle ------------------------------------------------

Sampler = Callable[[np.random.Generator, int, int], np.ndarray]


def gamma_sampler(means: Sequence[float], variances: Sequence[float]) -> Sampler:
    """Gamma service times with matched mean and variance; zero variance is deterministic."""
    means = [float(x) for x in means]
    variances = [float(x) for x in variances]

    def sample(rng: np.random.Generator, k: int, n: int) -> np.ndarray:
        m, v = means[k], variances[k]
        if v == 0:
            return np.full(n, m)
        return rng.gamma(m * m / v, v / m, size=n)

    return sample


@dataclass
class DesResult:
    mean_wait: np.ndarray
    stderr: np.ndarray
    n_jobs: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class_id", "mean_wait", "stderr", "n_jobs"])
        for k in range(len(self.mean_wait)):
            w.writerow([k, repr(float(self.mean_wait[k])), repr(float(self.stderr[k])), int(self.n_jobs[k])])
        return buf.getvalue()


def des_oracle(
    rates: Sequence[float],
    priorities: Sequence[int],
    sampler: Sampler,
    n_jobs: int,
    seed: int = 0,
    means: Sequence[float] | None = None,
    discipline: str = "preemptive",
    warmup_frac: float = 0.01,
    n_batches: int = 30,
) -> DesResult:
    """Simulate a single-server priority queue with Poisson arrivals.

    ``discipline`` is ``"preemptive"`` (preemptive-resume) or
    ``"nonpreemptive"``; service within a class is FIFO. The horizon is given
    as a total number of arriving jobs. Waiting time is sojourn minus the
    job's own service time. Standard errors come from batch means over the
    post-warm-up jobs of each class. If ``means`` is given, stability is
    checked up front.
    """
    rates = np.asarray(rates, float)
    n_cls = len(rates)
    if discipline not in ("preemptive", "nonpreemptive"):
        raise ValueError(f"unknown discipline {discipline!r}")
    if means is not None and float(np.dot(rates, means)) >= 1:
        raise UnstableQueueError(f"workload {float(np.dot(rates, means)):.4g} >= 1")
    total = float(rates.sum())
    if total <= 0 or n_jobs <= 0:
        z = np.zeros(n_cls)
        return DesResult(z, z.copy(), np.zeros(n_cls, dtype=int))

    rng = np.random.default_rng(seed)
    arrivals = np.cumsum(rng.exponential(1.0 / total, size=n_jobs))
    cls = rng.choice(n_cls, size=n_jobs, p=rates / total)
    service = np.empty(n_jobs)
    for k in range(n_cls):
        idx = np.flatnonzero(cls == k)
        service[idx] = sampler(rng, k, len(idx))

    # level 0 is the highest priority
    order = sorted(range(n_cls), key=lambda k: -priorities[k])
    level_of = [0] * n_cls
    for lv, k in enumerate(order):
        level_of[k] = lv
    levels = [level_of[k] for k in cls.tolist()]

    departure = _simulate(arrivals.tolist(), levels, service.tolist(), n_cls, discipline == "preemptive")
    wait = np.asarray(departure) - arrivals - service

    start = int(warmup_frac * n_jobs)
    mean_wait = np.zeros(n_cls)
    stderr = np.zeros(n_cls)
    counts = np.zeros(n_cls, dtype=int)
    for k in range(n_cls):
        w = wait[start:][cls[start:] == k]
        counts[k] = len(w)
        if len(w) == 0:
            continue
        mean_wait[k] = w.mean()
        b = min(n_batches, len(w))
        if b >= 2:
            usable = len(w) - len(w) % b
            bm = w[:usable].reshape(b, -1).mean(axis=1)
            stderr[k] = bm.std(ddof=1) / math.sqrt(b)
    return DesResult(mean_wait, stderr, counts)


def _simulate(arrivals: list, levels: list, service: list, n_levels: int, preemptive: bool) -> list:
    n = len(arrivals)
    remaining = list(service)
    departure = [0.0] * n
    queues = [deque() for _ in range(n_levels)]
    cur = -1
    now = 0.0

    def next_job() -> int:
        for q in queues:
            if q:
                return q.popleft()
        return -1

    for i in range(n):
        a = arrivals[i]
        while cur >= 0 and now + remaining[cur] <= a:
            now += remaining[cur]
            remaining[cur] = 0.0
            departure[cur] = now
            cur = next_job()
        if cur >= 0:
            remaining[cur] -= a - now
        now = a
        lv = levels[i]
        if cur < 0:
            cur = i
        elif preemptive and lv < levels[cur]:
            queues[levels[cur]].appendleft(cur)
            cur = i
        else:
            queues[lv].append(i)
    while cur >= 0:
        now += remaining[cur]
        departure[cur] = now
        cur = next_job()
    return departure
