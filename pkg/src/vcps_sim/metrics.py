"""Age-of-View / Cost-of-View scoring of logical views."""

from __future__ import annotations

import csv
import io
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .domain import METRIC_NAMES, MetricWeights, NormalizationSpec


@dataclass(frozen=True)
class DeliveryRecord:
    """One sensed copy that reached an RSU."""

    vehicle: int
    info_id: int
    rsu: int
    arrival: float  # a
    queuing: float  # q
    transmission: float  # g
    update: float  # u
    power: float  # W used while uploading
    sensing_cost: float

    @property
    def staleness(self) -> float:
        return self.arrival + self.queuing + self.transmission - self.update


@dataclass(frozen=True)
class SensedItem:
    vehicle: int
    info_id: int
    sensing_cost: float


@dataclass(frozen=True)
class RawViewComponents:
    theta: float
    psi: float
    xi: int
    phi: float
    omega: float
    received: frozenset = frozenset()  # (vehicle, info_id) pairs

    @property
    def missing(self) -> bool:
        return not self.received

    def as_dict(self) -> dict[str, float]:
        return {"theta": self.theta, "psi": self.psi, "xi": self.xi, "phi": self.phi, "omega": self.omega}


def _required(records: Iterable[DeliveryRecord], required) -> list[DeliveryRecord]:
    req = set(required)
    return [r for r in records if r.info_id in req]


def timeliness(records: Iterable[DeliveryRecord], required) -> float:
    """Sum over vehicles of each vehicle's worst staleness among required deliveries."""
    worst: dict[int, float] = {}
    for r in _required(records, required):
        s = r.staleness
        if r.vehicle not in worst or s > worst[r.vehicle]:
            worst[r.vehicle] = s
    return float(sum(worst.values()))


def consistency(records: Iterable[DeliveryRecord], required) -> float:
    us = [r.update for r in _required(records, required)]
    if not us:
        return 0.0
    return float(max(us) - min(us))


def redundancy(records: Iterable[DeliveryRecord], required) -> int:
    counts: dict[int, int] = defaultdict(int)
    for r in _required(records, required):
        counts[r.info_id] += 1
    return int(sum(max(c - 1, 0) for c in counts.values()))


def sensing_cost(sensed: Iterable[SensedItem], required) -> float:
    req = set(required)
    return float(sum(x.sensing_cost for x in sensed if x.info_id in req))


def transmission_cost(records: Iterable[DeliveryRecord], required) -> float:
    return float(sum(r.power * r.transmission for r in _required(records, required)))


def raw_components(
    required: Sequence[int], records: Sequence[DeliveryRecord], sensed: Sequence[SensedItem]
) -> RawViewComponents:
    got = _required(records, required)
    return RawViewComponents(
        theta=timeliness(got, required),
        psi=consistency(got, required),
        xi=redundancy(got, required),
        phi=sensing_cost(sensed, required),
        omega=transmission_cost(got, required),
        received=frozenset((r.vehicle, r.info_id) for r in got),
    )


class Normalizer:
    """Per-RSU, per-metric min-max scaling.

    In ``fixed`` mode the bounds are the configured ones. In ``sliding`` mode the
    bounds are the min/max of the raw values observed over the last
    ``window`` slots (the current slot included once observed). A degenerate
    range maps to 0.5; results are clamped into [0, 1].
    """

    def __init__(self, spec: NormalizationSpec, n_rsu: int):
        self.spec = spec
        self.n_rsu = n_rsu
        self.reset()

    def reset(self) -> None:
        w = self.spec.window
        self._windows = [{m: deque(maxlen=w) for m in METRIC_NAMES} for _ in range(self.n_rsu)]
        self._pending = [{m: [] for m in METRIC_NAMES} for _ in range(self.n_rsu)]

    def observe(self, rsu: int, metric: str, value: float) -> None:
        self._pending[rsu][metric].append(float(value))

    def commit(self, rsu: int) -> None:
        """Close the current slot for ``rsu``: its observations enter the window."""
        for m in METRIC_NAMES:
            vals = self._pending[rsu][m]
            if vals:
                self._windows[rsu][m].append((min(vals), max(vals)))
            self._pending[rsu][m] = []

    def bounds(self, metric: str, rsu: int) -> tuple[float, float] | None:
        if self.spec.mode == "fixed":
            return tuple(self.spec.bounds[metric])
        win = list(self._windows[rsu][metric])
        pend = self._pending[rsu][metric]
        if pend:
            win.append((min(pend), max(pend)))
        if not win:
            return None
        return min(lo for lo, _ in win), max(hi for _, hi in win)

    def normalize(self, value: float, metric: str, rsu: int) -> float:
        b = self.bounds(metric, rsu)
        if b is None:
            return 0.5
        lo, hi = b
        if hi <= lo:
            return 0.5
        return min(1.0, max(0.0, (value - lo) / (hi - lo)))


@dataclass(frozen=True)
class ViewScore:
    aov: float
    cov: float
    normalized: dict[str, float] = field(default_factory=dict)
    raw: RawViewComponents | None = None

    @property
    def missing(self) -> bool:
        return self.raw is not None and self.raw.missing


def age_of_view(theta_n: float, psi_n: float, w: MetricWeights) -> float:
    return w.w1 * theta_n + w.w2 * psi_n


def cost_of_view(xi_n: float, phi_n: float, omega_n: float, w: MetricWeights) -> float:
    return w.w3 * xi_n + w.w4 * phi_n + w.w5 * omega_n


def score_view(raw: RawViewComponents, normalizer: Normalizer, rsu: int, weights: MetricWeights) -> ViewScore:
    """AoV/CoV of one view. A view that received nothing scores AoV=1, CoV=0."""
    if raw.missing:
        return ViewScore(1.0, 0.0, {m: float("nan") for m in METRIC_NAMES}, raw)
    vals = raw.as_dict()
    n = {m: normalizer.normalize(vals[m], m, rsu) for m in METRIC_NAMES}
    return ViewScore(
        age_of_view(n["theta"], n["psi"], weights),
        cost_of_view(n["xi"], n["phi"], n["omega"], weights),
        n,
        raw,
    )


def objective(scores: Sequence[ViewScore]) -> float:
    """Mean view quality complement plus mean view cost complement."""
    if not scores:
        return 0.0
    k = len(scores)
    return sum(1.0 - s.aov for s in scores) / k + sum(1.0 - s.cov for s in scores) / k


SCORE_HEADER = ["t", "rsu_id", "view_id", "theta", "psi", "xi", "phi", "omega", "aov", "cov"]


def score_rows_csv(rows: Iterable[tuple[int, int, int, ViewScore]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCORE_HEADER)
    for t, e, v, s in rows:
        raw = s.raw
        w.writerow(
            [t, e, v, repr(raw.theta), repr(raw.psi), raw.xi, repr(raw.phi), repr(raw.omega), repr(s.aov), repr(s.cov)]
        )
    return buf.getvalue()
