"""Core domain types, scenario configuration and seeded scenario construction.

Units are SI throughout: metres, seconds, bits, hertz, watts.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

EARTH_RADIUS_M = 6_371_000.0


class ConfigError(ValueError):
    """Raised when a configuration violates an invariant.

    ``problems`` holds one ``"field: message"`` string per violation.
    """

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class InformationType:
    id: int
    update_interval: float  # seconds between state updates of the underlying datum
    size: float  # bits
    mean_service: float  # seconds, mean of the upload service time
    service_variance: float  # seconds**2

    def problems(self, prefix: str = "info_types") -> list[str]:
        out = []
        if not self.update_interval > 0:
            out.append(f"{prefix}.update_interval: must be > 0")
        if not self.size > 0:
            out.append(f"{prefix}.size: must be > 0")
        if not self.mean_service > 0:
            out.append(f"{prefix}.mean_service: must be > 0")
        if not self.service_variance >= 0:
            out.append(f"{prefix}.service_variance: must be >= 0")
        return out


@dataclass(frozen=True)
class Rsu:
    id: int
    location: tuple[float, float]
    radio_range: float
    bandwidth: float

    def problems(self, prefix: str = "rsus") -> list[str]:
        out = []
        if not self.radio_range > 0:
            out.append(f"{prefix}.radio_range: must be > 0")
        if not self.bandwidth > 0:
            out.append(f"{prefix}.bandwidth: must be > 0")
        return out


@dataclass(frozen=True)
class SensableInfo:
    info_id: int
    sensing_cost: float
    lambda_min: float
    lambda_max: float


@dataclass(frozen=True, eq=False)
class Vehicle:
    id: int
    trajectory: np.ndarray  # (T, 2) positions in metres, read-only
    sensable: tuple[SensableInfo, ...]
    max_power: float

    def sensable_ids(self) -> frozenset[int]:
        return frozenset(s.info_id for s in self.sensable)

    def entry(self, info_id: int) -> SensableInfo | None:
        for s in self.sensable:
            if s.info_id == info_id:
                return s
        return None


@dataclass(frozen=True, eq=False)
class ViewRequirement:
    id: int
    required: tuple[int, ...]
    rsu_schedule: np.ndarray  # (T,) id of the RSU requiring the view per slot, -1 when inactive

    def active_at(self, rsu_id: int, t: int) -> bool:
        return int(self.rsu_schedule[t]) == rsu_id


@dataclass(frozen=True)
class ChannelParams:
    noise_dbm: float = -90.0
    antenna_const: float = 1.0
    path_loss_exp: float = 3.0
    fading_mean: float = 2.0
    fading_var: float = 0.4
    snr_target_db: float = 10.0
    reliability: float = 0.9

    @property
    def noise_w(self) -> float:
        return 10.0 ** (self.noise_dbm / 10.0) / 1000.0

    @property
    def snr_target(self) -> float:
        return 10.0 ** (self.snr_target_db / 10.0)


@dataclass(frozen=True)
class MetricWeights:
    w1: float = 0.6
    w2: float = 0.4
    w3: float = 0.2
    w4: float = 0.4
    w5: float = 0.4


METRIC_NAMES = ("theta", "psi", "xi", "phi", "omega")


@dataclass(frozen=True)
class NormalizationSpec:
    """How raw view components are min-max scaled.

    ``mode="fixed"`` scales against the configured ``bounds``; ``mode="sliding"``
    keeps a per-RSU running window of the last ``window`` slots' raw values.
    """

    mode: str = "fixed"
    window: int = 100
    bounds: dict[str, tuple[float, float]] = field(
        default_factory=lambda: {
            "theta": (0.0, 30.0),
            "psi": (0.0, 14.0),
            "xi": (0.0, 6.0),
            "phi": (0.0, 5.0),
            "omega": (0.0, 0.12),
        }
    )


@dataclass(frozen=True)
class FleetSpec:
    count: int = 8
    max_power: float = 0.1
    sensing_cost: tuple[float, float] = (0.1, 1.0)
    lambda_range: tuple[float, float] = (0.2, 2.0)
    sensable_prob: float = 0.8
    speed_range: tuple[float, float] = (5.0, 15.0)
    trajectory_csv: str | None = None
    csv_projection: str = "xy"  # "xy" or "lonlat"


@dataclass(frozen=True)
class ViewSpec:
    count: int = 4
    mean_required: float = 2.0
    schedule_block: int = 20


@dataclass(frozen=True)
class ScenarioConfig:
    time_slots: int = 200
    slot_length: float = 1.0
    area_m: float = 1000.0
    rsus: tuple[Rsu, ...] = ()
    info_types: tuple[InformationType, ...] = ()
    fleet: FleetSpec = field(default_factory=FleetSpec)
    views: ViewSpec = field(default_factory=ViewSpec)
    channel: ChannelParams = field(default_factory=ChannelParams)
    weights: MetricWeights = field(default_factory=MetricWeights)
    normalization: NormalizationSpec = field(default_factory=NormalizationSpec)
    max_vehicles_per_rsu: int = 8
    cache_age_cap: float = 10.0
    rng_seed: int = 0

    def problems(self) -> list[str]:
        out: list[str] = []
        if self.time_slots < 1:
            out.append("time_slots: must be >= 1")
        if not self.slot_length > 0:
            out.append("slot_length: must be > 0")
        if not self.area_m > 0:
            out.append("area_m: must be > 0")
        if not self.rsus:
            out.append("rsus: at least one RSU required")
        if not self.info_types:
            out.append("info_types: at least one information type required")
        for i, r in enumerate(self.rsus):
            out += r.problems(f"rsus[{i}]")
        for i, d in enumerate(self.info_types):
            out += d.problems(f"info_types[{i}]")
        if sorted(d.id for d in self.info_types) != list(range(len(self.info_types))):
            out.append("info_types.id: ids must be 0..M-1")
        if sorted(r.id for r in self.rsus) != list(range(len(self.rsus))):
            out.append("rsus.id: ids must be 0..E-1")

        f = self.fleet
        if f.count < 1:
            out.append("fleet.count: must be >= 1")
        if not f.max_power > 0:
            out.append("fleet.max_power: must be > 0")
        lo, hi = f.lambda_range
        if not (lo > 0 and lo <= hi):
            out.append("fleet.lambda_range: need 0 < lambda_min <= lambda_max")
        if not (0 <= f.sensing_cost[0] <= f.sensing_cost[1]):
            out.append("fleet.sensing_cost: need 0 <= low <= high")
        if not (0 < f.sensable_prob <= 1):
            out.append("fleet.sensable_prob: must be in (0, 1]")
        if not (0 < f.speed_range[0] <= f.speed_range[1]):
            out.append("fleet.speed_range: need 0 < low <= high")
        if f.csv_projection not in ("xy", "lonlat"):
            out.append("fleet.csv_projection: must be 'xy' or 'lonlat'")
        if f.trajectory_csv is not None and not Path(f.trajectory_csv).is_file():
            out.append(f"fleet.trajectory_csv: file not found: {f.trajectory_csv}")

        v = self.views
        if v.count < 1:
            out.append("views.count: must be >= 1")
        if not (1 <= v.mean_required <= max(len(self.info_types), 1)):
            out.append("views.mean_required: must be in [1, number of info types]")
        if v.schedule_block < 1:
            out.append("views.schedule_block: must be >= 1")

        c = self.channel
        if not (0 < c.reliability < 1):
            out.append("channel.reliability: must be in (0, 1)")
        if not c.fading_mean > 0:
            out.append("channel.fading_mean: must be > 0")
        if not c.fading_var >= 0:
            out.append("channel.fading_var: must be >= 0")
        if not c.antenna_const > 0:
            out.append("channel.antenna_const: must be > 0")

        w = self.weights
        ws = [w.w1, w.w2, w.w3, w.w4, w.w5]
        if any(x < 0 for x in ws):
            out.append("weights: all weights must be >= 0")
        if not math.isclose(w.w1 + w.w2, 1.0, abs_tol=1e-9):
            out.append("weights.w1+w2: must sum to 1")
        if not math.isclose(w.w3 + w.w4 + w.w5, 1.0, abs_tol=1e-9):
            out.append("weights.w3+w4+w5: must sum to 1")

        n = self.normalization
        if n.mode not in ("fixed", "sliding"):
            out.append("normalization.mode: must be 'fixed' or 'sliding'")
        if n.window < 1:
            out.append("normalization.window: must be >= 1")
        if n.mode == "fixed":
            for name in METRIC_NAMES:
                b = n.bounds.get(name)
                if b is None or not b[1] > b[0]:
                    out.append(f"normalization.bounds.{name}: need low < high")
        if self.max_vehicles_per_rsu < 1:
            out.append("max_vehicles_per_rsu: must be >= 1")
        if not self.cache_age_cap > 0:
            out.append("cache_age_cap: must be > 0")
        return out

    def validate(self) -> "ScenarioConfig":
        probs = self.problems()
        if probs:
            raise ConfigError(probs)
        return self

    # --- JSON round trip -------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["normalization"]["bounds"] = {k: list(v) for k, v in self.normalization.bounds.items()}
        return _listify(d)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ScenarioConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError([f"{k}: unknown field" for k in sorted(unknown)])
        kw: dict[str, Any] = {}
        try:
            for k, v in d.items():
                if k == "rsus":
                    kw[k] = tuple(
                        Rsu(int(r["id"]), tuple(map(float, r["location"])), float(r["radio_range"]), float(r["bandwidth"]))
                        for r in v
                    )
                elif k == "info_types":
                    kw[k] = tuple(InformationType(**x) for x in v)
                elif k == "fleet":
                    x = dict(v)
                    for t in ("sensing_cost", "lambda_range", "speed_range"):
                        if t in x:
                            x[t] = tuple(x[t])
                    kw[k] = FleetSpec(**x)
                elif k == "views":
                    kw[k] = ViewSpec(**v)
                elif k == "channel":
                    kw[k] = ChannelParams(**v)
                elif k == "weights":
                    kw[k] = MetricWeights(**v)
                elif k == "normalization":
                    x = dict(v)
                    if "bounds" in x:
                        x["bounds"] = {name: tuple(b) for name, b in x["bounds"].items()}
                    kw[k] = NormalizationSpec(**x)
                else:
                    kw[k] = v
        except (TypeError, KeyError) as exc:
            raise ConfigError([f"config: malformed section ({exc})"]) from exc
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigError([f"config: file not found: {path}"]) from exc
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config: invalid JSON ({exc})"]) from exc
        raw.pop("agent", None)
        cfg = cls.from_dict(raw)
        csv_path = cfg.fleet.trajectory_csv
        if csv_path is not None and not Path(csv_path).is_absolute():
            cfg = replace(cfg, fleet=replace(cfg.fleet, trajectory_csv=str(path.parent / csv_path)))
        return cfg

    def with_bandwidth(self, hz: float) -> "ScenarioConfig":
        return replace(self, rsus=tuple(replace(r, bandwidth=float(hz)) for r in self.rsus))

    def with_view_size(self, mean_required: float) -> "ScenarioConfig":
        return replace(self, views=replace(self.views, mean_required=float(mean_required)))


def _listify(x: Any) -> Any:
    if isinstance(x, dict):
        return {k: _listify(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_listify(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


def grid_rsus(count: int, area_m: float, radio_range: float, bandwidth: float) -> tuple[Rsu, ...]:
    """Place ``count`` RSUs at the centres of a near-square grid over the area."""
    cols = math.ceil(math.sqrt(count))
    rows = math.ceil(count / cols)
    out = []
    for i in range(count):
        r, c = divmod(i, cols)
        x = (c + 0.5) * area_m / cols
        y = (r + 0.5) * area_m / rows
        out.append(Rsu(i, (x, y), radio_range, bandwidth))
    return tuple(out)


def random_info_types(m: int, seed: int, reference_rate: float = 2e7) -> tuple[InformationType, ...]:
    """Information types with sizes uniform in [100 B, 1 MB].

    The mean service time is the upload time at ``reference_rate`` bit/s and the
    service-time standard deviation is half the mean.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(m):
        size = float(rng.uniform(800.0, 8e6))
        alpha = size / reference_rate
        out.append(
            InformationType(
                id=i,
                update_interval=float(rng.choice([1.0, 2.0, 5.0, 10.0])),
                size=size,
                mean_service=alpha,
                service_variance=(alpha / 2.0) ** 2,
            )
        )
    return tuple(out)


# --- trajectories --------------------------------------------------------


def generate_synthetic_trajectories(
    n_vehicles: int,
    area_km: float,
    T: int,
    seed: int,
    speed_range: tuple[float, float] = (5.0, 15.0),
    slot_length: float = 1.0,
) -> np.ndarray:
    """Random-waypoint paths inside a square area, sampled once per slot.

    Returns an array of shape ``(n_vehicles, T, 2)`` in metres.
    """
    if n_vehicles < 1:
        raise ValueError("n_vehicles must be >= 1")
    if T < 1:
        raise ValueError("T must be >= 1")
    side = area_km * 1000.0
    rng = np.random.default_rng(seed)
    out = np.empty((n_vehicles, T, 2))
    for s in range(n_vehicles):
        pos = rng.uniform(0.0, side, size=2)
        target = rng.uniform(0.0, side, size=2)
        speed = rng.uniform(*speed_range)
        out[s, 0] = pos
        for t in range(1, T):
            budget = speed * slot_length
            while budget > 0:
                delta = target - pos
                dist = float(np.hypot(*delta))
                if dist <= budget:
                    pos = target
                    budget -= dist
                    target = rng.uniform(0.0, side, size=2)
                    speed = rng.uniform(*speed_range)
                else:
                    pos = pos + delta * (budget / dist)
                    budget = 0.0
            out[s, t] = pos
    return out


def project_lonlat(lon: np.ndarray, lat: np.ndarray, lon0: float, lat0: float) -> tuple[np.ndarray, np.ndarray]:
    """Local equirectangular projection of degrees onto metres around (lon0, lat0)."""
    x = np.radians(lon - lon0) * EARTH_RADIUS_M * math.cos(math.radians(lat0))
    y = np.radians(lat - lat0) * EARTH_RADIUS_M
    return x, y


def load_trajectory_csv(path: str | Path, T: int, projection: str = "xy") -> np.ndarray:
    """Read ``vehicle_id,t,x_m,y_m`` (or ``vehicle_id,timestamp,lon,lat``) rows.

    Vehicle ids are re-indexed in sorted order. Missing slots are linearly
    interpolated; slots before the first / after the last sample hold the
    nearest known position. Returns ``(n_vehicles, T, 2)``.
    """
    rows: dict[str, list[tuple[float, float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if projection == "xy":
            cols = ("vehicle_id", "t", "x_m", "y_m")
        elif projection == "lonlat":
            cols = ("vehicle_id", "timestamp", "lon", "lat")
        else:
            raise ValueError(f"unknown projection {projection!r}")
        missing = [c for c in cols if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        for r in reader:
            rows.setdefault(r[cols[0]], []).append((float(r[cols[1]]), float(r[cols[2]]), float(r[cols[3]])))
    if not rows:
        raise ValueError(f"{path}: no trajectory rows")

    ids = sorted(rows, key=lambda k: (len(k), k))
    data = {k: np.array(sorted(v)) for k, v in rows.items()}
    if projection == "lonlat":
        allpts = np.concatenate(list(data.values()))
        lon0, lat0 = float(allpts[:, 1].min()), float(allpts[:, 2].min())
        t0 = float(allpts[:, 0].min())
        for k, arr in data.items():
            x, y = project_lonlat(arr[:, 1], arr[:, 2], lon0, lat0)
            data[k] = np.column_stack([arr[:, 0] - t0, x, y])

    slots = np.arange(T, dtype=float)
    out = np.empty((len(ids), T, 2))
    for i, k in enumerate(ids):
        arr = data[k]
        out[i, :, 0] = np.interp(slots, arr[:, 0], arr[:, 1])
        out[i, :, 1] = np.interp(slots, arr[:, 0], arr[:, 2])
    return out


# --- scenario ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Scenario:
    config: ScenarioConfig
    rsus: tuple[Rsu, ...]
    info_types: tuple[InformationType, ...]
    vehicles: tuple[Vehicle, ...]
    views: tuple[ViewRequirement, ...]
    positions: np.ndarray  # (S, T, 2)
    rsu_locations: np.ndarray  # (E, 2)

    @property
    def T(self) -> int:
        return self.config.time_slots

    @property
    def n_types(self) -> int:
        return len(self.info_types)

    def distances(self, t: int) -> np.ndarray:
        """(S, E) vehicle-to-RSU distances at slot ``t``."""
        _check_slot(self, t)
        p = self.positions[:, t, :]
        return np.hypot(p[:, None, 0] - self.rsu_locations[None, :, 0], p[:, None, 1] - self.rsu_locations[None, :, 1])

    def views_at(self, rsu_id: int, t: int) -> list[ViewRequirement]:
        return [v for v in self.views if v.active_at(rsu_id, t)]

    def max_views_per_rsu(self) -> int:
        return len(self.views)

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "vehicles": [
                {
                    "id": v.id,
                    "max_power": v.max_power,
                    "sensable": [asdict(s) for s in v.sensable],
                    "trajectory": v.trajectory.tolist(),
                }
                for v in self.vehicles
            ],
            "views": [
                {"id": v.id, "required": list(v.required), "rsu_schedule": v.rsu_schedule.tolist()} for v in self.views
            ],
        }

    def dump(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def _check_slot(scenario: Scenario, t: int) -> None:
    if not 0 <= t < scenario.T:
        raise IndexError(f"slot {t} outside [0, {scenario.T})")


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


def build_scenario(config: ScenarioConfig) -> Scenario:
    """Validate ``config`` and build the fully wired scenario it describes.

    All randomness derives from ``config.rng_seed``, so equal configs give
    identical scenarios.
    """
    config.validate()
    ss = np.random.SeedSequence(config.rng_seed)
    traj_ss, veh_ss, view_ss = ss.spawn(3)
    T = config.time_slots
    f = config.fleet
    m = len(config.info_types)

    if f.trajectory_csv is not None:
        traj = load_trajectory_csv(f.trajectory_csv, T, f.csv_projection)
        if traj.shape[0] < f.count:
            raise ConfigError([f"fleet.trajectory_csv: {traj.shape[0]} vehicles in file, fleet.count={f.count}"])
        traj = traj[: f.count]
    else:
        traj = generate_synthetic_trajectories(
            f.count, config.area_m / 1000.0, T, int(traj_ss.generate_state(1)[0]), f.speed_range, config.slot_length
        )

    rng = np.random.default_rng(veh_ss)
    vehicles = []
    lam_lo, lam_hi = f.lambda_range
    for s in range(f.count):
        mask = rng.random(m) < f.sensable_prob
        if not mask.any():
            mask[rng.integers(m)] = True
        costs = rng.uniform(*f.sensing_cost, size=m)
        sensable = tuple(
            SensableInfo(d, float(costs[d]), float(lam_lo), float(lam_hi)) for d in range(m) if mask[d]
        )
        vehicles.append(Vehicle(s, _readonly(traj[s]), sensable, float(f.max_power)))

    union = sorted(set().union(*(v.sensable_ids() for v in vehicles)))
    # separate streams keep schedules identical, and required sets nested, across view sizes
    req_rng, sched_rng = (np.random.default_rng(x) for x in view_ss.spawn(2))
    views = []
    n_rsu = len(config.rsus)
    vs = config.views
    lo_n = int(math.floor(vs.mean_required))
    frac = vs.mean_required - lo_n
    n_blocks = -(-T // vs.schedule_block)
    for i in range(vs.count):
        perm = req_rng.permutation(union)
        n_req = lo_n + int(req_rng.random() < frac)
        n_req = max(1, min(n_req, len(union)))
        required = tuple(sorted(int(x) for x in perm[:n_req]))
        block_rsu = sched_rng.integers(0, n_rsu, size=n_blocks)
        schedule = np.repeat(block_rsu, vs.schedule_block)[:T]
        views.append(ViewRequirement(i, required, _readonly(schedule.astype(np.int64))))

    for v in views:
        if not set(v.required) <= set(union):
            raise ConfigError([f"views[{v.id}].required: not sensable by any vehicle"])

    return Scenario(
        config=config,
        rsus=tuple(config.rsus),
        info_types=tuple(config.info_types),
        vehicles=tuple(vehicles),
        views=tuple(views),
        positions=_readonly(traj),
        rsu_locations=_readonly(np.array([r.location for r in config.rsus], dtype=float)),
    )


def vehicles_in_range(scenario: Scenario, rsu: Rsu | int, t: int) -> set[int]:
    """Ids of vehicles within radio range (distance <= range) of ``rsu`` at slot ``t``."""
    _check_slot(scenario, t)
    r = scenario.rsus[rsu] if isinstance(rsu, int) else rsu
    p = scenario.positions[:, t, :]
    dist = np.hypot(p[:, 0] - r.location[0], p[:, 1] - r.location[1])
    return {int(s) for s in np.flatnonzero(dist <= r.radio_range)}


def desk_config(**overrides: Any) -> ScenarioConfig:
    """Desk-scale scenario: 2 RSUs, 8 vehicles, 3 information types, 4 views."""
    area = 1000.0
    base = ScenarioConfig(
        time_slots=200,
        slot_length=1.0,
        area_m=area,
        rsus=grid_rsus(2, area, 400.0, 2e7),
        info_types=random_info_types(3, seed=7),
        fleet=FleetSpec(count=8),
        views=ViewSpec(count=4, mean_required=2.0, schedule_block=20),
        max_vehicles_per_rsu=8,
        rng_seed=0,
    )
    return replace(base, **overrides)


def full_config(**overrides: Any) -> ScenarioConfig:
    """Full-size layout: 9 RSUs over a 3 x 3 km area, 20 MHz per RSU, 100 mW vehicles."""
    area = 3000.0
    base = ScenarioConfig(
        time_slots=500,
        slot_length=1.0,
        area_m=area,
        rsus=grid_rsus(9, area, 500.0, 2e7),
        info_types=random_info_types(5, seed=7),
        fleet=FleetSpec(count=60),
        views=ViewSpec(count=18, mean_required=3.0, schedule_block=50),
        max_vehicles_per_rsu=12,
        # from `vcps-sim calibrate` on this layout; desk bounds saturate here
        normalization=NormalizationSpec(
            bounds={"theta": (0.0, 67.0), "psi": (0.0, 38.0), "xi": (0.0, 15.0), "phi": (0.0, 10.5), "omega": (0.0, 0.36)}
        ),
        rng_seed=0,
    )
    return replace(base, **overrides)
