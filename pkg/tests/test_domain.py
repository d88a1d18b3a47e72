import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vcps_sim.domain import (
    ConfigError,
    MetricWeights,
    Rsu,
    ScenarioConfig,
    build_scenario,
    desk_config,
    generate_synthetic_trajectories,
    grid_rsus,
    full_config,
    load_trajectory_csv,
    vehicles_in_range,
)


def csv_scenario(tmp_path, rows, rsu=Rsu(0, (0.0, 0.0), 500.0, 2e7), T=2):
    path = tmp_path / "traj.csv"
    lines = ["vehicle_id,t,x_m,y_m"] + [f"{v},{t},{x},{y}" for v, t, x, y in rows]
    path.write_text("\n".join(lines) + "\n")
    n = len({r[0] for r in rows})
    cfg = desk_config(
        time_slots=T,
        rsus=(rsu,),
        fleet=replace(desk_config().fleet, count=n, trajectory_csv=str(path), sensable_prob=1.0),
    )
    return build_scenario(cfg)


def test_default_weights_accepted():
    cfg = desk_config(weights=MetricWeights(0.6, 0.4, 0.2, 0.4, 0.4))
    assert cfg.problems() == []


def test_weights_must_sum_to_one():
    cfg = desk_config(weights=MetricWeights(0.5, 0.4, 0.2, 0.4, 0.4))
    with pytest.raises(ConfigError) as err:
        build_scenario(cfg)
    assert any(p.startswith("weights.w1+w2") for p in err.value.problems)


def test_problems_are_aggregated():
    cfg = desk_config(time_slots=0, weights=MetricWeights(0.5, 0.4, 0.2, 0.4, 0.5))
    probs = cfg.problems()
    assert {"time_slots", "weights.w1+w2", "weights.w3+w4+w5"} <= {p.split(":")[0] for p in probs}


def test_same_seed_same_dump():
    assert build_scenario(desk_config()).dump() == build_scenario(desk_config()).dump()


def test_different_seed_different_dump():
    assert build_scenario(desk_config()).dump() != build_scenario(desk_config(rng_seed=1)).dump()


def test_config_json_round_trip(tmp_path):
    cfg = full_config()
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ScenarioConfig.load(path) == cfg


def test_unknown_field_rejected():
    d = desk_config().to_dict()
    d["bogus"] = 1
    with pytest.raises(ConfigError, match="bogus"):
        ScenarioConfig.from_dict(d)


def test_missing_trajectory_file():
    cfg = desk_config(fleet=replace(desk_config().fleet, trajectory_csv="/nonexistent/t.csv"))
    assert any(p.startswith("fleet.trajectory_csv") for p in cfg.problems())


@pytest.mark.parametrize("dist,inside", [(0.0, True), (500.0, True), (501.0, False)])
def test_range_boundary(tmp_path, dist, inside):
    sc = csv_scenario(tmp_path, [(0, 0, dist, 0.0), (0, 1, dist, 0.0)])
    assert (0 in vehicles_in_range(sc, 0, 0)) is inside


def test_slot_out_of_range(tmp_path):
    sc = csv_scenario(tmp_path, [(0, 0, 0.0, 0.0)])
    with pytest.raises(IndexError):
        vehicles_in_range(sc, 0, 2)


def test_csv_interpolates_gaps(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("vehicle_id,t,x_m,y_m\n7,0,0,0\n7,4,40,8\n")
    traj = load_trajectory_csv(path, 6)
    assert traj.shape == (1, 6, 2)
    np.testing.assert_allclose(traj[0, :, 0], [0, 10, 20, 30, 40, 40])


def test_csv_lonlat_projection(tmp_path):
    path = tmp_path / "t.csv"
    # 0.001 deg of latitude is about 111.2 m
    path.write_text("vehicle_id,timestamp,lon,lat\na,100,104.0,30.0\na,101,104.0,30.001\n")
    traj = load_trajectory_csv(path, 2, "lonlat")
    assert traj[0, 1, 1] == pytest.approx(111.19, rel=1e-3)


def test_trajectory_single_slot():
    traj = generate_synthetic_trajectories(5, 1.0, 1, seed=0)
    assert traj.shape == (5, 1, 2)


def test_trajectories_differ_by_seed():
    a = generate_synthetic_trajectories(3, 1.0, 50, seed=0)
    b = generate_synthetic_trajectories(3, 1.0, 50, seed=1)
    assert not np.array_equal(a, b)


def test_trajectories_stay_in_area():
    traj = generate_synthetic_trajectories(10, 2.0, 300, seed=3)
    assert traj.min() >= 0 and traj.max() <= 2000.0


def test_grid_cells_all_visited():
    traj = generate_synthetic_trajectories(20, 3.0, 1000, seed=11)
    cells = np.floor(traj.reshape(-1, 2) / 1000.0).clip(0, 2).astype(int)
    visited = {tuple(c) for c in cells}
    assert len(visited) == 9


def test_grid_rsus_cover_square():
    rs = grid_rsus(9, 3000.0, 500.0, 2e7)
    xs = sorted({r.location[0] for r in rs})
    assert xs == [500.0, 1500.0, 2500.0]


def test_views_subset_of_sensable_union():
    sc = build_scenario(full_config(time_slots=20))
    union = set().union(*(v.sensable_ids() for v in sc.vehicles))
    for v in sc.views:
        assert set(v.required) <= union


def test_view_sets_nested_across_sizes():
    base = desk_config(info_types=full_config().info_types[:4])
    sets = [[set(v.required) for v in build_scenario(base.with_view_size(k)).views] for k in (2, 3, 4)]
    for small, big in zip(sets, sets[1:]):
        assert all(a <= b for a, b in zip(small, big))


@settings(max_examples=30, deadline=None)
@given(r1=st.floats(1.0, 800.0), extra=st.floats(0.0, 500.0), t=st.integers(0, 19))
def test_range_monotone(r1, extra, t):
    sc = _MONO
    small = replace(sc.rsus[0], radio_range=r1)
    big = replace(sc.rsus[0], radio_range=r1 + extra)
    assert vehicles_in_range(sc, small, t) <= vehicles_in_range(sc, big, t)


_MONO = build_scenario(desk_config(time_slots=20))


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_build_is_pure(seed):
    cfg = desk_config(time_slots=10, rng_seed=seed)
    assert build_scenario(cfg).dump() == build_scenario(cfg).dump()
