from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vcps_sim.domain import Rsu, SensableInfo, Vehicle, build_scenario, desk_config, random_info_types
from vcps_sim.env import (
    RATE_RESCALE,
    VcpsEnv,
    _enforce_stability,
    calibrate_bounds,
    constraint_violations,
    episode_return,
    random_policy,
    rollout,
)


def fixed_scenario(tmp_path, xs, T=3, n_types=3):
    """One RSU at the origin with 20 MHz and vehicles parked at the given x offsets."""
    path = tmp_path / "traj.csv"
    lines = ["vehicle_id,t,x_m,y_m"] + [f"{v},{t},{x},0" for v, x in enumerate(xs) for t in range(T)]
    path.write_text("\n".join(lines) + "\n")
    cfg = desk_config(
        time_slots=T,
        rsus=(Rsu(0, (0.0, 0.0), 400.0, 2e7),),
        info_types=random_info_types(n_types, seed=7),
        fleet=replace(desk_config().fleet, count=len(xs), trajectory_csv=str(path), sensable_prob=1.0),
        views=replace(desk_config().views, count=2, schedule_block=1),
    )
    return build_scenario(cfg)


@pytest.fixture(scope="module")
def desk_env():
    return VcpsEnv(build_scenario(desk_config(time_slots=40)))


def test_reset_deterministic_and_shaped(desk_env):
    a = desk_env.reset(5)
    b = desk_env.reset(5)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    E, K, M, V = desk_env.E, desk_env.K, desk_env.M, desk_env.V
    assert len(a) == E
    assert a[0].shape == (E + 1 + K + K * M + M + V * M,)


def test_cache_ages_start_at_sentinel(desk_env):
    obs = desk_env.reset(0)
    e = desk_env
    i = 1 + e.E + e.K + e.K * e.M
    for o in obs:
        assert np.all(o[i : i + e.M] == 1.0)


def test_equal_bandwidth_split(tmp_path):
    env = VcpsEnv(fixed_scenario(tmp_path, [10, 20, 30, 40]))
    env.reset(0)
    raw = np.full(env.act_dim, 0.5)
    dec = env.decode_action(raw, 0)
    assert [vd.bandwidth for vd in dec.vehicles] == pytest.approx([5e6] * 4)


def test_priority_tie_broken_by_id(tmp_path):
    env = VcpsEnv(fixed_scenario(tmp_path, [10]))
    env.reset(0)
    raw = np.zeros(env.act_dim)
    M = env.M
    raw[:M] = 1.0  # sense every type
    raw[2 * M : 3 * M] = [0.9, 0.9, 0.1]
    dec = env.decode_action(raw, 0)
    # equal scores on types 0 and 1: the lower id ranks higher
    assert dec.vehicles[0].priorities == {0: 3, 1: 2, 2: 1}


def test_rescale_to_stability():
    info = random_info_types(2, seed=0)
    info = tuple(replace(d, mean_service=0.25) for d in info)
    veh = Vehicle(0, np.zeros((1, 2)), (SensableInfo(0, 0.1, 0.1, 5), SensableInfo(1, 0.1, 0.1, 5)), 0.1)
    rates = {0: 2.0, 1: 3.0}  # workload 1.25
    sensed, out = _enforce_stability([0, 1], rates, {0: 2, 1: 1}, veh, info)
    assert sensed == [0, 1]
    assert out == pytest.approx({0: 2.0 * RATE_RESCALE / 1.25, 1: 3.0 * RATE_RESCALE / 1.25})


def test_rescale_drops_lowest_priority_when_minimums_bind():
    info = tuple(replace(d, mean_service=0.6) for d in random_info_types(2, seed=0))
    veh = Vehicle(0, np.zeros((1, 2)), (SensableInfo(0, 0.1, 1.0, 2), SensableInfo(1, 0.1, 1.0, 2)), 0.1)
    sensed, out = _enforce_stability([0, 1], {0: 1.0, 1: 1.0}, {0: 1, 1: 2}, veh, info)
    assert sensed == [1]
    assert out[1] == pytest.approx(1.0)


def test_bandwidth_conserved_and_constraints(desk_env):
    rng = np.random.default_rng(1)
    desk_env.reset(1)
    for t in range(desk_env.T):
        acts = [rng.random(desk_env.act_dim) for _ in range(desk_env.E)]
        _, r, done, info = desk_env.step(acts)
        for dec in info["decisions"]:
            assert constraint_violations(desk_env, dec) == []
            if dec.vehicles:
                b_e = desk_env.scenario.rsus[dec.rsu].bandwidth
                assert sum(vd.bandwidth for vd in dec.vehicles) == pytest.approx(b_e, rel=1e-12)
        assert np.all((r >= 0) & (r <= 2))
    assert done


def test_reward_is_mean_view_quality(desk_env):
    obs = desk_env.reset(2)
    pol = random_policy(desk_env, 3)
    for _ in range(15):
        obs, r, _, info = desk_env.step(pol(obs, desk_env.t))
        for e, sc in enumerate(info["scores"]):
            want = np.mean([2 - s.aov - s.cov for _, s in sc]) if sc else 0.0
            assert r[e] == pytest.approx(want)


def test_empty_view_set_rewards_zero(tmp_path):
    sc = fixed_scenario(tmp_path, [10], T=4)
    # move every view off RSU 0
    views = tuple(replace(v, rsu_schedule=np.full(sc.T, -1)) for v in sc.views)
    env = VcpsEnv(replace(sc, views=views))
    env.reset(0)
    _, r, _, info = env.step([np.full(env.act_dim, 0.7)])
    assert r[0] == 0.0 and info["scores"][0] == []


def test_same_actions_same_trajectory(desk_env):
    def run():
        rng = np.random.default_rng(9)
        obs = desk_env.reset(4)
        seq = [np.concatenate(obs)]
        rs = []
        done = False
        while not done:
            obs, r, done, _ = desk_env.step([rng.random(desk_env.act_dim) for _ in range(desk_env.E)])
            seq.append(np.concatenate(obs))
            rs.append(r)
        return np.array(seq), np.array(rs)

    (o1, r1), (o2, r2) = run(), run()
    assert np.array_equal(o1, o2) and np.array_equal(r1, r2)


def test_step_after_done_raises(tmp_path):
    env = VcpsEnv(fixed_scenario(tmp_path, [10], T=1))
    env.reset(0)
    env.step([np.zeros(env.act_dim)])
    with pytest.raises(RuntimeError):
        env.step([np.zeros(env.act_dim)])


def test_wrong_action_length(desk_env):
    desk_env.reset(0)
    with pytest.raises(ValueError):
        desk_env.decode_action(np.zeros(3), 0)


def test_episode_return_cases():
    assert episode_return(np.ones((500, 3))) == pytest.approx(500.0)
    assert episode_return(np.array([[0.5, 1.5]])) == pytest.approx(1.0)
    assert episode_return(np.zeros((0, 2))) == 0.0


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.0, 1.0))
def test_random_actions_never_violate(seed, scale):
    env = _PROP_ENV
    rng = np.random.default_rng(seed)
    env.reset(seed)
    for _ in range(env.T):
        acts = [scale * rng.random(env.act_dim) for _ in range(env.E)]
        _, r, _, info = env.step(acts)
        for dec in info["decisions"]:
            assert constraint_violations(env, dec) == []
        for sc in info["scores"]:
            for _, s in sc:
                assert 0 <= s.aov <= 1 and 0 <= s.cov <= 1
        assert np.all((r >= 0) & (r <= 2))


_PROP_ENV = VcpsEnv(build_scenario(desk_config(time_slots=10)))


def test_rollout_and_calibration():
    sc = build_scenario(desk_config(time_slots=30))
    env = VcpsEnv(sc)
    cr, rewards, rows = rollout(env, random_policy(env, 0), seed=0)
    assert rewards.shape == (30, env.E)
    assert cr == pytest.approx(rewards.mean(axis=1).sum())
    b = calibrate_bounds(sc, episodes=2)
    assert set(b) == {"theta", "psi", "xi", "phi", "omega"}
    assert all(lo == 0.0 and hi > 0 for lo, hi in b.values())


def test_trace_rows(tmp_path):
    env = VcpsEnv(fixed_scenario(tmp_path, [10, 50], T=5), trace=True)
    env.reset(0)
    for _ in range(5):
        env.step([np.full(env.act_dim, 0.9)])
    text = env.trace_csv()
    assert text.splitlines()[0] == "t,rsu,vehicle,info,event,arrival,queuing,update"
    assert ",deliver," in text
