import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vcps_sim.domain import METRIC_NAMES, MetricWeights, NormalizationSpec
from vcps_sim.metrics import (
    DeliveryRecord,
    Normalizer,
    RawViewComponents,
    SensedItem,
    ViewScore,
    age_of_view,
    consistency,
    cost_of_view,
    objective,
    raw_components,
    redundancy,
    score_rows_csv,
    score_view,
    sensing_cost,
    timeliness,
    transmission_cost,
)

W = MetricWeights()


def rec(vehicle=0, info=0, a=10.0, q=0.5, g=0.2, u=9.0, power=0.1, cost=0.3):
    return DeliveryRecord(vehicle, info, 0, a, q, g, u, power, cost)


def test_timeliness_single():
    assert timeliness([rec()], [0]) == pytest.approx(1.7)


def test_timeliness_empty():
    assert timeliness([], [0, 1]) == 0.0


def test_timeliness_sums_vehicle_maxima():
    rs = [rec(vehicle=0), rec(vehicle=1), rec(vehicle=1, info=1, u=9.5)]
    assert timeliness(rs, [0, 1]) == pytest.approx(3.4)


def test_timeliness_ignores_unrequired():
    assert timeliness([rec(info=5, u=0.0)], [0]) == 0.0


@pytest.mark.parametrize("us,expect", [((9, 9, 9), 0), ((6, 9), 3), ((9,), 0)])
def test_consistency(us, expect):
    rs = [rec(vehicle=i, info=i, u=u) for i, u in enumerate(us)]
    assert consistency(rs, range(len(us))) == expect


def test_redundancy_cases():
    once = [rec(info=0), rec(info=1), rec(info=2)]
    assert redundancy(once, [0, 1, 2]) == 0
    triple = [rec(vehicle=v, info=0) for v in range(3)] + [rec(info=1), rec(info=2)]
    assert redundancy(triple, [0, 1, 2]) == 2
    # type 2 missing contributes zero
    assert redundancy([rec(info=0), rec(info=1)], [0, 1, 2]) == 0


def test_costs():
    sensed = [SensedItem(0, 0, 0.3), SensedItem(1, 1, 0.7), SensedItem(2, 9, 5.0)]
    assert sensing_cost(sensed, [0, 1]) == pytest.approx(1.0)
    assert transmission_cost([rec(power=0.1, g=1.5)], [0]) == pytest.approx(0.15)
    assert sensing_cost([], [0]) == 0.0
    assert transmission_cost([], [0]) == 0.0


def test_raw_components_missing():
    raw = raw_components([0, 1], [rec(info=3)], [])
    assert raw.missing


def spec_fixed():
    return NormalizationSpec(mode="fixed", bounds={m: (0.0, 10.0) for m in METRIC_NAMES})


def test_fixed_normalization_endpoints():
    n = Normalizer(spec_fixed(), 1)
    assert n.normalize(0.0, "theta", 0) == 0.0
    assert n.normalize(10.0, "theta", 0) == 1.0
    assert n.normalize(25.0, "theta", 0) == 1.0


def test_sliding_min_max_and_degenerate():
    n = Normalizer(NormalizationSpec(mode="sliding", window=3), 2)
    assert n.normalize(4.0, "psi", 0) == 0.5
    for v in (2.0, 6.0):
        n.observe(0, "psi", v)
        n.commit(0)
    assert n.normalize(2.0, "psi", 0) == 0.0
    assert n.normalize(6.0, "psi", 0) == 1.0
    n.observe(1, "psi", 3.0)
    n.commit(1)
    assert n.normalize(3.0, "psi", 1) == 0.5


def test_sliding_window_forgets():
    n = Normalizer(NormalizationSpec(mode="sliding", window=2), 1)
    for v in (100.0, 1.0, 3.0):
        n.observe(0, "xi", v)
        n.commit(0)
    assert n.bounds("xi", 0) == (1.0, 3.0)


def test_aov_cov_hand_values():
    assert age_of_view(0.5, 0.5, W) == pytest.approx(0.5)
    assert cost_of_view(1, 1, 1, W) == pytest.approx(1.0)
    assert age_of_view(0.2, 0.5, W) == pytest.approx(0.32)


def test_missing_view_rule():
    n = Normalizer(spec_fixed(), 1)
    s = score_view(RawViewComponents(0, 0, 0, 0, 0), n, 0, W)
    assert (s.aov, s.cov) == (1.0, 0.0)


def test_objective_cases():
    assert objective([]) == 0.0
    assert objective([ViewScore(0.5, 0.5)] * 3) == pytest.approx(1.0)
    assert objective([ViewScore(0.0, 0.0)]) == pytest.approx(2.0)


finite = st.floats(0, 50, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(theta=finite, psi=finite, xi=st.integers(0, 20), phi=finite, omega=finite)
def test_scores_in_unit_interval(theta, psi, xi, phi, omega):
    n = Normalizer(spec_fixed(), 1)
    s = score_view(RawViewComponents(theta, psi, xi, phi, omega, frozenset({(0, 0)})), n, 0, W)
    assert 0.0 <= s.aov <= 1.0 and 0.0 <= s.cov <= 1.0
    assert 0.0 <= objective([s]) <= 2.0


@settings(max_examples=200, deadline=None)
@given(vals=st.lists(finite, min_size=5, max_size=5), bump=finite, which=st.sampled_from(METRIC_NAMES))
def test_scores_monotone_in_components(vals, bump, which):
    n = Normalizer(spec_fixed(), 1)
    base = dict(zip(METRIC_NAMES, vals))
    up = dict(base)
    up[which] += bump
    r0 = RawViewComponents(**base, received=frozenset({(0, 0)}))
    r1 = RawViewComponents(**up, received=frozenset({(0, 0)}))
    s0, s1 = score_view(r0, n, 0, W), score_view(r1, n, 0, W)
    assert s1.aov >= s0.aov - 1e-15
    assert s1.cov >= s0.cov - 1e-15


@settings(max_examples=200, deadline=None)
@given(counts=st.lists(st.integers(1, 4), min_size=1, max_size=4), drop=st.integers(0, 3))
def test_removing_duplicate_never_raises_redundancy(counts, drop):
    rs = [rec(vehicle=v, info=d) for d, c in enumerate(counts) for v in range(c)]
    k = drop % len(rs)
    fewer = rs[:k] + rs[k + 1 :]
    assert redundancy(fewer, range(len(counts))) <= redundancy(rs, range(len(counts)))


def test_score_csv_header():
    n = Normalizer(spec_fixed(), 1)
    s = score_view(raw_components([0], [rec()], []), n, 0, W)
    text = score_rows_csv([(3, 0, 1, s)])
    lines = text.splitlines()
    assert lines[0] == "t,rsu_id,view_id,theta,psi,xi,phi,omega,aov,cov"
    assert lines[1].startswith("3,0,1,")
    assert math.isclose(float(lines[1].split(",")[3]), 1.7)
