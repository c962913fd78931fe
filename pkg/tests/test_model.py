"""Domain types: indexing, dual-vector round trips, allocation totals,
feasibility checking and instance validation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_instance
from crnalloc.model import (Allocation, DualState, Mode, NetworkInstance,
                            ScenarioConfig, SubcarrierCandidate,
                            candidate_rates_from_powers, feasibility_check,
                            pu_node, shannon_rate, su_node, validate_instance)


def test_mode_ordinals_are_tie_break_order():
    assert [m.value for m in Mode] == [0, 1, 2, 3, 4]
    assert list(Mode) == [Mode.IDLE, Mode.DIRECT_PU, Mode.DIRECT_SU,
                          Mode.ONEWAY_DF, Mode.TWOWAY_DF]


def test_node_indexing():
    assert pu_node(0, 0) == 0
    assert pu_node(0, 1) == 1
    assert pu_node(2, 1) == 5
    assert su_node(2, 0) == 4
    assert su_node(2, 3) == 7


def test_shannon_rate_values():
    assert shannon_rate(0.0) == 0.0
    assert shannon_rate(1.0) == pytest.approx(1.0)
    assert shannon_rate(3.0) == pytest.approx(2.0)


@given(kp=st.integers(1, 4), ks=st.integers(1, 6))
@settings(max_examples=30, deadline=None)
def test_dual_state_vector_roundtrip(kp, ks):
    rng = np.random.default_rng(kp * 100 + ks)
    x = rng.uniform(0, 5, size=4 * kp + ks)
    d = DualState.from_vector(x, kp, ks)
    assert d.dim == 4 * kp + ks
    np.testing.assert_array_equal(d.as_vector(), x)
    assert d.is_nonnegative()
    assert DualState.zeros(kp, ks).as_vector().sum() == 0.0


def test_dual_state_wrong_dimension_rejected():
    with pytest.raises(ValueError):
        DualState.from_vector(np.zeros(5), 1, 2)  # needs 6


def test_instance_dual_dim_formula():
    instance, _ = make_instance(num_pu_pairs=2, num_sus=4)
    assert instance.dual_dim == 4 * 2 + 4
    assert instance.num_nodes == 8


def test_instance_arrays_frozen_and_copied():
    g = np.ones((1, 4))
    instance = NetworkInstance(
        direct_gain=g, cross_gain_1=np.ones((1, 2, 4)),
        cross_gain_2=np.ones((1, 2, 4)), su_bs_gain=np.ones((2, 4)),
        peak_power=np.ones(4), rate_req=np.zeros(2))
    g[0, 0] = 99.0  # caller's buffer must not be shared
    assert instance.direct_gain[0, 0] == 1.0
    with pytest.raises(ValueError):
        instance.direct_gain[0, 0] = 2.0


def test_validate_wellformed_instance_is_clean():
    instance, _ = make_instance(num_pu_pairs=2, num_sus=4)
    assert validate_instance(instance) == []


def test_validate_negative_gain_named():
    instance, _ = make_instance()
    bad = NetworkInstance(
        direct_gain=-instance.direct_gain, cross_gain_1=instance.cross_gain_1,
        cross_gain_2=instance.cross_gain_2, su_bs_gain=instance.su_bs_gain,
        peak_power=instance.peak_power, rate_req=instance.rate_req)
    violations = validate_instance(bad)
    assert len(violations) == 1
    assert "direct_gain" in violations[0]


def test_validate_dual_dimension_mismatch():
    instance, _ = make_instance(num_pu_pairs=1, num_sus=2)
    wrong = DualState.zeros(2, 2)
    violations = validate_instance(instance, wrong)
    assert any("dimension" in v for v in violations)


def test_allocation_totals_are_exact_sums():
    rng = np.random.default_rng(3)
    instance, _ = make_instance(num_subcarriers=6, num_pu_pairs=1, num_sus=2)
    cands = []
    for n in range(6):
        p = {0: float(rng.uniform()), 2: float(rng.uniform())}
        r = {1: float(rng.uniform()), 2: float(rng.uniform())}
        cands.append(SubcarrierCandidate(mode=Mode.DIRECT_PU, pair=0,
                                         direction=0, powers=p, rates=r))
    alloc = Allocation.from_candidates(instance, cands)
    assert alloc.node_power[0] == pytest.approx(
        sum(c.powers[0] for c in cands))
    assert alloc.pu_rate[1] == pytest.approx(sum(c.rates[1] for c in cands))
    assert alloc.su_rate[0] == pytest.approx(sum(c.rates[2] for c in cands))
    assert alloc.weighted_su_sum_rate([2.0, 1.0]) == pytest.approx(
        2.0 * alloc.su_rate[0] + alloc.su_rate[1])


def _all_idle(instance):
    return Allocation.from_candidates(
        instance, [SubcarrierCandidate(mode=Mode.IDLE)
                   for _ in range(instance.num_subcarriers)])


def test_feasibility_all_idle_zero_requirement():
    instance, _ = make_instance(pu_rate_requirement=0.0)
    report = feasibility_check(instance, _all_idle(instance))
    assert report.feasible
    assert report.max_rate_shortfall == 0.0


def test_feasibility_all_idle_positive_requirement():
    instance, _ = make_instance(pu_rate_requirement=5.0)
    report = feasibility_check(instance, _all_idle(instance))
    assert not report.feasible
    assert report.max_rate_shortfall == pytest.approx(1.0)  # 100% short
    assert len(report.violations) == instance.num_pu_nodes


def test_feasibility_dimension_mismatch_rejected():
    instance, _ = make_instance(num_subcarriers=4)
    other, _ = make_instance(num_subcarriers=5)
    with pytest.raises(ValueError):
        feasibility_check(instance, _all_idle(other))


def test_candidate_rates_recompute_direct_pu():
    instance, _ = make_instance()
    cand = SubcarrierCandidate(mode=Mode.DIRECT_PU, pair=0, direction=0,
                               powers={0: 2.0}, rates={})
    rates = candidate_rates_from_powers(instance, 1, cand)
    g = instance.direct_gain[0, 1] / instance.noise_var
    assert rates == {1: pytest.approx(shannon_rate(2.0 * g))}


def test_candidate_rates_twoway_clipped_into_region():
    instance, _ = make_instance()
    cand = SubcarrierCandidate(mode=Mode.TWOWAY_DF, pair=0, su=0,
                               powers={0: 1.0, 1: 1.0, 2: 1.0},
                               rates={0: 50.0, 1: 50.0})  # far outside
    rates = candidate_rates_from_powers(instance, 0, cand)
    s2 = instance.noise_var
    g1 = instance.cross_gain_1[0, 0, 0] / s2
    g2 = instance.cross_gain_2[0, 0, 0] / s2
    b12 = 0.5 * shannon_rate(g1 + g2)
    assert rates[0] + rates[1] <= b12 + 1e-9


def test_scenario_config_rejects_bad_values():
    with pytest.raises(ValueError):
        ScenarioConfig(num_subcarriers=0)
    with pytest.raises(ValueError):
        ScenarioConfig(noise_variance=0.0)
    with pytest.raises(ValueError):
        ScenarioConfig(num_sus=2, su_weights=(1.0,))
