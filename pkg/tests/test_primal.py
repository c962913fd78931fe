"""Primal recovery: frozen-assignment bookkeeping, power-cap scaling,
rate repair and the duality sandwich."""

import numpy as np
import pytest

from conftest import make_instance
from crnalloc.dual import SolverOptions, full_mask, solve_dual
from crnalloc.model import (Allocation, Mode, SubcarrierCandidate,
                            feasibility_check)
from crnalloc.primal import (candidate_row, frozen_mask, rate_upper_bounds,
                             recover_primal, repair_feasibility, scale_to_caps)


def _solved(instance, **opt_kw):
    opts = SolverOptions(**opt_kw)
    result = solve_dual(instance, opts=opts)
    return recover_primal(instance, result, opts=opts)


def test_candidate_row_roundtrip():
    instance, _ = make_instance(num_pu_pairs=2, num_sus=3)
    kp, ks = 2, 3
    cands = [
        SubcarrierCandidate(mode=Mode.IDLE),
        SubcarrierCandidate(mode=Mode.DIRECT_PU, pair=1, direction=1),
        SubcarrierCandidate(mode=Mode.DIRECT_SU, su=2),
        SubcarrierCandidate(mode=Mode.ONEWAY_DF, pair=0, direction=1, su=1),
        SubcarrierCandidate(mode=Mode.TWOWAY_DF, pair=1, su=0),
    ]
    rows = [candidate_row(kp, ks, c) for c in cands]
    assert len(set(rows)) == len(rows)
    mask = frozen_mask(instance, cands[:instance.num_subcarriers])
    for n, c in enumerate(cands[:instance.num_subcarriers]):
        assert mask[candidate_row(kp, ks, c), n]
        assert mask[0, n]  # idling always stays allowed
        assert mask[:, n].sum() <= 2


def test_scale_to_caps_enforces_budgets():
    instance, _ = make_instance(seed=1, num_subcarriers=4,
                                peak_power_per_user=2.0)
    # deliberately over-budget: every subcarrier spends 1.0 on node 0
    cands = [SubcarrierCandidate(mode=Mode.DIRECT_PU, pair=0, direction=0,
                                 powers={0: 1.0}, rates={1: 1.0})
             for _ in range(4)]
    scaled = scale_to_caps(instance, cands)
    alloc = Allocation.from_candidates(instance, scaled)
    assert np.all(alloc.node_power <= instance.peak_power + 1e-12)
    assert alloc.node_power[0] == pytest.approx(2.0)
    # rates were recomputed from the scaled powers
    from crnalloc.model import shannon_rate
    for n, c in enumerate(scaled):
        g = instance.direct_gain[0, n] / instance.noise_var
        assert c.rates[1] == pytest.approx(shannon_rate(0.5 * g))


def test_rate_upper_bounds_dominate_achieved(midsize_instance):
    instance, _ = midsize_instance
    allocation, report = _solved(instance)
    bounds = rate_upper_bounds(instance, allocation.candidates)
    assert np.all(bounds + 1e-9 >= allocation.pu_rate)


def test_recover_primal_feasible_and_sandwiched(midsize_instance):
    instance, _ = midsize_instance
    allocation, report = _solved(instance)
    assert report.feasible
    check = feasibility_check(instance, allocation, eps_power=1e-6,
                              eps_rate=1e-6)
    assert check.feasible
    assert np.all(allocation.node_power <= instance.peak_power + 1e-9)
    assert np.all(allocation.pu_rate >= instance.rate_req * (1 - 1e-6))
    primal = allocation.weighted_su_sum_rate()
    assert report.primal_sum_rate == pytest.approx(primal)
    assert primal <= report.dual_bound + 1e-6 * (1 + abs(report.dual_bound))


def test_recover_primal_zero_requirement_matches_dual(midsize_instance):
    instance, _ = midsize_instance
    relaxed = type(instance)(
        direct_gain=instance.direct_gain, cross_gain_1=instance.cross_gain_1,
        cross_gain_2=instance.cross_gain_2, su_bs_gain=instance.su_bs_gain,
        peak_power=instance.peak_power,
        rate_req=np.zeros_like(instance.rate_req),
        noise_var=instance.noise_var)
    allocation, report = _solved(relaxed)
    assert report.feasible
    # no PU constraints: recovery should essentially close the gap
    assert report.primal_sum_rate >= 0.98 * report.dual_bound


def test_recover_primal_flags_impossible_requirement():
    instance, _ = make_instance(seed=2, num_subcarriers=4,
                                peak_power_per_user=1.0,
                                pu_rate_requirement=500.0,
                                noise_variance=100.0)
    allocation, report = _solved(instance)
    assert not report.feasible
    assert report.max_rate_shortfall > 0


def test_repair_feasibility_keeps_feasible_allocation(midsize_instance):
    instance, _ = midsize_instance
    allocation, report = _solved(instance)
    repaired = repair_feasibility(instance, allocation)
    assert feasibility_check(instance, repaired).feasible
    assert (repaired.weighted_su_sum_rate()
            >= allocation.weighted_su_sum_rate() - 1e-9)


def test_repair_feasibility_scales_small_overshoot(midsize_instance):
    instance, _ = midsize_instance
    allocation, _ = _solved(instance)
    # inflate one SU's powers by 0.4% to force the scaling path
    su_node_idx = instance.num_pu_nodes
    bumped = []
    for cand in allocation.candidates:
        if su_node_idx in cand.powers:
            powers = dict(cand.powers)
            powers[su_node_idx] *= 1.004
            cand = SubcarrierCandidate(
                mode=cand.mode, pair=cand.pair, direction=cand.direction,
                su=cand.su, powers=powers, rates=cand.rates, t_su=cand.t_su,
                dual_value=cand.dual_value)
        bumped.append(cand)
    bad = Allocation.from_candidates(instance, bumped)
    repaired = repair_feasibility(instance, bad)
    assert np.all(repaired.node_power <= instance.peak_power + 1e-9)
