"""Dual decomposition: candidate-row enumeration, dual evaluation,
subgradients, the ellipsoid loop and weak duality."""

import numpy as np
import pytest

from conftest import make_instance
from crnalloc.dual import (SolverOptions, best_candidate_on_subcarrier,
                           decode_candidates, ellipsoid_cut, evaluate_dual,
                           full_mask, num_candidate_rows, row_direct_pu,
                           row_direct_su, row_oneway, row_twoway, solve_dual)
from crnalloc.model import DualState, Mode, NetworkInstance


def _zero_gain_instance(kp=1, ks=2, n=4, pmax=10.0, r=1.0):
    return NetworkInstance(
        direct_gain=np.zeros((kp, n)), cross_gain_1=np.zeros((kp, ks, n)),
        cross_gain_2=np.zeros((kp, ks, n)), su_bs_gain=np.zeros((ks, n)),
        peak_power=np.full(2 * kp + ks, pmax), rate_req=np.full(2 * kp, r))


def test_candidate_count_formula():
    for kp, ks in [(1, 1), (1, 2), (2, 4), (3, 5)]:
        assert num_candidate_rows(kp, ks) == 1 + 2 * kp + ks + 3 * kp * ks


def test_row_indexers_form_bijection():
    kp, ks = 2, 3
    rows = [0]
    rows += [row_direct_pu(kp, ks, k, d) for k in range(kp) for d in range(2)]
    rows += [row_direct_su(kp, ks, s) for s in range(ks)]
    rows += [row_oneway(kp, ks, k, d, s)
             for k in range(kp) for d in range(2) for s in range(ks)]
    rows += [row_twoway(kp, ks, k, s) for k in range(kp) for s in range(ks)]
    assert sorted(rows) == list(range(num_candidate_rows(kp, ks)))


def test_evaluate_dual_all_gains_zero():
    instance = _zero_gain_instance()
    dual = DualState(lam_pu=np.array([0.5, 0.7]), lam_su=np.array([0.2, 0.3]),
                     beta=np.array([1.0, 2.0]))
    ev = evaluate_dual(instance, dual)
    expected = 10.0 * (0.5 + 0.7 + 0.2 + 0.3) - 1.0 * (1.0 + 2.0)
    assert ev.value == pytest.approx(expected)
    np.testing.assert_allclose(ev.subgradient[:4], 10.0)  # P_max - 0
    np.testing.assert_allclose(ev.subgradient[4:], -1.0)  # 0 - r
    assert np.all(ev.winner_row == 0)


def test_evaluate_dual_value_consistent_with_decoded_candidates():
    instance, _ = make_instance(seed=5, num_subcarriers=6, noise_variance=10.0)
    dual = DualState(lam_pu=np.array([0.3, 0.4]), lam_su=np.array([0.2, 0.25]),
                     beta=np.array([1.5, 1.2]))
    ev = evaluate_dual(instance, dual)
    cands = decode_candidates(instance, dual, ev)
    kp = instance.num_pairs
    const = (float(dual.lam_pu @ instance.peak_power[:2 * kp])
             + float(dual.lam_su @ instance.peak_power[2 * kp:])
             - float(dual.beta @ instance.rate_req))
    total = sum(c.dual_value for c in cands) + const
    assert ev.value == pytest.approx(total, rel=1e-9)
    assert ev.value <= ev.upper_bound + 1e-9


def test_best_candidate_matches_full_evaluation():
    instance, _ = make_instance(seed=8, num_subcarriers=4, noise_variance=10.0)
    dual = DualState(lam_pu=np.array([0.3, 0.4]), lam_su=np.array([0.2, 0.25]),
                     beta=np.array([1.5, 1.2]))
    ev = evaluate_dual(instance, dual)
    cands = decode_candidates(instance, dual, ev)
    for n in range(instance.num_subcarriers):
        single = best_candidate_on_subcarrier(n, instance, dual)
        assert single.mode is cands[n].mode
        assert single.dual_value == pytest.approx(cands[n].dual_value, abs=1e-9)


def test_mask_restricts_modes():
    instance, _ = make_instance(seed=2, num_subcarriers=8, noise_variance=10.0)
    mask = np.zeros_like(full_mask(instance))
    mask[:1 + 2 * instance.num_pairs + instance.num_sus, :] = True
    dual = DualState(lam_pu=np.array([0.1, 0.1]), lam_su=np.array([0.05, 0.05]),
                     beta=np.array([2.0, 2.0]))
    ev = evaluate_dual(instance, dual, mask=mask)
    cands = decode_candidates(instance, dual, ev)
    assert all(c.mode in (Mode.IDLE, Mode.DIRECT_PU, Mode.DIRECT_SU)
               for c in cands)
    ev_full = evaluate_dual(instance, dual)
    assert ev_full.value >= ev.value - 1e-9  # larger candidate set dominates


def test_subgradient_inequality_small_sample():
    instance, _ = make_instance(seed=4, num_subcarriers=6, noise_variance=10.0)
    rng = np.random.default_rng(0)
    for _ in range(10):
        a = rng.uniform(0.01, 3.0, instance.dual_dim)
        b = rng.uniform(0.01, 3.0, instance.dual_dim)
        da = DualState.from_vector(a, 1, 2)
        db = DualState.from_vector(b, 1, 2)
        eva = evaluate_dual(instance, da)
        evb = evaluate_dual(instance, db)
        slack = evb.value - (eva.value + eva.subgradient @ (b - a))
        assert slack >= -1e-8


def test_ellipsoid_cut_contracts_volume():
    rng = np.random.default_rng(1)
    dim = 6
    shape = np.eye(dim) * 4.0
    center = np.zeros(dim)
    g = rng.standard_normal(dim)
    new_center, new_shape, norm = ellipsoid_cut(center, shape, g)
    assert norm > 0
    ratio = np.sqrt(np.linalg.det(new_shape) / np.linalg.det(shape))
    assert ratio < np.exp(-1.0 / (2.0 * (dim + 1))) + 1e-12
    # symmetric positive definite is preserved
    np.testing.assert_allclose(new_shape, new_shape.T)
    assert np.all(np.linalg.eigvalsh(new_shape) > 0)


def test_solve_dual_trivial_problem():
    instance = _zero_gain_instance(r=0.0)
    result = solve_dual(instance, opts=SolverOptions(max_iters=2000))
    assert result.dual_value < 1e-3
    assert result.dual_value >= -1e-9


def test_solve_dual_trace_best_nonincreasing():
    instance, _ = make_instance(seed=6, num_subcarriers=4, noise_variance=10.0)
    opts = SolverOptions(collect_trace=True, max_iters=300)
    result = solve_dual(instance, opts=opts)
    best = [row[2] for row in result.trace]
    assert all(b2 <= b1 + 1e-12 for b1, b2 in zip(best, best[1:]))
    assert result.iterations <= 300


def test_solve_dual_value_matches_reevaluation():
    instance, _ = make_instance(seed=3, num_subcarriers=6, noise_variance=10.0)
    result = solve_dual(instance)
    ev = evaluate_dual(instance, result.dual_state)
    assert result.dual_value == pytest.approx(ev.value, rel=1e-9)
    assert result.dual_value <= result.upper_bound + 1e-9


def test_weak_duality_against_recovered_primal():
    from crnalloc.baselines import solve_proposed
    instance, _ = make_instance(seed=12, num_subcarriers=8,
                                peak_power_per_user=80.0,
                                pu_rate_requirement=1.0, noise_variance=10.0)
    allocation, report = solve_proposed(instance)
    if report.feasible:
        assert (allocation.weighted_su_sum_rate()
                <= report.dual_bound + 1e-6 * (1 + abs(report.dual_bound)))
