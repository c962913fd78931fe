"""End-to-end acceptance suite.

One test per criterion, run in numeric order; each prints a single
``[PASS]``/``[FAIL]`` line with its measured quantities (``pytest -v``
additionally gives one verdict line per criterion).  The Monte-Carlo
sweeps behind criteria 6-8 are shared through session fixtures.
"""

import time

import numpy as np
import pytest
import scipy.stats

from conftest import make_instance, random_mode_inputs
from crnalloc.dual import evaluate_dual, num_candidate_rows, solve_dual
from crnalloc.harness import (ExperimentConfig, _run_one, config_to_dict,
                              run_experiment)
from crnalloc.model import DualState, Mode, ScenarioConfig
from crnalloc.oracle import (GridSpec, _twoway_region_value, _val_direct_pu,
                             _val_direct_su, _val_oneway,
                             oracle_small_instance, oracle_subproblem,
                             oracle_time_sweep)
from crnalloc.persub import (solve_direct_pu, solve_direct_su,
                             solve_oneway_df, solve_twoway, solve_twoway_mac)


def _verdict(num: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}"
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------
# shared Monte-Carlo sweeps (criteria 6, 7, 8)

def _sweep(sweep_var, sweep_values):
    cfg = ExperimentConfig(sweep_var=sweep_var, sweep_values=sweep_values,
                           realizations=100, record_timing=False)
    config_dict = config_to_dict(cfg)
    t0 = time.time()
    records = {v: [_run_one(config_dict, v, i)
                   for i in range(cfg.realizations)]
               for v in sweep_values}
    return records, time.time() - t0


@pytest.fixture(scope="session")
def snr_sweep():
    return _sweep("snr_db", (0, 2, 4, 6, 8, 10, 12, 14))


@pytest.fixture(scope="session")
def rate_sweep():
    return _sweep("rate_req", (1, 2, 3, 4, 5, 6, 7, 8, 9))


def _outage_stats(records, scheme):
    """Mean/std of the per-realization sum-rate with outages counted as
    zero (an infeasible realization delivers no admissible secondary
    service), plus the feasible count."""
    rates = [r[scheme]["sum_rate"] if r[scheme]["feasible"] else 0.0
             for r in records]
    feas = sum(1 for r in records if r[scheme]["feasible"])
    return float(np.mean(rates)), float(np.std(rates)), feas


# ---------------------------------------------------------------------------
# criterion 1: closed-form per-subcarrier solvers vs brute-force oracle

def _two_step_slack(value_fn, powers, value, factor):
    """Objective drop when the oracle argmax moves by two grid steps."""
    shifts = []
    for f in (factor ** 2, factor ** -2):
        shifted = [p * f if p > 0 else 0.0 for p in powers]
        shifts.append(value - float(value_fn(*shifted)))
    return max(0.0, *shifts)


def _quantization_slack(value_fn, powers, attained, grid, factor):
    """Loss from snapping a continuous optimizer onto the power grid:
    attained value minus the best grid value within two steps per axis."""
    import math
    axes = []
    for p in powers:
        if p <= grid.lower / math.sqrt(factor):
            axes.append(np.array([0.0, grid.lower]))
            continue
        k = round(math.log(p / grid.lower, factor))
        axes.append(grid.lower * factor ** (k + np.arange(-2.0, 3.0)))
    mesh = np.meshgrid(*axes, indexing="ij", sparse=True)
    vals = np.asarray(value_fn(*mesh), dtype=float)
    finite = vals[np.isfinite(vals)]
    if finite.size == 0:
        # no admissible grid neighbor (e.g. a decode-matching ridge):
        # fall back to a joint rescaling, which preserves admissibility
        return _two_step_slack(value_fn, powers, attained, factor)
    return max(0.0, attained - float(finite.max()))


def test_criterion_01_closed_forms_match_oracle():
    rng = np.random.default_rng(101)
    grid = GridSpec()
    f1 = grid.step_factor()
    f2 = grid.step_factor(grid.twoway_points)
    t0 = time.time()
    worst = 0.0
    checked = 0
    for _ in range(500):
        mi = random_mode_inputs(rng)

        def check(closed_value, achievable_fn, achievable_powers, mode,
                  factor, oracle_fn, oracle):
            nonlocal worst, checked
            scale = max(abs(oracle.value), abs(closed_value), 1e-9)
            # the claimed value must be attained by the claimed powers
            attained = float(achievable_fn(*achievable_powers))
            assert closed_value <= attained + 1e-6 * scale, (mode, mi)
            slack = max(
                _two_step_slack(oracle_fn, oracle.powers, oracle.value,
                                factor),
                _quantization_slack(achievable_fn, achievable_powers,
                                    attained, grid, factor))
            tol = max(0.01 * scale, slack, 1e-9) + 1e-9 * scale
            err = abs(closed_value - oracle.value)
            worst = max(worst, err - tol)
            assert err <= tol, (mode, mi, closed_value, oracle)
            checked += 1

        c = solve_direct_pu(mi.gamma, mi.lam_p1, mi.beta_p2, pair=0,
                            direction=0)
        o = oracle_subproblem(mi, Mode.DIRECT_PU, grid)
        check(c.dual_value, lambda p: _val_direct_pu(mi, p),
              (c.powers.get(0, 0.0),), "direct-pu", f1,
              lambda p: _val_direct_pu(mi, p), o)

        c = solve_direct_su(mi.gamma_s, mi.lam_s, mi.su_weight, su=0,
                            su_node=2)
        o = oracle_subproblem(mi, Mode.DIRECT_SU, grid)
        check(c.dual_value, lambda p: _val_direct_su(mi, p),
              (c.powers.get(2, 0.0),), "direct-su", f1,
              lambda p: _val_direct_su(mi, p), o)

        c = solve_oneway_df(mi.gamma, mi.gamma1, mi.gamma2, mi.gamma_s,
                            mi.lam_p1, mi.lam_s, mi.beta_p2, mi.su_weight,
                            pair=0, direction=0, su=0, su_node=2)
        o = oracle_subproblem(mi, Mode.ONEWAY_DF, grid)
        t_c = c.t_su if c.mode is Mode.ONEWAY_DF else 1.0
        check(c.dual_value,
              lambda p1, ps: _val_oneway(mi, p1, ps, t_c),
              (c.powers.get(0, 0.0), c.powers.get(2, 0.0)), "oneway", f1,
              lambda p1, ps: _val_oneway(mi, p1, ps, o.t), o)

        c = solve_twoway(mi.gamma1, mi.gamma2, mi.lam_p1, mi.lam_p2,
                         mi.lam_s, mi.beta_p1, mi.beta_p2, pair=0, su=0,
                         su_node=2)
        o = oracle_subproblem(mi, Mode.TWOWAY_DF, grid)
        check(c.dual_value,
              lambda p1, p2, ps: _twoway_region_value(mi, p1, p2, ps),
              (c.powers.get(0, 0.0), c.powers.get(1, 0.0),
               c.powers.get(2, 0.0)), "twoway", f2,
              lambda p1, p2, ps: _twoway_region_value(mi, p1, p2, ps), o)
    elapsed = time.time() - t0
    _verdict(1, checked == 2000 and elapsed < 120.0,
             f"{checked} solver/oracle agreements (worst excess "
             f"{worst:.2e}), {elapsed:.0f}s (< 120s)")


# ---------------------------------------------------------------------------
# criterion 2: binary optimal time split

def test_criterion_02_time_split_binary():
    rng = np.random.default_rng(202)
    grid_ow = GridSpec(points=60, time_points=101)
    grid_tw = GridSpec(twoway_points=16, time_points=101)
    interior_wins = 0
    for _ in range(200):
        for mode, grid in ((Mode.ONEWAY_DF, grid_ow),
                           (Mode.TWOWAY_DF, grid_tw)):
            mi = random_mode_inputs(rng)
            sweep = oracle_time_sweep(mi, mode, grid)
            endpoint = max(sweep[0], sweep[-1])
            if sweep[1:-1].max(initial=0.0) > endpoint + 1e-6 * (1 + abs(endpoint)):
                interior_wins += 1
    _verdict(2, interior_wins == 0,
             f"{interior_wins} interior time-split optima over 200 one-way "
             "and 200 two-way inputs (expected 0)")


# ---------------------------------------------------------------------------
# criterion 3: necessary condition for bidirectional relaying

def test_criterion_03_twoway_necessary_condition():
    rng = np.random.default_rng(303)
    violations = 0
    for _ in range(10_000):
        a1, a2 = sorted((10 ** rng.uniform(-2, 1), 10 ** rng.uniform(-2, 1)),
                        reverse=True)
        g1, g2 = 10 ** rng.uniform(-2, 2), 10 ** rng.uniform(-2, 2)
        l1, l2 = 10 ** rng.uniform(-2, 1), 10 ** rng.uniform(-2, 1)
        p1, p2, _, _, _ = solve_twoway_mac(a1, a2, g1, g2, l1, l2)
        if p1 > 0.0 and p2 > 0.0 and not g1 * l2 > g2 * l1:
            violations += 1
    _verdict(3, violations == 0,
             f"{violations} violations in 10000 weighted MAC solves "
             "(both powers positive implies the gain/price condition)")


# ---------------------------------------------------------------------------
# criterion 4: subgradient inequality of the dual function

def test_criterion_04_subgradient_inequality():
    rng = np.random.default_rng(404)
    worst = np.inf
    for k in range(20):
        instance, _ = make_instance(
            seed=1000 + k, num_subcarriers=int(rng.integers(4, 9)),
            num_pu_pairs=int(rng.integers(1, 3)),
            num_sus=int(rng.integers(1, 4)),
            peak_power_per_user=float(10 ** rng.uniform(0.5, 2.5)),
            pu_rate_requirement=float(rng.uniform(0, 3)),
            noise_variance=float(10 ** rng.uniform(0, 2)))
        kp, ks = instance.num_pairs, instance.num_sus
        for _ in range(100):
            a = rng.uniform(0.0, 4.0, instance.dual_dim)
            b = rng.uniform(0.0, 4.0, instance.dual_dim)
            eva = evaluate_dual(instance, DualState.from_vector(a, kp, ks))
            evb = evaluate_dual(instance, DualState.from_vector(b, kp, ks))
            slack = evb.value - (eva.value + eva.subgradient @ (b - a))
            worst = min(worst, slack)
    _verdict(4, worst >= -1e-8,
             f"minimum subgradient-inequality slack {worst:.3e} over "
             "20 instances x 100 dual-point pairs (>= -1e-8)")


# ---------------------------------------------------------------------------
# criterion 5: small-instance end-to-end optimality

def test_criterion_05_small_instance_optimality():
    from crnalloc.baselines import solve_proposed
    worst = np.inf
    compared = 0
    agree_infeasible = 0
    for k in range(50):
        instance, _ = make_instance(
            seed=500 + k, num_subcarriers=4, num_pu_pairs=1, num_sus=2,
            peak_power_per_user=40.0, pu_rate_requirement=1.0,
            noise_variance=100.0)
        value, _ = oracle_small_instance(instance)
        _, report = solve_proposed(instance)
        if value is None:
            agree_infeasible += int(not report.feasible)
            continue
        if not report.feasible:
            # solver must not miss instances the oracle can satisfy by a
            # clear margin; borderline grid feasibility is tolerated
            assert value <= 1e-6, f"instance {k}: solver missed {value}"
            continue
        ratio = report.primal_sum_rate / value if value > 0 else 1.0
        worst = min(worst, ratio)
        compared += 1
    _verdict(5, worst >= 0.98,
             f"worst primal/oracle ratio {worst:.4f} over {compared} "
             f"feasible instances (>= 0.98); {agree_infeasible} agreed "
             "infeasible")


# ---------------------------------------------------------------------------
# criterion 6: duality gap at desk scale

def test_criterion_06_median_duality_gap(snr_sweep):
    records, _ = snr_sweep
    gaps = [r["proposed"]["gap_pct"] for r in records[10]
            if r["proposed"]["feasible"]]
    med = float(np.median(gaps))
    _verdict(6, med <= 5.0,
             f"median duality gap {med:.2f}% over {len(gaps)} feasible "
             "realizations at 10 dB (<= 5%)")


# ---------------------------------------------------------------------------
# criterion 7: throughput-gain reproduction over the SNR sweep

def test_criterion_07_snr_sweep_ratios(snr_sweep):
    records, elapsed = snr_sweep
    mp, _, np_ = _outage_stats(records[10], "proposed")
    mn, _, nn = _outage_stats(records[10], "noncoop")
    mf, _, nf = _outage_stats(records[10], "ftm")
    pn = mp / mn if mn else np.inf
    pf = mp / mf if mf else np.inf
    ok = 1.3 <= pn <= 2.0 and 1.05 <= pf <= 1.4
    _verdict(7, ok,
             f"at 10 dB: proposed/non-coop {pn:.3f} (in [1.3, 2.0]), "
             f"proposed/fixed-mode {pf:.3f} (in [1.05, 1.4]); feasible "
             f"counts {np_}/{nn}/{nf}; sweep took {elapsed / 60:.1f} min")


# ---------------------------------------------------------------------------
# criterion 8: monotone decline in the primary rate requirement

def test_criterion_08_rate_sweep_shape(rate_sweep):
    records, _ = rate_sweep
    reqs = sorted(records)
    stats = {s: [_outage_stats(records[r], s) for r in reqs]
             for s in ("proposed", "ftm", "noncoop")}
    rhos = {}
    for scheme, pts in stats.items():
        means = [m for m, _, _ in pts]
        rho = scipy.stats.spearmanr(reqs, means).statistic
        rhos[scheme] = float(rho)
    order_ok = True
    for i, r in enumerate(reqs):
        mp, sp, _ = stats["proposed"][i]
        mf, sf, _ = stats["ftm"][i]
        mn, sn, _ = stats["noncoop"][i]
        if mp < mf - max(sp, sf) or mf < mn - max(sf, sn):
            order_ok = False
    mono_ok = all(rho <= -0.9 for rho in rhos.values())
    _verdict(8, mono_ok and order_ok,
             f"Spearman rho vs requirement: " +
             ", ".join(f"{s}={r:.2f}" for s, r in rhos.items()) +
             f" (all <= -0.9); ordering within 1 std: {order_ok}")


# ---------------------------------------------------------------------------
# criterion 9: candidate count and linear-in-N evaluation time

def test_criterion_09_complexity_scaling():
    for kp, ks in [(1, 1), (1, 4), (2, 4), (3, 2), (4, 6)]:
        assert num_candidate_rows(kp, ks) == 1 + 2 * kp + ks + 3 * kp * ks
    sizes = (16, 32, 64, 128)
    times = []
    for n in sizes:
        instance, _ = make_instance(seed=9, num_subcarriers=n,
                                    num_pu_pairs=2, num_sus=4,
                                    peak_power_per_user=float(10 * n),
                                    pu_rate_requirement=5.0,
                                    noise_variance=800.0)
        dual = DualState.from_vector(
            np.full(instance.dual_dim, 0.5), 2, 4)
        evaluate_dual(instance, dual)  # warm-up (JIT, allocation)
        # best-of-batches: the minimum is robust to scheduler noise
        reps, best = 10, np.inf
        for _ in range(8):
            t0 = time.perf_counter()
            for _ in range(reps):
                evaluate_dual(instance, dual)
            best = min(best, (time.perf_counter() - t0) / reps)
        times.append(best)
    slope, intercept, r, _, _ = scipy.stats.linregress(sizes, times)
    _verdict(9, r * r > 0.95 and slope > 0,
             f"candidate-count formula exact; evaluation time vs N has "
             f"R^2 = {r * r:.3f} (> 0.95), slope {slope * 1e6:.1f} us per "
             "subcarrier")


# ---------------------------------------------------------------------------
# criterion 10: byte-identical deterministic output

def test_criterion_10_deterministic_csv(tmp_path):
    cfg = ExperimentConfig(
        scenario=ScenarioConfig(num_subcarriers=16, num_pu_pairs=2,
                                num_sus=4, noise_variance=800.0),
        sweep_values=(6.0, 10.0), realizations=3, record_timing=False)
    a = run_experiment(cfg, tmp_path / "a").read_bytes()
    b = run_experiment(cfg, tmp_path / "b").read_bytes()
    _verdict(10, a == b and len(a) > 0,
             f"two runs, identical config and seed: {len(a)} CSV bytes, "
             "byte-identical")
