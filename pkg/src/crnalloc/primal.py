"""Primal recovery: freeze the per-subcarrier (mode, users) assignment
found by the dual phase, re-optimize powers through a reduced dual (the
reduced problem is convex, so its gap vanishes), then repair residual
constraint violations.

At a finite subcarrier count the dual-optimal assignment can be
degenerate: several subcarriers tie between serving a PU flow and an SU,
and a single extraction may leave a PU node with too few subcarriers to
ever meet its rate requirement.  Recovery therefore patches the frozen
assignment incrementally: a starving node steals the idle/SU subcarriers
with the smallest dual-value loss per unit of deliverable rate, one
round at a time, until the reduced problem comes out feasible.
"""

from __future__ import annotations

import time
from dataclasses import replace

import numpy as np

from ._kernels import eval_dual_kernel, rates_from_powers
from .dual import (DualEvaluation, DualResult, SolverOptions, _effective,
                   _scaled_gains, decode_candidates, evaluate_dual,
                   num_candidate_rows, row_direct_pu, row_direct_su,
                   row_oneway, row_twoway, solve_dual)
from .model import (Allocation, DualState, Mode, NetworkInstance,
                    SolverReport, SubcarrierCandidate,
                    candidate_rates_from_powers, feasibility_check,
                    pu_node, shannon_rate, su_node)

EPS_POWER = 1e-3  # repair thresholds (relative)
EPS_RATE = 1e-3
FEAS_EPS = 1e-6  # final feasibility flag thresholds (relative)
MAX_ROUNDS = 12
BISECT_STEPS = 30


# ---------------------------------------------------------------------------
# row decoding helpers (shared with dual.py's enumeration layout)

def _row_fields(kp: int, ks: int, row: int):
    """Decode an enumeration row into (mode, pair, direction, su)."""
    if row == 0:
        return Mode.IDLE, None, None, None
    a = 1 + 2 * kp
    b = a + ks
    c = b + 2 * kp * ks
    if row < a:
        k, d = divmod(row - 1, 2)
        return Mode.DIRECT_PU, k, d, None
    if row < b:
        return Mode.DIRECT_SU, None, None, row - a
    if row < c:
        kd, s = divmod(row - b, ks)
        k, d = divmod(kd, 2)
        return Mode.ONEWAY_DF, k, d, s
    k, s = divmod(row - c, ks)
    return Mode.TWOWAY_DF, k, None, s


def candidate_row(num_pairs: int, num_sus: int, cand: SubcarrierCandidate) -> int:
    """Map a candidate back to its enumeration row."""
    if cand.mode is Mode.IDLE:
        return 0
    if cand.mode is Mode.DIRECT_PU:
        return row_direct_pu(num_pairs, num_sus, cand.pair, cand.direction)
    if cand.mode is Mode.DIRECT_SU:
        return row_direct_su(num_pairs, num_sus, cand.su)
    if cand.mode is Mode.ONEWAY_DF:
        if cand.t_su >= 1.0:
            return row_direct_su(num_pairs, num_sus, cand.su)
        return row_oneway(num_pairs, num_sus, cand.pair, cand.direction, cand.su)
    return row_twoway(num_pairs, num_sus, cand.pair, cand.su)


def frozen_mask(instance: NetworkInstance, candidates) -> np.ndarray:
    """Mask allowing only each subcarrier's assigned candidate (plus idle)."""
    kp, ks = instance.num_pairs, instance.num_sus
    rows = np.array([candidate_row(kp, ks, cand) for cand in candidates])
    return _rows_to_mask(instance, rows)


def _rows_to_mask(instance: NetworkInstance, rows: np.ndarray) -> np.ndarray:
    kp, ks = instance.num_pairs, instance.num_sus
    mask = np.zeros((num_candidate_rows(kp, ks), instance.num_subcarriers),
                    dtype=np.bool_)
    mask[0, :] = True
    mask[rows, np.arange(instance.num_subcarriers)] = True
    return mask


def _bound_row(instance: NetworkInstance, n: int, row: int) -> dict:
    """Optimistic rate deliverable to each PU node by a row's mode when
    every involved node spends its full budget on this one subcarrier."""
    kp, ks = instance.num_pairs, instance.num_sus
    mode, k, d, s = _row_fields(kp, ks, row)
    s2 = instance.noise_var
    pmax = instance.peak_power
    if mode is Mode.DIRECT_PU:
        g = instance.direct_gain[k, n] / s2
        return {pu_node(k, 1 - d): shannon_rate(pmax[pu_node(k, d)] * g)}
    if mode is Mode.ONEWAY_DF:
        src, rnode = pu_node(k, d), su_node(kp, s)
        g = instance.direct_gain[k, n] / s2
        g1 = (instance.cross_gain_1 if d == 0 else instance.cross_gain_2)[k, s, n] / s2
        g2 = (instance.cross_gain_2 if d == 0 else instance.cross_gain_1)[k, s, n] / s2
        hop1 = shannon_rate(pmax[src] * g1)
        hop2 = shannon_rate(pmax[src] * g + pmax[rnode] * g2)
        return {pu_node(k, 1 - d): 0.5 * min(hop1, hop2)}
    if mode is Mode.TWOWAY_DF:
        n1, n2 = pu_node(k, 0), pu_node(k, 1)
        rnode = su_node(kp, s)
        g1 = instance.cross_gain_1[k, s, n] / s2
        g2 = instance.cross_gain_2[k, s, n] / s2
        return {n1: 0.5 * min(shannon_rate(pmax[n2] * g2),
                              shannon_rate(pmax[rnode] * g1)),
                n2: 0.5 * min(shannon_rate(pmax[n1] * g1),
                              shannon_rate(pmax[rnode] * g2))}
    return {}


def rate_upper_bounds(instance: NetworkInstance, candidates) -> np.ndarray:
    """Per-PU-node deliverable-rate bound of a frozen assignment (budget
    sharing ignored, so falling below the requirement proves infeasibility)."""
    kp, ks = instance.num_pairs, instance.num_sus
    ub = np.zeros(instance.num_pu_nodes)
    for n, cand in enumerate(candidates):
        for p, r in _bound_row(instance, n, candidate_row(kp, ks, cand)).items():
            ub[p] += r
    return ub


def _deliver_mask(instance: NetworkInstance, p: int) -> np.ndarray:
    """Mask of all candidate rows that deliver rate to PU node p."""
    kp, ks = instance.num_pairs, instance.num_sus
    mask = np.zeros((num_candidate_rows(kp, ks), instance.num_subcarriers),
                    dtype=np.bool_)
    k, i = divmod(p, 2)
    d = 1 - i  # direction whose destination is node p
    mask[row_direct_pu(kp, ks, k, d), :] = True
    for s in range(ks):
        mask[row_oneway(kp, ks, k, d, s), :] = True
        mask[row_twoway(kp, ks, k, s), :] = True
    return mask


# ---------------------------------------------------------------------------
# fast array-based extraction (no candidate objects in inner loops)

def _per_subcarrier_values(ev: DualEvaluation, lam_all, beta, weights):
    return (weights @ ev.su_rate + beta @ ev.pu_rate - lam_all @ ev.node_power)


def _fast_extract(instance: NetworkInstance, gains, dual: DualState,
                  mask: np.ndarray, weights, opts: SolverOptions):
    """Kernel extraction at a dual point, powers scaled onto budgets and
    rates recomputed; returns (widx, wpow, wr_pu, wr_su)."""
    lam_pu, lam_su, beta = _effective(dual, opts.multiplier_floor)
    _, _, widx, wpow, wr_pu, wr_su = eval_dual_kernel(
        *gains, lam_pu, lam_su, beta, weights, mask,
        opts.inner_tol, opts.inner_max_iters, opts.prune)
    totals = wpow.sum(axis=1)
    over = totals > instance.peak_power
    if np.any(over):
        factor = np.ones(instance.num_nodes)
        factor[over] = instance.peak_power[over] / totals[over]
        wpow = wpow * factor[:, None]
        wr_pu, wr_su = rates_from_powers(*gains, widx, wpow, wr_pu,
                                         instance.num_pairs, instance.num_sus)
    return widx, wpow, wr_pu, wr_su


def _beta_repair_arrays(instance: NetworkInstance, gains, dual: DualState,
                        mask: np.ndarray, weights, opts: SolverOptions,
                        arrays):
    """Bisect starving nodes' rate multipliers upward at a fixed frozen
    assignment, re-extracting scaled powers each probe."""
    req = instance.rate_req
    lam_pu, lam_su = dual.lam_pu, dual.lam_su
    beta = dual.beta.copy()
    widx, wpow, wr_pu, wr_su = arrays
    for _ in range(3):  # sweeps: raising one node's beta can shift others
        rates = wr_pu.sum(axis=1)
        short = [p for p in range(instance.num_pu_nodes)
                 if req[p] > 0 and rates[p] < req[p] * (1.0 - FEAS_EPS)]
        if not short:
            break
        for p in short:
            base = max(beta[p], 1e-6)
            lo, hi = 1.0, 2.0
            found = None
            for _ in range(BISECT_STEPS):
                beta[p] = base * hi
                trial = _fast_extract(instance, gains,
                                      DualState(lam_pu, lam_su, beta),
                                      mask, weights, opts)
                if trial[2].sum(axis=1)[p] >= req[p] * (1.0 - FEAS_EPS):
                    found = (hi, trial)
                    break
                lo, hi = hi, hi * 2.0
            if found is None:
                beta[p] = base
                continue
            hi, best_trial = found
            for _ in range(BISECT_STEPS):
                mid = 0.5 * (lo + hi)
                beta[p] = base * mid
                trial = _fast_extract(instance, gains,
                                      DualState(lam_pu, lam_su, beta),
                                      mask, weights, opts)
                if trial[2].sum(axis=1)[p] >= req[p] * (1.0 - FEAS_EPS):
                    hi, best_trial = mid, trial
                else:
                    lo = mid
            beta[p] = base * hi
            widx, wpow, wr_pu, wr_su = best_trial
    return widx, wpow, wr_pu, wr_su


def _proxy_rate(instance: NetworkInstance, n: int, row: int, p: int,
                avail_src: float, avail_relay) -> float:
    """Rate a delivering row could realistically push to node p on one
    subcarrier, given the budget actually still available to the
    transmitters (as opposed to the full-budget optimistic bound)."""
    kp, ks = instance.num_pairs, instance.num_sus
    mode, k, d, s = _row_fields(kp, ks, row)
    s2 = instance.noise_var
    if k is not None and k != p // 2:
        return 0.0
    if mode in (Mode.DIRECT_PU, Mode.ONEWAY_DF) and pu_node(k, 1 - d) != p:
        return 0.0
    if mode is Mode.DIRECT_PU:
        return shannon_rate(avail_src * instance.direct_gain[k, n] / s2)
    if mode is Mode.ONEWAY_DF:
        g = instance.direct_gain[k, n] / s2
        cg1, cg2 = instance.cross_gain_1, instance.cross_gain_2
        g1 = (cg1 if d == 0 else cg2)[k, s, n] / s2
        g2 = (cg2 if d == 0 else cg1)[k, s, n] / s2
        if g1 <= g:
            return 0.0
        ps = avail_relay(su_node(kp, s))
        return 0.5 * min(shannon_rate(avail_src * g1),
                         shannon_rate(avail_src * g + ps * g2))
    if mode is Mode.TWOWAY_DF:
        cg1 = instance.cross_gain_1[k, s, n] / s2
        cg2 = instance.cross_gain_2[k, s, n] / s2
        hop1, hop2 = (cg1, cg2) if p % 2 == 1 else (cg2, cg1)
        ps = avail_relay(su_node(kp, s))
        return 0.5 * min(shannon_rate(avail_src * hop1),
                         shannon_rate(ps * hop2))
    return 0.0


def _flip_for_node(instance: NetworkInstance, outer: DualState,
                   weights, opts: SolverOptions, p: int,
                   rows: np.ndarray, vals: np.ndarray, need: float,
                   alloc: Allocation,
                   scheme_mask: np.ndarray | None = None) -> float:
    """Reassign subcarriers toward starving node p: steal idle/SU
    subcarriers or upgrade the pair's own rows, cheapest dual-value loss
    per unit of realistically deliverable rate first, until the summed
    marginal-rate estimates of the flips reach `need`.

    Deliverability is judged against the spare budget the transmitters
    actually have left, so a relay-assisted row with a modest capacity
    but a free relay beats a nominally stronger row whose source budget
    is exhausted.  Mutates rows/vals in place; returns the estimated
    rate added.
    """
    kp, ks = instance.num_pairs, instance.num_sus
    dmask = _deliver_mask(instance, p)
    if scheme_mask is not None:
        dmask &= scheme_mask
    if not dmask.any():
        return 0.0
    lam_all = np.concatenate([
        np.maximum(outer.lam_pu, opts.multiplier_floor),
        np.maximum(outer.lam_su, opts.multiplier_floor)])
    beta = np.maximum(outer.beta, 0.0)
    # per-row per-subcarrier dual values: pricing each candidate row by
    # its own value (not the best delivering value) charges a flip for
    # the budget of the specific relay it would conscript
    row_vals = {}
    for r in np.nonzero(dmask.any(axis=1))[0]:
        m = np.zeros_like(dmask)
        m[r] = dmask[r]
        ev_r = evaluate_dual(instance, outer, opts=opts, mask=m,
                             weights=weights)
        row_vals[int(r)] = _per_subcarrier_values(ev_r, lam_all, beta,
                                                  weights)
    su_lo = row_direct_su(kp, ks, 0)
    su_hi = row_direct_su(kp, ks, ks - 1)
    partner = 2 * (p // 2) + (1 - p % 2)
    k, i = divmod(p, 2)
    src = pu_node(k, 1 - i)
    spare = instance.peak_power - alloc.node_power
    # an exhausted source can still fund a new subcarrier by re-splitting
    # its spend, so offer at least an even share of its total budget
    deliver_subs = sum(1 for c in alloc.candidates if c.rates.get(p, 0.0) > 0)
    fair_src = ((spare[src] + alloc.node_power[src])
                / (deliver_subs + 1.0))
    deliver_partner = sum(1 for c in alloc.candidates
                          if c.rates.get(partner, 0.0) > 0)
    fair_pp = (spare[p] + alloc.node_power[p]) / (deliver_partner + 1.0)
    options = []
    for n in range(instance.num_subcarriers):
        row = int(rows[n])
        cand = alloc.candidates[n]
        cur_p = cand.rates.get(p, 0.0)
        cur_partner = cand.rates.get(partner, 0.0)
        stealable = row == 0 or (su_lo <= row <= su_hi)
        if not stealable and cur_p <= 0.0 and cur_partner <= 0.0:
            continue  # belongs to another pair
        # flipping frees whatever this subcarrier currently spends
        avail_src = max(spare[src] + cand.powers.get(src, 0.0), fair_src)
        avail_pp = max(spare[p] + cand.powers.get(p, 0.0), fair_pp)

        def avail_relay(node, _c=cand):
            return max(spare[node], 0.0) + _c.powers.get(node, 0.0)

        for new_row in np.nonzero(dmask[:, n])[0]:
            new_row = int(new_row)
            if new_row == row:
                continue  # already frozen here; re-freezing changes nothing
            gain = _proxy_rate(instance, n, new_row, p, avail_src,
                               avail_relay) - cur_p
            if gain <= 1e-12:
                continue
            new_partner = _proxy_rate(instance, n, new_row, partner,
                                      avail_pp, avail_relay)
            if new_partner < cur_partner - 1e-12:
                continue  # would starve the reverse direction
            cost = vals[n] - row_vals[new_row][n]
            options.append((cost / gain, n, new_row, gain))
    options.sort()
    added = 0.0
    flipped = set()
    for _, n, new_row, gain in options:
        if added >= need:
            break
        if n in flipped:
            continue
        flipped.add(n)
        rows[n] = new_row
        vals[n] = row_vals[new_row][n]
        added += gain
    return added


def _weighted_waterfill(gain, weight, current, budget) -> np.ndarray:
    """Extra power per subcarrier maximizing sum_i w_i log(1 + (p_i+a_i) g_i)
    subject to sum a_i = budget, a >= 0 (bisection on the water level)."""
    gain = np.asarray(gain, dtype=float)
    pos = gain > 0.0
    out = np.zeros_like(gain)
    if budget <= 1e-12 or not pos.any():
        return out

    def added(nu):
        a = weight / nu - 1.0 / np.where(pos, gain, 1.0) - current
        return np.where(pos, np.maximum(a, 0.0), 0.0)

    hi = float(np.max(weight * gain[pos])) * 2.0  # allocates nothing
    lo = hi
    for _ in range(200):
        if added(lo).sum() >= budget:
            break
        lo *= 0.5
    else:
        return out
    for _ in range(100):
        mid = np.sqrt(lo * hi)
        if added(mid).sum() >= budget:
            lo = mid
        else:
            hi = mid
    a = added(lo)
    total = a.sum()
    if total > budget:
        a *= budget / total
    return a


def _boost_pu(instance: NetworkInstance, cands: list) -> None:
    """Repair a PU rate shortfall by spending the pair partner's (and the
    involved relays') unspent budget on the subcarriers already assigned
    to deliver to the starving node.  Mutates `cands` in place.

    This is the degeneracy escape hatch: at a degenerate reduced-dual
    point the per-subcarrier extraction can sit on a multiple-access
    corner that leaves the partner silent even though its budget is the
    one resource that fixes the shortfall.
    """
    kp = instance.num_pairs
    s2 = instance.noise_var
    for p in range(instance.num_pu_nodes):
        req = instance.rate_req[p]
        alloc = Allocation.from_candidates(instance, cands)
        if req <= 0 or alloc.pu_rate[p] >= req:
            continue
        spare = instance.peak_power - alloc.node_power
        k, i = divmod(p, 2)
        d = 1 - i                       # direction whose destination is p
        src = pu_node(k, d)
        # (subcarrier, effective source gain, relay node, kind, aux, weight)
        subs = []
        for n, c in enumerate(cands):
            if c.mode is Mode.DIRECT_PU and c.pair == k and c.direction == d:
                g = instance.direct_gain[k, n] / s2
                if g > 0:
                    subs.append((n, g, None, "direct", None, 1.0))
            elif (c.mode is Mode.ONEWAY_DF and c.pair == k
                  and c.direction == d and c.t_su < 1.0):
                g = instance.direct_gain[k, n] / s2
                cg1 = instance.cross_gain_1
                cg2 = instance.cross_gain_2
                g1 = (cg1 if d == 0 else cg2)[k, c.su, n] / s2
                g2 = (cg2 if d == 0 else cg1)[k, c.su, n] / s2
                if g1 > g and g2 > 0:
                    # decode-matching: relay power tracks the source's
                    subs.append((n, g1, su_node(kp, c.su), "oneway",
                                 (g1 - g) / g2, 0.5))
            elif c.mode is Mode.TWOWAY_DF and c.pair == k:
                cg1 = instance.cross_gain_1[k, c.su, n] / s2
                cg2 = instance.cross_gain_2[k, c.su, n] / s2
                hop1, hop2 = (cg1, cg2) if d == 0 else (cg2, cg1)
                if hop1 > 0 and hop2 > 0:
                    subs.append((n, hop1, su_node(kp, c.su), "twoway",
                                 (hop1, hop2), 0.5))
        if not subs:
            continue
        cur = np.array([cands[n].powers.get(src, 0.0) for n, *_ in subs])
        gains_arr = np.array([t[1] for t in subs])
        wts = np.array([t[5] for t in subs])

        def _applied(src_powers, spare_relay, p=p, src=src, subs=subs):
            """Candidate list fragment with the source's power set per sub
            (relays topped up from their spare); returns it with the total
            rate delivered into the starving node.  The partner's rates are
            never reduced: its own subcarriers are untouched and a two-way
            relay's power only grows."""
            local = {}
            delivered = 0.0
            for (n, _, relay, kind, aux, _), psrc in zip(subs, src_powers):
                c = cands[n]
                powers = dict(c.powers)
                old_src = powers.get(src, 0.0)
                powers[src] = float(psrc)
                take = 0.0
                if kind != "direct":
                    if kind == "oneway":
                        need_ps = aux * powers[src]
                    else:
                        hop1, hop2 = aux
                        need_ps = powers[src] * hop1 / hop2
                    take = min(max(need_ps - powers.get(relay, 0.0), 0.0),
                               max(spare_relay[relay], 0.0))
                    if take > 0.0:
                        powers[relay] = powers.get(relay, 0.0) + take
                        spare_relay[relay] -= take
                if psrc == old_src and take == 0.0:
                    delivered += c.rates.get(p, 0.0)
                    continue
                if kind != "twoway":
                    cand = replace(c, powers=powers)
                    cand = replace(cand, rates=candidate_rates_from_powers(
                        instance, n, cand))
                else:
                    ps = powers.get(relay, 0.0)
                    p_other = powers.get(p, 0.0)
                    rates = dict(c.rates)
                    cap_p = 0.5 * min(shannon_rate(powers[src] * hop1),
                                      shannon_rate(ps * hop2))
                    cap_o = 0.5 * min(shannon_rate(p_other * hop2),
                                      shannon_rate(ps * hop1))
                    b12 = 0.5 * shannon_rate(powers[src] * hop1
                                             + p_other * hop2)
                    r_o = min(rates.get(src, 0.0), cap_o)
                    rates[p] = float(min(cap_p, max(b12 - r_o, 0.0)))
                    rates[src] = float(r_o)
                    cand = replace(c, powers=powers, rates=rates)
                local[n] = cand
                delivered += cand.rates.get(p, 0.0)
            return local, delivered

        # incremental: spend only the source's spare on top of the split
        add = _weighted_waterfill(gains_arr, wts, cur, spare[src])
        plan_a, val_a = _applied(cur + add, spare.copy())
        # full re-split: redistribute the source's whole spend on these
        # subcarriers (an exhausted source can still be split badly)
        resplit = _weighted_waterfill(gains_arr, wts, np.zeros_like(cur),
                                      spare[src] + float(cur.sum()))
        plan_b, val_b = _applied(resplit, spare.copy())
        plan = plan_b if val_b > val_a + 1e-12 else plan_a
        for n, cand in plan.items():
            cands[n] = cand


def _boost_su(instance: NetworkInstance, cands: list,
              frozen_rows: np.ndarray) -> None:
    """Re-waterfill each SU's own-traffic budget across its subcarriers.

    An SU's self-transmission power touches no PU constraint, so its
    spend on its own frozen subcarriers -- plus any subcarrier the
    extraction left completely idle -- can be redistributed freely.
    Mutates `cands` in place.
    """
    kp, ks = instance.num_pairs, instance.num_sus
    s2 = instance.noise_var
    for s in range(ks):
        node = su_node(kp, s)
        row = row_direct_su(kp, ks, s)
        subs = [n for n in range(instance.num_subcarriers)
                if instance.su_bs_gain[s, n] > 0.0
                and ((int(frozen_rows[n]) == row
                      and cands[n].mode in (Mode.IDLE, Mode.DIRECT_SU))
                     or cands[n].mode is Mode.IDLE)]
        if not subs:
            continue
        alloc = Allocation.from_candidates(instance, cands)
        spare = instance.peak_power[node] - alloc.node_power[node]
        budget = spare + sum(cands[n].powers.get(node, 0.0) for n in subs)
        if budget <= 1e-12:
            continue
        gain = instance.su_bs_gain[s, subs] / s2
        power = _weighted_waterfill(gain, np.ones_like(gain),
                                    np.zeros_like(gain), budget)
        for n, g, p in zip(subs, gain, power):
            if p <= 0.0 and cands[n].mode is Mode.IDLE:
                continue
            cands[n] = SubcarrierCandidate(
                mode=Mode.DIRECT_SU, su=s, t_su=1.0,
                powers={node: float(p)},
                rates={node: float(shannon_rate(p * g))})


def _trim_relay_power(instance: NetworkInstance, cands: list) -> None:
    """Cut relay spend down to the minimum supporting the rates already
    credited to each relaying subcarrier.  Budget scaling can dump a
    relay's whole budget onto a few subcarriers whose rates are capped
    by the other hop; the excess is pure waste and is better spent on
    the relay's own traffic.  Mutates `cands` in place."""
    kp = instance.num_pairs
    s2 = instance.noise_var
    safety = 1.0 + 1e-9
    for n, c in enumerate(cands):
        if c.su is None or c.pair is None:
            continue
        relay = su_node(kp, c.su)
        ps = c.powers.get(relay, 0.0)
        if ps <= 0.0:
            continue
        if c.mode is Mode.ONEWAY_DF:
            if c.rates.get(relay, 0.0) > 0.0:
                continue  # power also carries the relay's own traffic
            k, d = c.pair, c.direction
            dst = pu_node(k, 1 - d)
            g = instance.direct_gain[k, n] / s2
            cg1, cg2 = instance.cross_gain_1, instance.cross_gain_2
            g2 = (cg2 if d == 0 else cg1)[k, c.su, n] / s2
            if g2 <= 0.0:
                continue
            snr_needed = 2.0 ** (2.0 * c.rates.get(dst, 0.0)) - 1.0
            p_src = c.powers.get(pu_node(k, d), 0.0)
            ps_min = max(0.0, (snr_needed - p_src * g) / g2) * safety
        elif c.mode is Mode.TWOWAY_DF:
            k = c.pair
            g1 = instance.cross_gain_1[k, c.su, n] / s2
            g2 = instance.cross_gain_2[k, c.su, n] / s2
            if g1 <= 0.0 or g2 <= 0.0:
                continue
            r1 = c.rates.get(pu_node(k, 0), 0.0)  # delivered into node 0
            r2 = c.rates.get(pu_node(k, 1), 0.0)
            ps_min = max((2.0 ** (2.0 * r1) - 1.0) / g1,
                         (2.0 ** (2.0 * r2) - 1.0) / g2) * safety
        else:
            continue
        if ps_min < ps:
            powers = dict(c.powers)
            powers[relay] = float(ps_min)
            cands[n] = replace(c, powers=powers)


def _boost_spare(instance: NetworkInstance, allocation: Allocation,
                 frozen_rows: np.ndarray) -> Allocation:
    """Primal patch pass: trim wasted relay power, fix PU shortfalls from
    spare partner/relay budget, then waterfill leftover SU budget onto SU
    subcarriers."""
    cands = list(allocation.candidates)
    _trim_relay_power(instance, cands)
    _boost_pu(instance, cands)
    _boost_su(instance, cands, frozen_rows)
    return Allocation.from_candidates(instance, cands)


def _allocation_from_arrays(instance: NetworkInstance, dual: DualState,
                            arrays, weights, opts: SolverOptions) -> Allocation:
    widx, wpow, wr_pu, wr_su = arrays
    ev = DualEvaluation(value=0.0, upper_bound=0.0,
                        subgradient=np.zeros(instance.dual_dim),
                        winner_row=widx, node_power=wpow,
                        pu_rate=wr_pu, su_rate=wr_su)
    cands = decode_candidates(instance, dual, ev, weights=weights, opts=opts)
    return Allocation.from_candidates(instance, cands)


# ---------------------------------------------------------------------------
# public operations

def scale_to_caps(instance: NetworkInstance, candidates) -> tuple:
    """Scale each node's per-subcarrier powers uniformly onto its budget
    and recompute the achieved rates from the scaled powers."""
    totals = np.zeros(instance.num_nodes)
    for cand in candidates:
        for node, p in cand.powers.items():
            totals[node] += p
    factor = np.ones(instance.num_nodes)
    over = totals > instance.peak_power
    factor[over] = instance.peak_power[over] / totals[over]
    if not np.any(over):
        return tuple(candidates)
    out = []
    for n, cand in enumerate(candidates):
        if not cand.powers:
            out.append(cand)
            continue
        powers = {node: p * factor[node] for node, p in cand.powers.items()}
        scaled = replace(cand, powers=powers)
        rates = candidate_rates_from_powers(instance, n, scaled)
        out.append(replace(scaled, rates=rates))
    return tuple(out)


def repair_feasibility(instance: NetworkInstance, allocation: Allocation,
                       eps_power: float = EPS_POWER,
                       eps_rate: float = EPS_RATE,
                       dual: DualState | None = None,
                       weights=None,
                       opts: SolverOptions | None = None) -> Allocation:
    """Repair small constraint violations of a recovered allocation.

    Power overshoot is removed exactly by uniform per-node scaling.  PU
    rate shortfalls are repaired, when a reduced-dual point is supplied,
    by bisecting the short node's rate multiplier upward on the frozen
    assignment and re-extracting.  Allocations that remain short are
    returned anyway — the caller decides the feasibility flag.
    """
    if opts is None:
        opts = SolverOptions()
    if weights is None:
        weights = np.ones(instance.num_sus)
    candidates = scale_to_caps(instance, allocation.candidates)
    allocation = Allocation.from_candidates(instance, candidates)
    if dual is None:
        return allocation
    mask = frozen_mask(instance, candidates)
    gains = _scaled_gains(instance)
    arrays = _fast_extract(instance, gains, dual, mask, weights, opts)
    arrays = _beta_repair_arrays(instance, gains, dual, mask, weights, opts,
                                 arrays)
    repaired = _allocation_from_arrays(instance, dual, arrays, weights, opts)
    # keep whichever satisfies more of the rate requirements
    if feasibility_check(instance, repaired, FEAS_EPS, FEAS_EPS).feasible \
            or repaired.pu_rate.min(initial=0.0) > allocation.pu_rate.min(initial=0.0):
        return repaired
    return allocation


SMALL_SEARCH_COMBOS = 60_000
SHORTLIST_BY_VALUE = 32
SHORTLIST_BY_COVERAGE = 16


def _eval_rows(instance: NetworkInstance, gains, outer: DualState,
               rows: np.ndarray, weights, opts: SolverOptions):
    """Reduced-dual solve + extraction + repair + budget boost for one
    frozen assignment.  Returns (allocation, feasibility report, iters)."""
    mask = _rows_to_mask(instance, rows)
    reduced = solve_dual(instance, opts=opts, mask=mask, weights=weights,
                         init_state=outer)
    arrays = _fast_extract(instance, gains, reduced.dual_state, mask,
                           weights, opts)
    arrays = _beta_repair_arrays(instance, gains, reduced.dual_state, mask,
                                 weights, opts, arrays)
    alloc = _allocation_from_arrays(instance, reduced.dual_state, arrays,
                                    weights, opts)
    alloc = _boost_spare(instance, alloc, rows)
    report = feasibility_check(instance, alloc, eps_power=FEAS_EPS,
                               eps_rate=FEAS_EPS)
    return alloc, report, reduced.iterations


def _cheap_eval(instance: NetworkInstance, gains, outer: DualState,
                rows: np.ndarray, weights, opts: SolverOptions):
    """Extraction at the outer dual point + budget boost, no reduced
    solve: a fast stand-in for _eval_rows used to rank assignments."""
    mask = _rows_to_mask(instance, rows)
    arrays = _fast_extract(instance, gains, outer, mask, weights, opts)
    alloc = _allocation_from_arrays(instance, outer, arrays, weights, opts)
    alloc = _boost_spare(instance, alloc, rows)
    report = feasibility_check(instance, alloc, eps_power=FEAS_EPS,
                               eps_rate=FEAS_EPS)
    return alloc, report


def _small_refine(instance: NetworkInstance, gains, outer: DualState,
                  weights, opts: SolverOptions,
                  scheme_mask: np.ndarray | None):
    """Exhaustive assignment shortlist for tiny instances.

    A handful of subcarriers gives a dual point too little information
    to break assignment ties, so enumerate every per-subcarrier row
    combination, score it by per-row dual values and an optimistic
    coverage bound, and polish the most promising combinations with the
    reduced-dual pipeline.  Yields (allocation, report, iterations)
    candidates; empty when the instance is too large to enumerate.
    """
    import heapq
    import itertools

    kp, ks = instance.num_pairs, instance.num_sus
    nrows = num_candidate_rows(kp, ks)
    nsub = instance.num_subcarriers
    if scheme_mask is None:
        allowed = [np.arange(nrows)] * nsub
    else:
        allowed = [np.nonzero(scheme_mask[:, n])[0] for n in range(nsub)]
    combos = 1
    for a in allowed:
        combos *= len(a)
        if combos > SMALL_SEARCH_COMBOS:
            return []
    # per-(row, subcarrier) dual values at the outer point
    lam_all = np.concatenate([
        np.maximum(outer.lam_pu, opts.multiplier_floor),
        np.maximum(outer.lam_su, opts.multiplier_floor)])
    beta = np.maximum(outer.beta, 0.0)
    vals = np.zeros((nrows, nsub))
    for r in range(nrows):
        mask = np.zeros((nrows, nsub), dtype=np.bool_)
        mask[r, :] = True
        ev = evaluate_dual(instance, outer, opts=opts, mask=mask,
                           weights=weights)
        vals[r] = _per_subcarrier_values(ev, lam_all, beta, weights)
    bound = np.zeros((instance.num_pu_nodes, nrows, nsub))
    for r in range(nrows):
        for n in range(nsub):
            for p, b in _bound_row(instance, n, r).items():
                bound[p, r, n] = b
    req = instance.rate_req
    # direct-SU rate when the SU splits its budget evenly over m subs:
    # a primal-flavored score that does not inherit the duality gap the
    # way per-row dual values do
    su_row_of = np.full(nrows, -1)
    su_direct = np.zeros((ks, nsub, nsub))
    for s in range(ks):
        su_row_of[row_direct_su(kp, ks, s)] = s
        budget = instance.peak_power[su_node(kp, s)]
        for n in range(nsub):
            g = instance.su_bs_gain[s, n] / instance.noise_var
            for m in range(nsub):
                su_direct[s, n, m] = weights[s] * shannon_rate(
                    budget / (m + 1) * g)
    cols = np.arange(nsub)
    by_primal, by_value, by_cover = [], [], []
    # per SU-ownership pattern (which subcarrier belongs to which SU),
    # keep the best completions so no pattern is starved out of the
    # shortlist by globally higher-scoring ones
    pattern_margin: dict = {}
    pattern_value: dict = {}

    def _push(heap, key, idx, combo, cap):
        heapq.heappush(heap, (key, idx, combo))
        if len(heap) > cap:
            heapq.heappop(heap)

    for idx, combo in enumerate(itertools.product(*allowed)):
        cov = bound[:, combo, cols].sum(axis=1)
        score = float(vals[combo, cols].sum())
        counts = np.zeros(ks, dtype=np.int64)
        for r in combo:
            if su_row_of[r] >= 0:
                counts[su_row_of[r]] += 1
        primal_score = 0.0
        for n, r in enumerate(combo):
            s = su_row_of[r]
            if s >= 0:
                primal_score += su_direct[s, n, counts[s] - 1]
        covered = bool(np.all(cov >= req * (1.0 - 1e-9)))
        margin = float(np.min(np.where(req > 0, cov / np.maximum(req, 1e-12),
                                       np.inf)))
        pattern = tuple(int(su_row_of[r]) for r in combo)
        _push(pattern_margin.setdefault(pattern, []), margin, idx, combo, 3)
        if covered:
            _push(by_primal, primal_score, idx, combo, SHORTLIST_BY_VALUE)
            _push(by_value, score, idx, combo, SHORTLIST_BY_VALUE)
            _push(pattern_value.setdefault(pattern, []), score, idx, combo, 5)
        _push(by_cover, margin, idx, combo, SHORTLIST_BY_COVERAGE)
    # stage 1: cheap extraction-based ranking of the per-pattern picks
    stage1 = set()
    for heaps in (pattern_margin, pattern_value):
        for heap in heaps.values():
            stage1 |= {combo for _, _, combo in heap}
    ranked = []
    for combo in sorted(stage1):
        rows = np.array(combo, dtype=np.int64)
        alloc, rep = _cheap_eval(instance, gains, outer, rows, weights, opts)
        ranked.append((rep.feasible,
                       alloc.weighted_su_sum_rate(weights),
                       -rep.max_rate_shortfall, combo))
    ranked.sort(reverse=True)
    shortlist = {combo for _, _, _, combo in ranked[:SHORTLIST_BY_VALUE]}
    shortlist |= {combo for _, _, combo in by_primal}
    shortlist |= {combo for _, _, combo in by_value}
    shortlist |= {combo for _, _, combo in by_cover}
    light = replace(opts, max_iters=400, collect_trace=False)
    out = []
    scored = []
    for combo in sorted(shortlist):
        rows = np.array(combo, dtype=np.int64)
        alloc, rep, iters = _eval_rows(instance, gains, outer, rows, weights,
                                       light)
        out.append((alloc, rep, iters))
        scored.append((rep.feasible, alloc.weighted_su_sum_rate(weights),
                       -rep.max_rate_shortfall, combo))
    # full-budget polish of the few best lightly-polished assignments:
    # the truncated reduced solve can mis-rank close contenders
    scored.sort(reverse=True)
    for _, _, _, combo in scored[:6]:
        rows = np.array(combo, dtype=np.int64)
        out.append(_eval_rows(instance, gains, outer, rows, weights, opts))
    return out


def _improves(trial: Allocation, trial_report, best: Allocation, best_report,
              weights) -> bool:
    """Preference order across patching rounds: feasibility first, then
    SU objective among feasible, then smallest shortfall."""
    if trial_report.feasible != best_report.feasible:
        return trial_report.feasible
    if trial_report.feasible:
        return (trial.weighted_su_sum_rate(weights)
                > best.weighted_su_sum_rate(weights))
    return trial_report.max_rate_shortfall < best_report.max_rate_shortfall


def recover_primal(instance: NetworkInstance, dual_result: DualResult,
                   opts: SolverOptions | None = None,
                   weights=None,
                   scheme_mask: np.ndarray | None = None
                   ) -> tuple[Allocation, SolverReport]:
    """Recover a feasible allocation from a dual solution.

    Rounds of: freeze assignment -> reduced dual -> extract + scale ->
    rate-multiplier repair; starving nodes steal additional subcarriers
    between rounds.  Realizations whose requirements cannot be met even
    after patching are flagged infeasible.
    """
    t0 = time.perf_counter()
    if opts is None:
        opts = SolverOptions()
    if weights is None:
        weights = np.ones(instance.num_sus)
    weights = np.asarray(weights, dtype=float)
    gains = _scaled_gains(instance)
    req = instance.rate_req
    outer = dual_result.dual_state
    ev0 = dual_result.evaluation
    rows = ev0.winner_row.copy()
    lam_all = np.concatenate([
        np.maximum(outer.lam_pu, opts.multiplier_floor),
        np.maximum(outer.lam_su, opts.multiplier_floor)])
    vals = _per_subcarrier_values(ev0, lam_all, np.maximum(outer.beta, 0.0),
                                  weights)
    uncoverable = False
    iterations = dual_result.iterations
    allocation = report = None
    for _ in range(MAX_ROUNDS):
        mask = _rows_to_mask(instance, rows)
        reduced = solve_dual(instance, opts=opts, mask=mask, weights=weights,
                             init_state=outer)
        iterations += reduced.iterations
        reduced_state = reduced.dual_state
        arrays = _fast_extract(instance, gains, reduced_state, mask, weights,
                               opts)
        arrays = _beta_repair_arrays(instance, gains, reduced_state, mask,
                                     weights, opts, arrays)
        trial = _allocation_from_arrays(instance, reduced_state, arrays,
                                        weights, opts)
        trial = _boost_spare(instance, trial, rows)
        trial_report = feasibility_check(instance, trial,
                                         eps_power=FEAS_EPS,
                                         eps_rate=FEAS_EPS)
        if allocation is None or _improves(trial, trial_report,
                                           allocation, report, weights):
            allocation, report = trial, trial_report
        if report.feasible or uncoverable:
            break
        short = [p for p in range(instance.num_pu_nodes)
                 if req[p] > 0
                 and trial.pu_rate[p] < req[p] * (1.0 - FEAS_EPS)]
        progressed = False
        for p in short:
            added = _flip_for_node(instance, outer, weights, opts, p,
                                   rows, vals, req[p] - trial.pu_rate[p],
                                   trial, scheme_mask=scheme_mask)
            progressed = progressed or added > 0.0
        if not progressed:
            uncoverable = True
    for alt, alt_report, alt_iters in _small_refine(
            instance, gains, outer, weights, opts, scheme_mask):
        iterations += alt_iters
        if _improves(alt, alt_report, allocation, report, weights):
            allocation, report = alt, alt_report
    return allocation, SolverReport(
        dual_bound=dual_result.upper_bound,
        primal_sum_rate=allocation.weighted_su_sum_rate(weights),
        feasible=report.feasible,
        max_power_violation=report.max_power_violation,
        max_rate_shortfall=report.max_rate_shortfall,
        iterations=iterations,
        wall_time=time.perf_counter() - t0)
