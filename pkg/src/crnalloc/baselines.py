"""Comparison schemes: the full adaptive solver, the non-cooperative
(direct transmission only) scheme and the fixed-transmission-mode (FTM)
scheme whose modes and relay pairings are pre-assigned from geometry.

All three share one pipeline — dual solve then primal recovery — and
differ only in which candidate rows are enabled, so weak-duality
ordering between their bounds holds by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import NodeLayout
from .dual import (SolverOptions, full_mask, num_candidate_rows,
                   row_direct_pu, row_direct_su, row_oneway, row_twoway,
                   solve_dual)
from .model import Allocation, Mode, NetworkInstance, SolverReport
from .primal import recover_primal

TWOWAY_BALANCE_DB = 3.0  # hops within this of each other -> two-way
COOP_MARGIN_DB = 6.0  # bottleneck hop must beat the direct link by this


@dataclass(frozen=True)
class FixedModeAssignment:
    """Per-direction fixed mode for FTM; entries indexed [pair][direction]."""

    modes: tuple  # Mode per (pair, direction), flattened 2*K_P
    relay: tuple  # SU index per (pair, direction); None for DIRECT

    def mode_of(self, pair: int, direction: int) -> Mode:
        return self.modes[2 * pair + direction]

    def relay_of(self, pair: int, direction: int):
        return self.relay[2 * pair + direction]


def noncoop_mask(instance: NetworkInstance) -> np.ndarray:
    """Candidates restricted to idle and direct transmissions."""
    mask = np.zeros((num_candidate_rows(instance.num_pairs, instance.num_sus),
                     instance.num_subcarriers), dtype=np.bool_)
    mask[:1 + 2 * instance.num_pairs + instance.num_sus, :] = True
    return mask


def assign_ftm_modes(layout: NodeLayout, instance: NetworkInstance,
                     balance_db: float = TWOWAY_BALANCE_DB,
                     coop_margin_db: float = COOP_MARGIN_DB,
                     path_loss_exponent: float = 4.0) -> FixedModeAssignment:
    """Fix each PU direction's mode from node geometry.

    For each direction the candidate relay is the SU with the shortest
    bottleneck hop (the longer of its two hops to the pair).  The
    direction is switched from DIRECT to relaying only when that
    bottleneck hop's path loss beats the direct link's by more than
    `coop_margin_db`; among relaying directions, hop path losses within
    `balance_db` of each other select two-way, and if either direction
    of a pair elects two-way the whole pair uses it (with the
    lower-indexed direction's SU).
    """
    kp, ks = instance.num_pairs, instance.num_sus
    modes = [Mode.DIRECT_PU] * (2 * kp)
    relay = [None] * (2 * kp)
    for k in range(kp):
        want_twoway = [False, False]
        for d in range(2):
            src, dst = 2 * k + d, 2 * k + (1 - d)
            d_direct = layout.pu_pu_distance(src, dst)
            hops = [(max(layout.pu_su_distance(src, s),
                         layout.pu_su_distance(dst, s)), s) for s in range(ks)]
            bottleneck, best = min(hops)
            # path-loss advantage in dB for a pure power law
            adv_db = 10.0 * path_loss_exponent * (
                np.log10(max(d_direct, 1e-9)) - np.log10(max(bottleneck, 1e-9)))
            if adv_db <= coop_margin_db:
                continue  # DIRECT
            hop1 = layout.pu_su_distance(src, best)
            hop2 = layout.pu_su_distance(dst, best)
            diff_db = 10.0 * path_loss_exponent * abs(
                np.log10(max(hop1, 1e-9)) - np.log10(max(hop2, 1e-9)))
            modes[2 * k + d] = Mode.ONEWAY_DF
            relay[2 * k + d] = best
            want_twoway[d] = diff_db <= balance_db
        if any(want_twoway):
            shared = relay[2 * k] if relay[2 * k] is not None else relay[2 * k + 1]
            for d in range(2):
                modes[2 * k + d] = Mode.TWOWAY_DF
                relay[2 * k + d] = shared
    return FixedModeAssignment(modes=tuple(modes), relay=tuple(relay))


def ftm_mask(instance: NetworkInstance,
             assignment: FixedModeAssignment) -> np.ndarray:
    """Candidate rows for the fixed-transmission-mode scheme.

    Each PU direction gets exactly the candidate its pre-fixed mode
    allows — its direct row, or its one-way/two-way row with the fixed
    SU — so the per-subcarrier mode/relay search of the adaptive scheme
    is removed.  Idle and SU direct rows are always available.
    """
    kp, ks = instance.num_pairs, instance.num_sus
    mask = np.zeros((num_candidate_rows(kp, ks), instance.num_subcarriers),
                    dtype=np.bool_)
    mask[0, :] = True
    for s in range(ks):
        mask[row_direct_su(kp, ks, s), :] = True
    for k in range(kp):
        for d in range(2):
            mode = assignment.mode_of(k, d)
            s = assignment.relay_of(k, d)
            if mode is Mode.ONEWAY_DF:
                mask[row_oneway(kp, ks, k, d, s), :] = True
            elif mode is Mode.TWOWAY_DF:
                mask[row_twoway(kp, ks, k, s), :] = True
            else:
                mask[row_direct_pu(kp, ks, k, d), :] = True
    return mask


def solve_pipeline(instance: NetworkInstance,
                   opts: SolverOptions | None = None,
                   mask: np.ndarray | None = None,
                   weights=None) -> tuple[Allocation, SolverReport]:
    """Dual solve followed by primal recovery on a given candidate mask."""
    result = solve_dual(instance, opts=opts, mask=mask, weights=weights)
    return recover_primal(instance, result, opts=opts, weights=weights,
                          scheme_mask=mask)


def solve_proposed(instance: NetworkInstance,
                   opts: SolverOptions | None = None,
                   weights=None) -> tuple[Allocation, SolverReport]:
    return solve_pipeline(instance, opts=opts, mask=full_mask(instance),
                          weights=weights)


def solve_noncoop(instance: NetworkInstance,
                  opts: SolverOptions | None = None,
                  weights=None) -> tuple[Allocation, SolverReport]:
    return solve_pipeline(instance, opts=opts, mask=noncoop_mask(instance),
                          weights=weights)


def solve_ftm(instance: NetworkInstance,
              assignment: FixedModeAssignment,
              opts: SolverOptions | None = None,
              weights=None) -> tuple[Allocation, SolverReport]:
    return solve_pipeline(instance, opts=opts,
                          mask=ftm_mask(instance, assignment),
                          weights=weights)
