"""Closed-form per-subcarrier solvers, one per transmission mode.

Each solver maximizes the per-subcarrier dual objective

    w_S * R_S + beta_dest * R_dest - sum(lambda_u * P_u)

for its mode at fixed multipliers and returns a SubcarrierCandidate.
Gains are linear power gains already divided by the noise variance.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import LN2, Mode, SubcarrierCandidate, shannon_rate
from ._kernels import bc_power, mac_solve, twoway_solve

A = LN2  # the paper-style shorthand a = ln 2


@dataclass(frozen=True)
class ModeInputs:
    """Everything a per-subcarrier solver needs for one (pair, SU) combo."""

    gamma: float = 0.0  # source <-> destination (direct) gain
    gamma1: float = 0.0  # source <-> relay gain
    gamma2: float = 0.0  # relay <-> destination gain
    gamma_s: float = 0.0  # SU <-> BS gain
    lam_p1: float = 0.0
    lam_p2: float = 0.0
    lam_s: float = 0.0
    beta_p1: float = 0.0
    beta_p2: float = 0.0
    su_weight: float = 1.0


@dataclass(frozen=True)
class TwoWayOptions:
    """Inner (broadcast-cap) dual solve controls for the two-way mode."""

    tol: float = 1e-5
    max_iters: int = 200


def solve_direct_pu(gamma: float, lam_p1: float, beta_p2: float,
                    pair=None, direction=None) -> SubcarrierCandidate:
    """PU direct transmission, water-filling with level beta/(a*lambda)."""
    unbounded = False
    p = 0.0
    if gamma > 0.0 and beta_p2 > 0.0:
        if lam_p1 <= 0.0:
            unbounded = True
        else:
            p = max(0.0, beta_p2 / (A * lam_p1) - 1.0 / gamma)
    r = shannon_rate(p * gamma)
    value = beta_p2 * r - lam_p1 * p
    powers = {}
    rates = {}
    if pair is not None:
        powers = {2 * pair + direction: p}
        rates = {2 * pair + (1 - direction): r}
    return SubcarrierCandidate(mode=Mode.DIRECT_PU, pair=pair,
                               direction=direction, powers=powers,
                               rates=rates, dual_value=float(value),
                               unbounded=unbounded)


def solve_direct_su(gamma_s: float, lam_s: float, w_s: float = 1.0,
                    su=None, su_node=None) -> SubcarrierCandidate:
    """SU transmission to the BS; multi-level water-filling."""
    unbounded = False
    p = 0.0
    if gamma_s > 0.0 and w_s > 0.0:
        if lam_s <= 0.0:
            unbounded = True
        else:
            p = max(0.0, w_s / (A * lam_s) - 1.0 / gamma_s)
    r = shannon_rate(p * gamma_s)
    value = w_s * r - lam_s * p
    powers = {su_node: p} if su_node is not None else {}
    rates = {su_node: r} if su_node is not None else {}
    return SubcarrierCandidate(mode=Mode.DIRECT_SU, su=su, powers=powers,
                               rates=rates, t_su=1.0, dual_value=float(value),
                               unbounded=unbounded)


def solve_oneway_df(gamma: float, gamma1: float, gamma2: float,
                    gamma_s: float, lam_p1: float, lam_s: float,
                    beta_p2: float, w_s: float = 1.0,
                    pair=None, direction=None, su=None,
                    su_node=None) -> SubcarrierCandidate:
    """One-way DF relaying; time split is binary, so only the two
    endpoint branches are evaluated.

    t = 0: SU relays exclusively; valid only when gamma1 > gamma, with
    the relay power tied to the source power so both DF hops balance.
    t = 1: the SU transmits for itself (identical to solve_direct_su).
    """
    # t = 0 branch
    value0 = None
    if gamma1 > gamma and gamma2 > 0.0 and beta_p2 > 0.0:
        gp = (gamma1 - gamma) / gamma2
        denom = lam_p1 + lam_s * gp
        if denom <= 0.0:
            p1 = 0.0
            value0 = 0.0
            unbounded0 = True
        else:
            p1 = max(0.0, beta_p2 / (2.0 * A * denom) - 1.0 / gamma1)
            unbounded0 = False
        ps = gp * p1
        r = 0.5 * shannon_rate(p1 * gamma1)
        value0 = beta_p2 * r - lam_p1 * p1 - lam_s * ps
    # t = 1 branch
    su_cand = solve_direct_su(gamma_s, lam_s, w_s, su=su, su_node=su_node)
    value1 = su_cand.dual_value if not su_cand.unbounded else None

    if value0 is None and value1 is None:
        return SubcarrierCandidate(mode=Mode.IDLE)
    best = max(v for v in (value0, value1) if v is not None)
    if best <= 0.0 and not (value0 is not None and unbounded0):
        return SubcarrierCandidate(mode=Mode.IDLE)
    if value1 is not None and (value0 is None or value1 >= value0):
        powers = {su_node: su_cand.powers.get(su_node, 0.0)} if su_node is not None else {}
        rates = dict(su_cand.rates)
        return SubcarrierCandidate(mode=Mode.ONEWAY_DF, pair=pair,
                                   direction=direction, su=su, powers=powers,
                                   rates=rates, t_su=1.0,
                                   dual_value=float(value1))
    powers = {}
    rates = {}
    if pair is not None and su_node is not None:
        powers = {2 * pair + direction: p1, su_node: ps}
        rates = {2 * pair + (1 - direction): r}
    return SubcarrierCandidate(mode=Mode.ONEWAY_DF, pair=pair,
                               direction=direction, su=su, powers=powers,
                               rates=rates, t_su=0.0,
                               dual_value=float(value0),
                               unbounded=unbounded0)


def solve_twoway_mac(alpha1p: float, alpha2p: float, gamma1: float,
                     gamma2: float, lam_p1: float, lam_p2: float):
    """MAC-phase weighted rate maximization.

    Returns (P_P1, P_P2, R_P1, R_P2, mac_value); R_P1 is the rate of the
    flow delivered to node 1 (carried by node 2's power over gamma2).
    """
    if alpha1p < 0 or alpha2p < 0:
        raise ValueError("MAC weights must be nonnegative")
    p1, p2, r1, r2, val = mac_solve(alpha1p, alpha2p, gamma1, gamma2,
                                    lam_p1, lam_p2)
    return p1, p2, r1, r2, val


def solve_twoway_bc(alpha1: float, alpha2: float, gamma1: float,
                    gamma2: float, lam_s: float):
    """Broadcast-phase relay power.  Returns (P_S, unbounded_flag)."""
    if gamma1 <= 0.0 or gamma2 <= 0.0:
        raise ValueError("broadcast phase requires positive gains")
    if lam_s <= 0.0:
        if alpha1 * gamma1 + alpha2 * gamma2 > 0.0:
            return 0.0, True
        return 0.0, False
    return float(bc_power(alpha1, alpha2, gamma1, gamma2, lam_s)), False


def solve_twoway(gamma1: float, gamma2: float, lam_p1: float, lam_p2: float,
                 lam_s: float, beta_p1: float, beta_p2: float,
                 opts: TwoWayOptions | None = None,
                 pair=None, su=None, su_node=None) -> SubcarrierCandidate:
    """Two-way DF relaying at t_S = 0 (the t_S = 1 case is DIRECT_SU).

    Runs the 2-D inner dual over the broadcast-cap multipliers; the
    returned rates are capped by the broadcast phase.  Degenerates to an
    IDLE candidate when the relay power comes out zero.
    """
    if opts is None:
        opts = TwoWayOptions()
    v, p1, p2, ps, r1, r2, _, _, _ = twoway_solve(
        gamma1, gamma2, lam_p1, lam_p2, lam_s, beta_p1, beta_p2,
        opts.tol, opts.max_iters)
    if ps <= 0.0 or v <= 0.0:
        return SubcarrierCandidate(mode=Mode.IDLE)
    oneway_hint = (p1 <= 0.0) != (p2 <= 0.0)
    powers = {}
    rates = {}
    if pair is not None and su_node is not None:
        powers = {2 * pair: p1, 2 * pair + 1: p2, su_node: ps}
        rates = {2 * pair: r1, 2 * pair + 1: r2}
    return SubcarrierCandidate(mode=Mode.TWOWAY_DF, pair=pair, su=su,
                               powers=powers, rates=rates,
                               dual_value=float(v), oneway_hint=oneway_hint)
