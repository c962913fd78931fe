"""Numba kernels for the per-subcarrier candidate search.

Everything here is a pure function of its arguments; the Python-facing
API lives in persub.py / dual.py.  Candidate rows are enumerated in
tie-break order:

    row 0                     IDLE
    1 + 2k + d                DIRECT_PU(pair k, direction d)
    A + s,  A = 1 + 2*K_P     DIRECT_SU(su s)
    B + (2k+d)*K_S + s        ONEWAY_DF(k, d, s)   (t = 0 branch)
    C + k*K_S + s             TWOWAY_DF(k, s)

The one-way t = 1 branch coincides with DIRECT_SU(s), which is already
enumerated (and preferred on ties by its lower ordinal), so the one-way
rows only carry the relaying branch.
"""

import math

import numpy as np
from numba import njit

LN2 = math.log(2.0)
TIE = 1e-12
DEGENERATE_DENOM = 1e-12


@njit(cache=True)
def _cap(x):
    return math.log1p(x) / LN2


@njit(cache=True)
def mac_solve(a1p, a2p, g1, g2, l1, l2):
    """Weighted sum-rate maximization on the two-user Gaussian MAC.

    Flow 1 is delivered to node 1 and carried by node 2's power over
    gain g2 (and vice versa).  Weights a1p/a2p multiply the two flows;
    l1/l2 price the node powers.  Returns (P1, P2, R1, R2, value).

    The interior stationary point assumes a1p >= a2p (roles are swapped
    symmetrically otherwise); the two single-flow corners are always
    evaluated so boundary optima are exact.
    """
    swap = a2p > a1p
    if swap:
        a1p, a2p = a2p, a1p
        g1, g2 = g2, g1
        l1, l2 = l2, l1
    A = 2.0 * LN2
    bestv = 0.0
    b_p1 = 0.0
    b_p2 = 0.0
    b_r1 = 0.0
    b_r2 = 0.0
    # corner: only the lower-weight flow (P2 = 0); this is also where the
    # interior formulas land when the weights tie.
    if g1 > 0.0 and l1 > 0.0 and a2p > 0.0:
        p1 = a2p / (A * l1) - 1.0 / g1
        if p1 > 0.0:
            r2 = 0.5 * _cap(p1 * g1)
            v = a2p * r2 - l1 * p1
            if v > bestv:
                bestv = v
                b_p1, b_p2, b_r1, b_r2 = p1, 0.0, 0.0, r2
    # corner: only the higher-weight flow (P1 = 0)
    if g2 > 0.0 and l2 > 0.0 and a1p > 0.0:
        p2 = a1p / (A * l2) - 1.0 / g2
        if p2 > 0.0:
            r1 = 0.5 * _cap(p2 * g2)
            v = a1p * r1 - l2 * p2
            if v > bestv + TIE:
                bestv = v
                b_p1, b_p2, b_r1, b_r2 = 0.0, p2, r1, 0.0
    # interior stationary point (successive decoding, higher-weight flow
    # decoded last); requires g1*l2 > g2*l1
    den = g1 * l2 - g2 * l1
    if den > DEGENERATE_DENOM and g1 > 0.0 and g2 > 0.0 and l1 > 0.0:
        p2 = (a1p - a2p) * g1 / (A * den) - 1.0 / g2
        if p2 < 0.0:
            p2 = 0.0
        p1 = (a2p / l1 - (a1p - a2p) * g2 / den) / A
        if p1 < 0.0:
            p1 = 0.0
        if p1 > 0.0 or p2 > 0.0:
            r1 = 0.5 * _cap(p2 * g2)
            r2 = 0.5 * _cap(p2 * g2 + p1 * g1) - r1
            v = a1p * r1 + a2p * r2 - l1 * p1 - l2 * p2
            if v > bestv + TIE:
                bestv = v
                b_p1, b_p2, b_r1, b_r2 = p1, p2, r1, r2
    if swap:
        return b_p2, b_p1, b_r2, b_r1, bestv
    return b_p1, b_p2, b_r1, b_r2, bestv


@njit(cache=True)
def bc_power(a1, a2, g1, g2, ls):
    """Relay broadcast power maximizing a1/2*C(P g1) + a2/2*C(P g2) - ls*P."""
    A = 2.0 * LN2
    t3 = A * ls - a1 * g1 - a2 * g2
    if t3 >= 0.0:
        return 0.0
    t1 = A * ls * g1 * g2
    t2 = A * ls * (g1 + g2) - g1 * g2 * (a1 + a2)
    if t1 <= 0.0:
        if t2 > 0.0:
            return -t3 / t2
        return 0.0
    disc = t2 * t2 - 4.0 * t1 * t3
    if disc < 0.0:
        disc = 0.0
    return (-t2 + math.sqrt(disc)) / (2.0 * t1)


@njit(cache=True)
def tw_eval(a1, a2, g1, g2, l1, l2, ls, b1, b2):
    """Evaluate the two-way inner dual at (a1, a2).

    Returns (h, v, P1, P2, PS, R1, R2, s1, s2): h is the inner dual
    value (upper bound on the two-way candidate value), v the value of
    the extracted feasible point (rates capped by the broadcast phase),
    s the inner subgradient.
    """
    p1, p2, r1, r2, macv = mac_solve(b1 - a1, b2 - a2, g1, g2, l1, l2)
    ps = bc_power(a1, a2, g1, g2, ls)
    c1 = 0.5 * _cap(ps * g1)
    c2 = 0.5 * _cap(ps * g2)
    bcv = a1 * c1 + a2 * c2 - ls * ps
    h = macv + bcv
    r1c = r1 if r1 < c1 else c1
    r2c = r2 if r2 < c2 else c2
    v = b1 * r1c + b2 * r2c - l1 * p1 - l2 * p2 - ls * ps
    return h, v, p1, p2, ps, r1c, r2c, c1 - r1, c2 - r2


@njit(cache=True)
def twoway_bound(g1, g2, l1, l2, ls, b1, b2):
    """Cheap upper bound on the two-way candidate value (h at 3 probes)."""
    if g1 <= 0.0 or g2 <= 0.0 or (b1 <= 0.0 and b2 <= 0.0):
        return 0.0
    h0 = tw_eval(0.5 * b1, 0.5 * b2, g1, g2, l1, l2, ls, b1, b2)[0]
    h1 = tw_eval(0.0, 0.0, g1, g2, l1, l2, ls, b1, b2)[0]
    h2 = tw_eval(b1, b2, g1, g2, l1, l2, ls, b1, b2)[0]
    hb = h0
    if h1 < hb:
        hb = h1
    if h2 < hb:
        hb = h2
    if hb < 0.0:
        hb = 0.0
    return hb


@njit(cache=True)
def twoway_solve(g1, g2, l1, l2, ls, b1, b2, tol, max_iter):
    """Two-way candidate at fixed outer duals: 2-D ellipsoid over the
    broadcast-cap multipliers in [0, b1] x [0, b2].

    Stops when the certified gap (best inner dual value minus best
    extracted feasible value) drops below tol.  Returns
    (value, P1, P2, PS, R1, R2, upper_bound, gap, iterations).
    """
    if g1 <= 0.0 or g2 <= 0.0 or (b1 <= 0.0 and b2 <= 0.0):
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0
    x1 = 0.5 * b1
    x2 = 0.5 * b2
    rad2 = b1 * b1 + b2 * b2
    if rad2 <= 0.0:
        rad2 = 1.0
    e11 = rad2
    e22 = rad2
    e12 = 0.0
    vb = 0.0
    bp1 = 0.0
    bp2 = 0.0
    bps = 0.0
    br1 = 0.0
    br2 = 0.0
    hb = 1e300
    it = 0
    while it < max_iter:
        it += 1
        a1 = x1
        if a1 < 0.0:
            a1 = 0.0
        elif a1 > b1:
            a1 = b1
        a2 = x2
        if a2 < 0.0:
            a2 = 0.0
        elif a2 > b2:
            a2 = b2
        h, v, p1, p2, ps, r1, r2, s1, s2 = tw_eval(
            a1, a2, g1, g2, l1, l2, ls, b1, b2)
        if v > vb:
            vb = v
            bp1, bp2, bps, br1, br2 = p1, p2, ps, r1, r2
        if h < hb:
            hb = h
        if hb - vb <= tol:
            break
        if x1 < 0.0:
            gv1 = -1.0
            gv2 = 0.0
        elif x2 < 0.0:
            gv1 = 0.0
            gv2 = -1.0
        elif x1 > b1:
            gv1 = 1.0
            gv2 = 0.0
        elif x2 > b2:
            gv1 = 0.0
            gv2 = 1.0
        else:
            gv1 = s1
            gv2 = s2
        w1 = e11 * gv1 + e12 * gv2
        w2 = e12 * gv1 + e22 * gv2
        den = gv1 * w1 + gv2 * w2
        if den <= 1e-30:
            break
        sd = math.sqrt(den)
        x1 -= w1 / (3.0 * sd)
        x2 -= w2 / (3.0 * sd)
        f = 4.0 / 3.0
        c = 2.0 / 3.0
        e11 = f * (e11 - c * w1 * w1 / den)
        e12 = f * (e12 - c * w1 * w2 / den)
        e22 = f * (e22 - c * w2 * w2 / den)
    if hb < vb:
        hb = vb
    return vb, bp1, bp2, bps, br1, br2, hb, hb - vb, it


@njit(cache=True)
def rates_from_powers(dg, c1, c2, gs, widx, wpow, wr_pu_old, kp, ks):
    """Recompute achieved rates from (possibly rescaled) winner powers.

    Two-way winners keep their previous rate proportions (wr_pu_old),
    clipped into the rate region of the new powers.  One-way rates use
    the full DF expression min(first hop, combined second hop), which is
    exact also for unbalanced powers after per-node rescaling.
    """
    n_sub = widx.size
    wr_pu = np.zeros((2 * kp, n_sub))
    wr_su = np.zeros((ks, n_sub))
    off_dsu = 1 + 2 * kp
    off_ow = off_dsu + ks
    off_tw = off_ow + 2 * kp * ks
    for n in range(n_sub):
        row = widx[n]
        if row == 0:
            continue
        if row < off_dsu:
            idx = row - 1
            k = idx // 2
            d = idx % 2
            p = wpow[2 * k + d, n]
            wr_pu[2 * k + (1 - d), n] = _cap(p * dg[k, n])
        elif row < off_ow:
            s = row - off_dsu
            wr_su[s, n] = _cap(wpow[2 * kp + s, n] * gs[s, n])
        elif row < off_tw:
            idx = row - off_ow
            kd = idx // ks
            s = idx % ks
            k = kd // 2
            d = kd % 2
            if d == 0:
                g1 = c1[k, s, n]
                g2 = c2[k, s, n]
            else:
                g1 = c2[k, s, n]
                g2 = c1[k, s, n]
            p1 = wpow[2 * k + d, n]
            ps = wpow[2 * kp + s, n]
            hop1 = _cap(p1 * g1)
            hop2 = _cap(p1 * dg[k, n] + ps * g2)
            r = hop1 if hop1 < hop2 else hop2
            wr_pu[2 * k + (1 - d), n] = 0.5 * r
        else:
            idx = row - off_tw
            k = idx // ks
            s = idx % ks
            g1 = c1[k, s, n]
            g2 = c2[k, s, n]
            p1 = wpow[2 * k, n]
            p2 = wpow[2 * k + 1, n]
            ps = wpow[2 * kp + s, n]
            b1 = 0.5 * min(_cap(p2 * g2), _cap(ps * g1))
            b2 = 0.5 * min(_cap(p1 * g1), _cap(ps * g2))
            b12 = 0.5 * _cap(p1 * g1 + p2 * g2)
            r1 = min(wr_pu_old[2 * k, n], b1)
            r2 = min(wr_pu_old[2 * k + 1, n], b2)
            tot = r1 + r2
            if tot > b12:
                if b12 > 0.0:
                    sc = b12 / tot
                    r1 *= sc
                    r2 *= sc
                else:
                    r1 = 0.0
                    r2 = 0.0
            wr_pu[2 * k, n] = r1
            wr_pu[2 * k + 1, n] = r2
    return wr_pu, wr_su


@njit(cache=True)
def eval_dual_kernel(dg, c1, c2, gs, lam_pu, lam_su, beta, wts, mask,
                     inner_tol, inner_max, prune):
    """One dual-function evaluation: winning candidate on every subcarrier.

    Gains must already be divided by the noise variance; multipliers must
    already be floored/clipped nonnegative.  Returns
    (gsum, ubsum, winner_row, node_power, pu_rate, su_rate)
    where gsum is the sum over subcarriers of the winning candidate
    values and ubsum a certified upper bound on the exact sum.
    """
    kp, n_sub = dg.shape
    ks = gs.shape[0]
    nu = 2 * kp + ks
    a = LN2
    off_dsu = 1 + 2 * kp
    off_ow = off_dsu + ks
    off_tw = off_ow + 2 * kp * ks

    widx = np.zeros(n_sub, np.int64)
    wpow = np.zeros((nu, n_sub))
    wr_pu = np.zeros((2 * kp, n_sub))
    wr_su = np.zeros((ks, n_sub))
    gsum = 0.0
    ubsum = 0.0

    for n in range(n_sub):
        best = -1.0
        brow = -1
        if mask[0, n]:
            best = 0.0
            brow = 0
        for k in range(kp):
            for d in range(2):
                row = 1 + 2 * k + d
                if not mask[row, n]:
                    continue
                g = dg[k, n]
                bet = beta[2 * k + (1 - d)]
                val = 0.0
                if g > 0.0 and bet > 0.0:
                    lam = lam_pu[2 * k + d]
                    p = bet / (a * lam) - 1.0 / g
                    if p > 0.0:
                        val = bet * _cap(p * g) - lam * p
                if val > best + TIE:
                    best = val
                    brow = row
        for s in range(ks):
            row = off_dsu + s
            if not mask[row, n]:
                continue
            g = gs[s, n]
            val = 0.0
            if g > 0.0 and wts[s] > 0.0:
                p = wts[s] / (a * lam_su[s]) - 1.0 / g
                if p > 0.0:
                    val = wts[s] * _cap(p * g) - lam_su[s] * p
            if val > best + TIE:
                best = val
                brow = row
        for k in range(kp):
            for d in range(2):
                for s in range(ks):
                    row = off_ow + (2 * k + d) * ks + s
                    if not mask[row, n]:
                        continue
                    g = dg[k, n]
                    if d == 0:
                        g1 = c1[k, s, n]
                        g2 = c2[k, s, n]
                    else:
                        g1 = c2[k, s, n]
                        g2 = c1[k, s, n]
                    bet = beta[2 * k + (1 - d)]
                    val = 0.0
                    if g1 > g and g2 > 0.0 and bet > 0.0:
                        gp = (g1 - g) / g2
                        lam = lam_pu[2 * k + d]
                        ls = lam_su[s]
                        p1 = bet / (2.0 * a * (lam + ls * gp)) - 1.0 / g1
                        if p1 > 0.0:
                            val = (bet * 0.5 * _cap(p1 * g1)
                                   - lam * p1 - ls * gp * p1)
                    if val > best + TIE:
                        best = val
                        brow = row
        ubn = best
        for k in range(kp):
            for s in range(ks):
                row = off_tw + k * ks + s
                if not mask[row, n]:
                    continue
                g1 = c1[k, s, n]
                g2 = c2[k, s, n]
                l1 = lam_pu[2 * k]
                l2 = lam_pu[2 * k + 1]
                ls = lam_su[s]
                b1 = beta[2 * k]
                b2 = beta[2 * k + 1]
                if prune:
                    bound = twoway_bound(g1, g2, l1, l2, ls, b1, b2)
                    if bound <= best:
                        continue
                v, p1, p2, ps, r1, r2, hb, _, _ = twoway_solve(
                    g1, g2, l1, l2, ls, b1, b2, inner_tol, inner_max)
                if hb > ubn:
                    ubn = hb
                if v > best + TIE:
                    best = v
                    brow = row
        if brow < 0:
            best = 0.0
            brow = 0
        if best < 0.0:
            best = 0.0
        if ubn < best:
            ubn = best
        gsum += best
        ubsum += ubn
        widx[n] = brow

    # decode winners
    for n in range(n_sub):
        row = widx[n]
        if row == 0:
            continue
        if row < off_dsu:
            idx = row - 1
            k = idx // 2
            d = idx % 2
            g = dg[k, n]
            lam = lam_pu[2 * k + d]
            bet = beta[2 * k + (1 - d)]
            p = bet / (a * lam) - 1.0 / g
            if p < 0.0:
                p = 0.0
            wpow[2 * k + d, n] = p
            wr_pu[2 * k + (1 - d), n] = _cap(p * g)
        elif row < off_ow:
            s = row - off_dsu
            g = gs[s, n]
            p = wts[s] / (a * lam_su[s]) - 1.0 / g
            if p < 0.0:
                p = 0.0
            wpow[2 * kp + s, n] = p
            wr_su[s, n] = _cap(p * g)
        elif row < off_tw:
            idx = row - off_ow
            kd = idx // ks
            s = idx % ks
            k = kd // 2
            d = kd % 2
            g = dg[k, n]
            if d == 0:
                g1 = c1[k, s, n]
                g2 = c2[k, s, n]
            else:
                g1 = c2[k, s, n]
                g2 = c1[k, s, n]
            gp = (g1 - g) / g2
            lam = lam_pu[2 * k + d]
            ls = lam_su[s]
            bet = beta[2 * k + (1 - d)]
            p1 = bet / (2.0 * a * (lam + ls * gp)) - 1.0 / g1
            if p1 < 0.0:
                p1 = 0.0
            wpow[2 * k + d, n] = p1
            wpow[2 * kp + s, n] = gp * p1
            wr_pu[2 * k + (1 - d), n] = 0.5 * _cap(p1 * g1)
        else:
            idx = row - off_tw
            k = idx // ks
            s = idx % ks
            v, p1, p2, ps, r1, r2, hb, _, _ = twoway_solve(
                c1[k, s, n], c2[k, s, n], lam_pu[2 * k], lam_pu[2 * k + 1],
                lam_su[s], beta[2 * k], beta[2 * k + 1],
                inner_tol, inner_max)
            wpow[2 * k, n] = p1
            wpow[2 * k + 1, n] = p2
            wpow[2 * kp + s, n] = ps
            wr_pu[2 * k, n] = r1
            wr_pu[2 * k + 1, n] = r2
    return gsum, ubsum, widx, wpow, wr_pu, wr_su
