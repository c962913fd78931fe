"""Independent brute-force verifiers.

These deliberately avoid the closed forms used by the production
solvers: per-mode optima are found by exhaustive (vectorized) grid
search, and small whole-network instances by enumerating every
per-subcarrier assignment and solving the resulting convex power
problem.  They exist for correctness checking only and are never called
from the solve path.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

from .model import LN2, Mode, NetworkInstance, pu_node, su_node
from .persub import ModeInputs


def _cap(x):
    """Shannon rate log2(1+x), elementwise."""
    return np.log2(1.0 + np.maximum(x, 0.0))


@dataclass(frozen=True)
class GridSpec:
    """Log-spaced power grid (a zero point is always prepended)."""

    lower: float = 1e-3
    upper: float = 400.0
    points: int = 200
    twoway_points: int = 60
    time_points: int = 101
    max_expansions: int = 6

    def axis(self, points: int | None = None,
             upper: float | None = None) -> np.ndarray:
        pts = self.points if points is None else points
        top = self.upper if upper is None else upper
        return np.concatenate([[0.0], np.geomspace(self.lower, top, pts)])

    def step_factor(self, points: int | None = None) -> float:
        """Multiplicative spacing between adjacent grid points."""
        pts = self.points if points is None else points
        return (self.upper / self.lower) ** (1.0 / (pts - 1))


@dataclass(frozen=True)
class OracleResult:
    powers: tuple  # mode-specific power tuple, see per-mode evaluators
    t: float
    value: float


# ---------------------------------------------------------------------------
# per-mode objective evaluators on power grids (vectorized)

def _val_direct_pu(mi: ModeInputs, p):
    return mi.beta_p2 * _cap(p * mi.gamma) - mi.lam_p1 * p


def _val_direct_su(mi: ModeInputs, p):
    return mi.su_weight * _cap(p * mi.gamma_s) - mi.lam_s * p


def _val_oneway(mi: ModeInputs, p1, ps, t):
    """One-way DF objective at time split t: the SU spends fraction t on
    its own traffic and 1-t relaying; a single SU power variable serves
    both roles.

    The mode's coding strategy requires the relay to forward at the full
    decoded rate, which pins the relay power at or above the
    decode-matching level gamma' * P1; decode-and-forward is only
    defined when the source-relay link beats the direct link.  Power
    pairs outside that strategy are not part of this mode (an
    unconstrained search over the raw min-expression can otherwise
    exceed the mode's value in corner cases, shadowing direct
    transmission at half rate).
    """
    own = _cap(ps * mi.gamma_s)
    val = (mi.su_weight * t * own - mi.lam_p1 * p1 - mi.lam_s * ps)
    if t < 1.0:
        if mi.gamma1 > mi.gamma and mi.gamma2 > 0.0:
            gp = (mi.gamma1 - mi.gamma) / mi.gamma2
            relay = 0.5 * _cap(p1 * mi.gamma1)
            valid = ps + 1e-12 >= gp * p1
        else:
            relay = np.zeros_like(np.asarray(p1, dtype=float))
            valid = np.asarray(p1) <= 0.0
        val = np.where(valid | (np.asarray(p1) <= 0.0),
                       val + mi.beta_p2 * (1.0 - t) * relay, -np.inf)
    return val


def _twoway_region_value(mi: ModeInputs, p1, p2, ps, t=0.0):
    """Best weighted rate pair inside the two-phase decode-and-forward
    rate region at fixed powers (linear program on the region corners),
    minus the power costs."""
    b1 = 0.5 * np.minimum(_cap(p2 * mi.gamma2), _cap(ps * mi.gamma1))
    b2 = 0.5 * np.minimum(_cap(p1 * mi.gamma1), _cap(ps * mi.gamma2))
    b12 = 0.5 * _cap(p1 * mi.gamma1 + p2 * mi.gamma2)
    if mi.beta_p1 >= mi.beta_p2:
        r1 = np.minimum(b1, b12)
        r2 = np.minimum(b2, b12 - r1)
    else:
        r2 = np.minimum(b2, b12)
        r1 = np.minimum(b1, b12 - r2)
    reward = mi.beta_p1 * r1 + mi.beta_p2 * r2
    if t > 0.0:
        reward = (1.0 - t) * reward + t * mi.su_weight * _cap(ps * mi.gamma_s)
    return reward - mi.lam_p1 * p1 - mi.lam_p2 * p2 - mi.lam_s * ps


def _oneway_best(mi: ModeInputs, t: float, grid_spec: "GridSpec"):
    """One-way grid search at a fixed time split.  The 2-D product grid
    quantizes the decode-matching line P_S = gamma' P1 poorly (the
    smallest admissible grid P_S overshoots the line and pays extra
    power cost), so the line itself is searched separately in 1-D."""
    powers, value = _search_with_expansion(
        lambda p1, ps: _val_oneway(mi, p1, ps, t),
        grid_spec, 2, grid_spec.points)
    if t < 1.0 and mi.gamma1 > mi.gamma and mi.gamma2 > 0.0:
        gp = (mi.gamma1 - mi.gamma) / mi.gamma2
        rp, rv = _search_with_expansion(
            lambda p1: _val_oneway(mi, p1, gp * p1, t),
            grid_spec, 1, grid_spec.points)
        if rv > value:
            powers, value = (rp[0], gp * rp[0]), rv
    return powers, value


# ---------------------------------------------------------------------------
# grid searches

def _argmax_grid(value_fn, axes):
    """Exhaustive search of value_fn over the cartesian product of axes.
    Ties resolve to the lowest lexicographic grid index (argmax of the
    C-ordered value array)."""
    mesh = np.meshgrid(*axes, indexing="ij", sparse=True)
    vals = value_fn(*mesh)
    flat = int(np.argmax(vals))
    idx = np.unravel_index(flat, vals.shape)
    return tuple(float(ax[i]) for ax, i in zip(axes, idx)), float(vals[idx])


def _search_with_expansion(value_fn, grid: GridSpec, ndim: int,
                           points: int) -> tuple[tuple, float]:
    """Grid search that re-runs with a 4x larger upper bound whenever the
    argmax lands on the top grid point of any power axis."""
    spec = grid
    for _ in range(grid.max_expansions + 1):
        axes = [spec.axis(points=points) for _ in range(ndim)]
        powers, value = _argmax_grid(value_fn, axes)
        top = spec.axis(points=points)[-1]
        if all(p < top for p in powers):
            return powers, value
        spec = replace(spec, upper=spec.upper * 4.0)
    raise RuntimeError(
        "power grid argmax stuck on the boundary after repeated expansion "
        "— objective looks unbounded")


def oracle_subproblem(mode_inputs: ModeInputs, mode: Mode,
                      grid_spec: GridSpec | None = None) -> OracleResult:
    """Brute-force optimum of one transmission mode's per-subcarrier
    objective.  Relaying modes include the time split on a uniform grid;
    two-way rate pairs are optimized exactly inside the rate region at
    every power grid point."""
    if grid_spec is None:
        grid_spec = GridSpec()
    mi = mode_inputs
    if mode is Mode.IDLE:
        return OracleResult(powers=(), t=0.0, value=0.0)
    if mode is Mode.DIRECT_PU:
        powers, value = _search_with_expansion(
            lambda p: _val_direct_pu(mi, p), grid_spec, 1, grid_spec.points)
        return OracleResult(powers=powers, t=0.0, value=max(value, 0.0))
    if mode is Mode.DIRECT_SU:
        powers, value = _search_with_expansion(
            lambda p: _val_direct_su(mi, p), grid_spec, 1, grid_spec.points)
        return OracleResult(powers=powers, t=1.0, value=max(value, 0.0))
    if mode is Mode.ONEWAY_DF:
        best = OracleResult(powers=(0.0, 0.0), t=0.0, value=0.0)
        for t in np.linspace(0.0, 1.0, grid_spec.time_points):
            powers, value = _oneway_best(mi, t, grid_spec)
            if value > best.value:
                best = OracleResult(powers=powers, t=float(t), value=value)
        return best
    if mode is Mode.TWOWAY_DF:
        powers, value = _search_with_expansion(
            lambda p1, p2, ps: _twoway_region_value(mi, p1, p2, ps),
            grid_spec, 3, grid_spec.twoway_points)
        return OracleResult(powers=powers, t=0.0, value=max(value, 0.0))
    raise ValueError(f"unknown mode {mode!r}")


def oracle_time_sweep(mode_inputs: ModeInputs, mode: Mode,
                      grid_spec: GridSpec | None = None) -> np.ndarray:
    """Best objective value at each time-split grid point (used to verify
    that the optimum over t sits at an endpoint)."""
    if grid_spec is None:
        grid_spec = GridSpec()
    mi = mode_inputs
    out = np.empty(grid_spec.time_points)
    for i, t in enumerate(np.linspace(0.0, 1.0, grid_spec.time_points)):
        if mode is Mode.ONEWAY_DF:
            _, out[i] = _oneway_best(mi, t, grid_spec)
        elif mode is Mode.TWOWAY_DF:
            _, out[i] = _search_with_expansion(
                lambda p1, p2, ps: _twoway_region_value(mi, p1, p2, ps, t),
                grid_spec, 3, grid_spec.twoway_points)
        else:
            raise ValueError("time sweep only applies to relaying modes")
    return out


# ---------------------------------------------------------------------------
# whole-network oracle for tiny instances

def _assignment_options(instance: NetworkInstance):
    """All per-subcarrier (mode, pair, direction, su) choices.  The
    relaying time split is binary at the optimum and its t=1 endpoint
    coincides with an SU direct candidate, so one-way entries carry
    t=0 only."""
    kp, ks = instance.num_pairs, instance.num_sus
    opts = [(Mode.IDLE, None, None, None)]
    for k in range(kp):
        for d in range(2):
            opts.append((Mode.DIRECT_PU, k, d, None))
    for s in range(ks):
        opts.append((Mode.DIRECT_SU, None, None, s))
    for k in range(kp):
        for d in range(2):
            for s in range(ks):
                opts.append((Mode.ONEWAY_DF, k, d, s))
    for k in range(kp):
        for s in range(ks):
            opts.append((Mode.TWOWAY_DF, k, None, s))
    return opts


def _option_bounds(instance: NetworkInstance, n: int, option):
    """(su_rate_bound, {pu_node: rate_bound}) when every participant
    spends its whole budget on this single subcarrier."""
    mode = option[0]
    s2 = instance.noise_var
    pmax = instance.peak_power
    kp = instance.num_pairs
    if mode is Mode.IDLE:
        return 0.0, {}
    if mode is Mode.DIRECT_PU:
        _, k, d, _ = option
        g = instance.direct_gain[k, n] / s2
        return 0.0, {pu_node(k, 1 - d): float(_cap(pmax[pu_node(k, d)] * g))}
    if mode is Mode.DIRECT_SU:
        s = option[3]
        g = instance.su_bs_gain[s, n] / s2
        return float(_cap(pmax[su_node(kp, s)] * g)), {}
    if mode is Mode.ONEWAY_DF:
        _, k, d, s = option
        g = instance.direct_gain[k, n] / s2
        gsrc = (instance.cross_gain_1 if d == 0 else
                instance.cross_gain_2)[k, s, n] / s2
        gdst = (instance.cross_gain_2 if d == 0 else
                instance.cross_gain_1)[k, s, n] / s2
        r = 0.5 * min(_cap(pmax[pu_node(k, d)] * gsrc),
                      _cap(pmax[pu_node(k, d)] * g
                           + pmax[su_node(kp, s)] * gdst))
        return 0.0, {pu_node(k, 1 - d): float(r)}
    _, k, s = option[0], option[1], option[-1]
    g1 = instance.cross_gain_1[k, s, n] / s2
    g2 = instance.cross_gain_2[k, s, n] / s2
    rn = su_node(kp, s)
    r1 = 0.5 * min(_cap(pmax[pu_node(k, 1)] * g2), _cap(pmax[rn] * g1))
    r2 = 0.5 * min(_cap(pmax[pu_node(k, 0)] * g1), _cap(pmax[rn] * g2))
    return 0.0, {pu_node(k, 0): float(r1), pu_node(k, 1): float(r2)}


def _solve_assignment(instance: NetworkInstance, assignment, weights):
    """Exact power/rate optimization for one fixed assignment.

    With modes fixed the problem is convex: powers plus explicit PU rate
    variables under concave rate caps, maximizing the weighted SU rate
    subject to budgets and requirements.  Returns the optimum or None
    when infeasible.
    """
    from scipy.optimize import minimize

    kp, ks = instance.num_pairs, instance.num_sus
    s2 = instance.noise_var
    # variable layout: per subcarrier, powers of the involved nodes, then
    # PU rate variables for relaying modes
    pvars = []  # (n, node)
    rvars = []  # (n, pu_node, cap_fns) with caps as functions of x
    for n, option in enumerate(assignment):
        mode = option[0]
        if mode is Mode.DIRECT_PU:
            _, k, d, _ = option
            pvars.append((n, pu_node(k, d)))
        elif mode is Mode.DIRECT_SU:
            pvars.append((n, su_node(kp, option[3])))
        elif mode is Mode.ONEWAY_DF:
            _, k, d, s = option
            pvars.append((n, pu_node(k, d)))
            pvars.append((n, su_node(kp, s)))
        elif mode is Mode.TWOWAY_DF:
            _, k, s = option[0], option[1], option[-1]
            pvars.append((n, pu_node(k, 0)))
            pvars.append((n, pu_node(k, 1)))
            pvars.append((n, su_node(kp, s)))
    np_ = len(pvars)
    pindex = {key: i for i, key in enumerate(pvars)}

    for n, option in enumerate(assignment):
        mode = option[0]
        if mode is Mode.ONEWAY_DF:
            _, k, d, s = option
            g = instance.direct_gain[k, n] / s2
            gsrc = (instance.cross_gain_1 if d == 0 else
                    instance.cross_gain_2)[k, s, n] / s2
            gdst = (instance.cross_gain_2 if d == 0 else
                    instance.cross_gain_1)[k, s, n] / s2
            i1 = pindex[(n, pu_node(k, d))]
            i2 = pindex[(n, su_node(kp, s))]
            caps = [lambda x, i1=i1, g=gsrc: 0.5 * _cap(x[i1] * g),
                    lambda x, i1=i1, i2=i2, g=g, gd=gdst:
                        0.5 * _cap(x[i1] * g + x[i2] * gd)]
            rvars.append((n, pu_node(k, 1 - d), caps))
        elif mode is Mode.TWOWAY_DF:
            _, k, s = option[0], option[1], option[-1]
            g1 = instance.cross_gain_1[k, s, n] / s2
            g2 = instance.cross_gain_2[k, s, n] / s2
            i1 = pindex[(n, pu_node(k, 0))]
            i2 = pindex[(n, pu_node(k, 1))]
            ir = pindex[(n, su_node(kp, s))]
            rvars.append((n, pu_node(k, 0),
                          [lambda x, i2=i2, g=g2: 0.5 * _cap(x[i2] * g),
                           lambda x, ir=ir, g=g1: 0.5 * _cap(x[ir] * g)]))
            rvars.append((n, pu_node(k, 1),
                          [lambda x, i1=i1, g=g1: 0.5 * _cap(x[i1] * g),
                           lambda x, ir=ir, g=g2: 0.5 * _cap(x[ir] * g)]))
    nr = len(rvars)
    nx = np_ + nr

    def su_sum(x):
        total = 0.0
        for n, option in enumerate(assignment):
            if option[0] is Mode.DIRECT_SU:
                s = option[3]
                g = instance.su_bs_gain[s, n] / s2
                total += weights[s] * _cap(x[pindex[(n, su_node(kp, s))]] * g)
        return total

    cons = []
    # rate caps
    for j, entry in enumerate(rvars):
        caps = entry[2]
        for cap in caps:
            cons.append({"type": "ineq",
                         "fun": lambda x, j=j, cap=cap: cap(x) - x[np_ + j]})
    # two-way MAC sum caps
    for n, option in enumerate(assignment):
        if option[0] is Mode.TWOWAY_DF:
            _, k, s = option[0], option[1], option[-1]
            g1 = instance.cross_gain_1[k, s, n] / s2
            g2 = instance.cross_gain_2[k, s, n] / s2
            i1 = pindex[(n, pu_node(k, 0))]
            i2 = pindex[(n, pu_node(k, 1))]
            js = [j for j, e in enumerate(rvars) if e[0] == n]
            cons.append({"type": "ineq",
                         "fun": lambda x, i1=i1, i2=i2, g1=g1, g2=g2, js=js:
                             0.5 * _cap(x[i1] * g1 + x[i2] * g2)
                             - sum(x[np_ + j] for j in js)})
    # direct-PU rates count toward requirements without a rate variable
    def pu_rate_total(x, p):
        total = 0.0
        for n, option in enumerate(assignment):
            if option[0] is Mode.DIRECT_PU:
                _, k, d, _ = option
                if pu_node(k, 1 - d) == p:
                    g = instance.direct_gain[k, n] / s2
                    total += _cap(x[pindex[(n, pu_node(k, d))]] * g)
        for j, entry in enumerate(rvars):
            if entry[1] == p:
                total += x[np_ + j]
        return total

    for p in range(instance.num_pu_nodes):
        if instance.rate_req[p] > 0:
            cons.append({"type": "ineq",
                         "fun": lambda x, p=p: pu_rate_total(x, p)
                             - instance.rate_req[p]})
    # budgets
    for node in range(instance.num_nodes):
        idxs = [i for i, (n, nd) in enumerate(pvars) if nd == node]
        cons.append({"type": "ineq",
                     "fun": lambda x, idxs=idxs, node=node:
                         instance.peak_power[node] - sum(x[i] for i in idxs)})

    bounds = [(0.0, float(instance.peak_power[nd])) for _, nd in pvars]
    bounds += [(0.0, None)] * nr

    best = None
    for frac in (0.5, 0.1):
        x0 = np.zeros(nx)
        for i, (n, nd) in enumerate(pvars):
            x0[i] = frac * instance.peak_power[nd] / max(
                1, sum(1 for _, m in pvars if m == nd))
        res = minimize(lambda x: -su_sum(x), x0, method="SLSQP",
                       bounds=bounds, constraints=cons,
                       options={"maxiter": 300, "ftol": 1e-10})
        if not res.success:
            continue
        x = res.x
        viol = max((-c["fun"](x) for c in cons), default=0.0)
        if viol > 1e-6:
            continue
        val = su_sum(x)
        if best is None or val > best[0]:
            best = (val, x)
    return best


def oracle_small_instance(instance: NetworkInstance,
                          grid_spec: GridSpec | None = None,
                          weights=None):
    """Globally optimal weighted SU sum-rate of a tiny instance by
    enumerating every per-subcarrier assignment (upper-bound pruned) and
    solving each one's convex power problem exactly.

    Returns (best value, best assignment) or (None, None) if no feasible
    assignment exists.
    """
    if instance.num_subcarriers > 4 or instance.num_pairs != 1 \
            or instance.num_sus > 2:
        raise ValueError("small-instance oracle limited to N<=4, one PU "
                         "pair, at most two SUs")
    if weights is None:
        weights = np.ones(instance.num_sus)
    options = _assignment_options(instance)
    nsub = instance.num_subcarriers
    kp = instance.num_pairs
    pu_b = np.zeros((nsub, len(options), instance.num_pu_nodes))
    su_of = np.full(len(options), -1)
    for n in range(nsub):
        for i, option in enumerate(options):
            _, pb = _option_bounds(instance, n, option)
            for p, r in pb.items():
                pu_b[n, i, p] = r
    for i, option in enumerate(options):
        if option[0] is Mode.DIRECT_SU:
            su_of[i] = option[3]

    def _waterfill(g, budget):
        g = np.sort(g[g > 0])[::-1]
        best = 0.0
        for k in range(1, len(g) + 1):
            level = (budget + np.sum(1.0 / g[:k])) / k
            p = level - 1.0 / g[:k]
            if p[-1] < 0:
                break
            best = float(np.sum(np.log2(1.0 + p * g[:k])))
        return best

    scored = []
    subs = np.arange(nsub)
    for combo in itertools.product(range(len(options)), repeat=nsub):
        idx = np.array(combo)
        pu_ub = pu_b[subs, idx, :].sum(axis=0)
        if np.any(pu_ub < instance.rate_req - 1e-12):
            continue  # provably infeasible
        # SU bound: each SU water-fills its whole budget over its own
        # assigned subcarriers
        su_ub = 0.0
        for s in range(instance.num_sus):
            on = subs[su_of[idx] == s]
            if on.size:
                g = instance.su_bs_gain[s, on] / instance.noise_var
                su_ub += weights[s] * _waterfill(
                    g, float(instance.peak_power[su_node(kp, s)]))
        scored.append((su_ub, combo))
    scored.sort(reverse=True)

    best_val, best_assign = None, None
    for su_ub, combo in scored:
        if best_val is not None and su_ub <= best_val:
            break  # upper bound can no longer beat the incumbent
        assignment = [options[i] for i in combo]
        sol = _solve_assignment(instance, assignment, weights)
        if sol is None:
            continue
        if best_val is None or sol[0] > best_val:
            best_val, best_assign = sol[0], assignment
    return best_val, best_assign
