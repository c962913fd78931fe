"""Dual decomposition: per-subcarrier candidate search plus the outer
subgradient-based ellipsoid loop over the power and rate multipliers.

The dual function is evaluated subcarrier by subcarrier; on each
subcarrier every (mode, users) candidate is solved in closed form and
the best kept.  The returned dual value is the value of the extracted
(always feasible per-subcarrier) solution; a certified upper bound that
also majorizes the inexactly solved two-way candidates is tracked
separately so weak duality statements remain sound.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from ._kernels import eval_dual_kernel, twoway_solve
from .model import (DualState, Mode, NetworkInstance, SubcarrierCandidate,
                    pu_node, su_node)


@dataclass(frozen=True)
class SolverOptions:
    """Knobs for the ellipsoid loop and the two-way inner solves."""

    tol_abs: float = 1e-4
    tol_rel: float = 1e-6
    max_iters: int | None = None  # default 2000 * dual dimension
    init_center: float = 1.0
    init_radius: float | None = None  # default 10 * sqrt(dual dimension)
    multiplier_floor: float = 1e-9
    inner_tol: float = 1e-5
    inner_max_iters: int = 200
    prune: bool = True
    collect_trace: bool = False

    def resolved_max_iters(self, dim: int) -> int:
        return 2000 * dim if self.max_iters is None else self.max_iters

    def resolved_radius(self, dim: int) -> float:
        return 10.0 * np.sqrt(dim) if self.init_radius is None else self.init_radius


@dataclass
class EllipsoidState:
    """Ellipsoid {x : (x-c)^T shape^{-1} (x-c) <= 1} plus best-so-far."""

    center: np.ndarray
    shape: np.ndarray
    iteration: int = 0
    best_value: float = np.inf
    best_center: np.ndarray | None = None


@dataclass(frozen=True)
class DualEvaluation:
    """One dual-function evaluation (raw per-subcarrier winner arrays)."""

    value: float
    upper_bound: float
    subgradient: np.ndarray
    winner_row: np.ndarray  # (N,)
    node_power: np.ndarray  # (num_nodes, N)
    pu_rate: np.ndarray  # (2*K_P, N)
    su_rate: np.ndarray  # (K_S, N)


@dataclass(frozen=True)
class DualResult:
    dual_state: DualState
    dual_value: float
    upper_bound: float
    candidates: tuple  # N SubcarrierCandidates at dual_state
    evaluation: DualEvaluation
    iterations: int
    converged: bool
    trace: tuple = ()


def num_candidate_rows(num_pairs: int, num_sus: int) -> int:
    """Rows in the candidate enumeration (== candidate count formula)."""
    return 1 + 2 * num_pairs + num_sus + 3 * num_pairs * num_sus


def row_direct_pu(num_pairs: int, num_sus: int, pair: int, direction: int) -> int:
    return 1 + 2 * pair + direction


def row_direct_su(num_pairs: int, num_sus: int, su: int) -> int:
    return 1 + 2 * num_pairs + su


def row_oneway(num_pairs: int, num_sus: int, pair: int, direction: int, su: int) -> int:
    return 1 + 2 * num_pairs + num_sus + (2 * pair + direction) * num_sus + su


def row_twoway(num_pairs: int, num_sus: int, pair: int, su: int) -> int:
    return (1 + 2 * num_pairs + num_sus + 2 * num_pairs * num_sus
            + pair * num_sus + su)


def full_mask(instance: NetworkInstance) -> np.ndarray:
    rows = num_candidate_rows(instance.num_pairs, instance.num_sus)
    return np.ones((rows, instance.num_subcarriers), dtype=np.bool_)


def _scaled_gains(instance: NetworkInstance):
    s2 = instance.noise_var
    return (np.ascontiguousarray(instance.direct_gain / s2),
            np.ascontiguousarray(instance.cross_gain_1 / s2),
            np.ascontiguousarray(instance.cross_gain_2 / s2),
            np.ascontiguousarray(instance.su_bs_gain / s2))


def _effective(dual: DualState, floor: float):
    """Floor the power multipliers (closed forms divide by them) and clip
    the rate multipliers at zero."""
    return (np.maximum(dual.lam_pu, floor), np.maximum(dual.lam_su, floor),
            np.maximum(dual.beta, 0.0))


def evaluate_dual(instance: NetworkInstance, dual: DualState,
                  opts: SolverOptions | None = None,
                  mask: np.ndarray | None = None,
                  weights: np.ndarray | None = None,
                  _gains=None) -> DualEvaluation:
    """Dual function value, subgradient and per-subcarrier winners."""
    if opts is None:
        opts = SolverOptions()
    if mask is None:
        mask = full_mask(instance)
    if weights is None:
        weights = np.ones(instance.num_sus)
    else:
        weights = np.asarray(weights, dtype=float)
    gains = _scaled_gains(instance) if _gains is None else _gains
    lam_pu, lam_su, beta = _effective(dual, opts.multiplier_floor)
    gsum, ubsum, widx, wpow, wr_pu, wr_su = eval_dual_kernel(
        *gains, lam_pu, lam_su, beta, weights,
        np.ascontiguousarray(mask), opts.inner_tol, opts.inner_max_iters,
        opts.prune)
    kp = instance.num_pairs
    pmax = instance.peak_power
    const = (float(lam_pu @ pmax[:2 * kp]) + float(lam_su @ pmax[2 * kp:])
             - float(beta @ instance.rate_req))
    sub_lam = pmax - wpow.sum(axis=1)
    sub_beta = wr_pu.sum(axis=1) - instance.rate_req
    subgrad = np.concatenate([sub_lam, sub_beta])
    return DualEvaluation(value=gsum + const, upper_bound=ubsum + const,
                          subgradient=subgrad, winner_row=widx,
                          node_power=wpow, pu_rate=wr_pu, su_rate=wr_su)


def decode_candidates(instance: NetworkInstance, dual: DualState,
                      ev: DualEvaluation,
                      weights: np.ndarray | None = None,
                      opts: SolverOptions | None = None) -> tuple:
    """Turn a DualEvaluation's winner arrays into SubcarrierCandidates."""
    if opts is None:
        opts = SolverOptions()
    if weights is None:
        weights = np.ones(instance.num_sus)
    lam_pu, lam_su, beta = _effective(dual, opts.multiplier_floor)
    kp, ks = instance.num_pairs, instance.num_sus
    a, b, c = 1 + 2 * kp, 1 + 2 * kp + ks, 1 + 2 * kp + ks + 2 * kp * ks
    out = []
    for n in range(instance.num_subcarriers):
        row = int(ev.winner_row[n])
        powers = {u: float(ev.node_power[u, n])
                  for u in range(instance.num_nodes) if ev.node_power[u, n] > 0.0}
        rates = {}
        for p in range(2 * kp):
            if ev.pu_rate[p, n] > 0.0:
                rates[p] = float(ev.pu_rate[p, n])
        for s in range(ks):
            if ev.su_rate[s, n] > 0.0:
                rates[su_node(kp, s)] = float(ev.su_rate[s, n])
        value = (sum(weights[s] * ev.su_rate[s, n] for s in range(ks))
                 + sum(beta[p] * ev.pu_rate[p, n] for p in range(2 * kp))
                 - sum(lam_pu[u] * ev.node_power[u, n] for u in range(2 * kp))
                 - sum(lam_su[s] * ev.node_power[2 * kp + s, n] for s in range(ks)))
        if row == 0:
            out.append(SubcarrierCandidate(mode=Mode.IDLE))
        elif row < a:
            k, d = divmod(row - 1, 2)
            out.append(SubcarrierCandidate(mode=Mode.DIRECT_PU, pair=k,
                                           direction=d, powers=powers,
                                           rates=rates, dual_value=float(value)))
        elif row < b:
            s = row - a
            out.append(SubcarrierCandidate(mode=Mode.DIRECT_SU, su=s,
                                           powers=powers, rates=rates,
                                           t_su=1.0, dual_value=float(value)))
        elif row < c:
            kd, s = divmod(row - b, ks)
            k, d = divmod(kd, 2)
            out.append(SubcarrierCandidate(mode=Mode.ONEWAY_DF, pair=k,
                                           direction=d, su=s, powers=powers,
                                           rates=rates, t_su=0.0,
                                           dual_value=float(value)))
        else:
            k, s = divmod(row - c, ks)
            out.append(SubcarrierCandidate(mode=Mode.TWOWAY_DF, pair=k, su=s,
                                           powers=powers, rates=rates,
                                           dual_value=float(value)))
    return tuple(out)


def best_candidate_on_subcarrier(n: int, instance: NetworkInstance,
                                 dual: DualState,
                                 opts: SolverOptions | None = None,
                                 mask: np.ndarray | None = None,
                                 weights: np.ndarray | None = None
                                 ) -> SubcarrierCandidate:
    """Winning candidate on subcarrier n (exhaustive, tie-break by mode
    ordinal then user indices)."""
    sub = NetworkInstance(
        direct_gain=instance.direct_gain[:, n:n + 1],
        cross_gain_1=instance.cross_gain_1[:, :, n:n + 1],
        cross_gain_2=instance.cross_gain_2[:, :, n:n + 1],
        su_bs_gain=instance.su_bs_gain[:, n:n + 1],
        peak_power=instance.peak_power, rate_req=instance.rate_req,
        noise_var=instance.noise_var)
    m = None if mask is None else np.ascontiguousarray(mask[:, n:n + 1])
    ev = evaluate_dual(sub, dual, opts=opts, mask=m, weights=weights)
    return decode_candidates(sub, dual, ev, weights=weights, opts=opts)[0]


def ellipsoid_cut(center: np.ndarray, shape: np.ndarray,
                  direction: np.ndarray):
    """One central-cut ellipsoid update along `direction`.

    Returns (new_center, new_shape, sqrt(direction^T shape direction)).
    The new ellipsoid contains the half-ellipsoid
    {x : direction^T (x - center) <= 0}.
    """
    dim = center.size
    w = shape @ direction
    den = float(direction @ w)
    if den <= 0.0:
        return center, shape, 0.0
    norm = np.sqrt(den)
    gt = w / norm
    new_center = center - gt / (dim + 1.0)
    new_shape = (dim * dim / (dim * dim - 1.0)) * (
        shape - (2.0 / (dim + 1.0)) * np.outer(gt, gt))
    new_shape = 0.5 * (new_shape + new_shape.T)
    return new_center, new_shape, norm


def solve_dual(instance: NetworkInstance,
               opts: SolverOptions | None = None,
               mask: np.ndarray | None = None,
               weights: np.ndarray | None = None,
               init_state: DualState | None = None) -> DualResult:
    """Minimize the dual function over nonnegative multipliers.

    Feasibility cuts push the center back into the nonnegative orthant;
    objective cuts use the winner-derived subgradient.  Stops when
    sqrt(s^T P s) (an upper bound on the remaining dual improvement)
    drops below tol_abs + tol_rel * |best value|.
    """
    if opts is None:
        opts = SolverOptions()
    dim = instance.dual_dim
    kp, ks = instance.num_pairs, instance.num_sus
    if mask is None:
        mask = full_mask(instance)
    mask = np.ascontiguousarray(mask, dtype=np.bool_)
    gains = _scaled_gains(instance)
    max_iters = opts.resolved_max_iters(dim)
    radius = opts.resolved_radius(dim)

    if init_state is not None:
        x = init_state.as_vector().copy()
    else:
        x = np.full(dim, float(opts.init_center))
    shape = np.eye(dim) * radius * radius
    best_g = np.inf
    best_x = x.copy()
    best_ub = np.inf
    trace = []
    converged = False
    it = 0
    while it < max_iters:
        it += 1
        if np.any(x < 0.0):
            i = int(np.argmin(x))
            direction = np.zeros(dim)
            direction[i] = -1.0
            x, shape, norm = ellipsoid_cut(x, shape, direction)
            if norm <= 0.0:
                break
            continue
        dual = DualState.from_vector(x, kp, ks)
        ev = evaluate_dual(instance, dual, opts=opts, mask=mask,
                           weights=weights, _gains=gains)
        if ev.value < best_g:
            best_g = ev.value
            best_x = x.copy()
        if ev.upper_bound < best_ub:
            best_ub = ev.upper_bound
        norm0 = float(np.sqrt(max(ev.subgradient @ shape @ ev.subgradient, 0.0)))
        if opts.collect_trace:
            trace.append((it, ev.value, best_g, norm0))
        if norm0 < opts.tol_abs + opts.tol_rel * abs(best_g):
            converged = True
            break
        x, shape, norm = ellipsoid_cut(x, shape, ev.subgradient)
        if norm <= 0.0:
            converged = True
            break

    best_dual = DualState.from_vector(np.maximum(best_x, 0.0), kp, ks)
    ev = evaluate_dual(instance, best_dual, opts=opts, mask=mask,
                       weights=weights, _gains=gains)
    if ev.upper_bound < best_ub:
        best_ub = ev.upper_bound
    candidates = decode_candidates(instance, best_dual, ev, weights=weights,
                                   opts=opts)
    return DualResult(dual_state=best_dual, dual_value=ev.value,
                      upper_bound=float(best_ub), candidates=candidates,
                      evaluation=ev, iterations=it, converged=converged,
                      trace=tuple(trace))
