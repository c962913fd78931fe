"""Domain types shared by the solver stack.

Index conventions
-----------------
PU pair k (0-based) owns the two nodes (k, 0) and (k, 1); globally node
(k, i) has flat index ``2*k + i``.  SU s has flat node index
``2*K_P + s``.  A "direction" d of pair k is the ordered link from
source node (k, d) to destination node (k, 1-d).

All rates are bits per OFDM symbol, all powers and gains are linear and
relative to unit noise unless the instance overrides ``noise_var``.
dB conversions happen only at the CLI boundary.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

LN2 = float(np.log(2.0))


class Mode(enum.Enum):
    """Per-subcarrier transmission modes, in tie-break (ordinal) order."""

    IDLE = 0
    DIRECT_PU = 1
    DIRECT_SU = 2
    ONEWAY_DF = 3
    TWOWAY_DF = 4


def pu_node(pair: int, i: int) -> int:
    return 2 * pair + i


def su_node(num_pairs: int, su: int) -> int:
    return 2 * num_pairs + su


def shannon_rate(snr) -> float:
    """C(x) = log2(1 + x)."""
    return np.log1p(snr) / LN2


@dataclass(frozen=True)
class ScenarioConfig:
    """Static description of one simulated network scenario."""

    num_subcarriers: int = 64
    num_pu_pairs: int = 2
    num_sus: int = 4
    peak_power_per_user: float = 640.0  # total over subcarriers, linear
    pu_rate_requirement: float = 5.0  # bits per OFDM symbol, per PU node
    noise_variance: float = 1.0
    path_loss_exponent: float = 4.0
    shadowing_std_db: float = 5.8
    max_delay_spread_us: float = 5.0
    su_weights: tuple[float, ...] | None = None
    area_side_km: float = 1.0
    cell_radius_km: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.num_subcarriers < 1:
            raise ValueError("num_subcarriers must be >= 1")
        if self.num_pu_pairs < 1:
            raise ValueError("num_pu_pairs must be >= 1")
        if self.num_sus < 1:
            raise ValueError("num_sus must be >= 1")
        if not self.peak_power_per_user > 0:
            raise ValueError("peak_power_per_user must be > 0")
        if self.pu_rate_requirement < 0:
            raise ValueError("pu_rate_requirement must be >= 0")
        if not self.noise_variance > 0:
            raise ValueError("noise_variance must be > 0")
        if self.su_weights is not None:
            if len(self.su_weights) != self.num_sus:
                raise ValueError("su_weights length must equal num_sus")
            if any(w < 0 for w in self.su_weights):
                raise ValueError("su_weights must be nonnegative")

    @property
    def num_pu_nodes(self) -> int:
        return 2 * self.num_pu_pairs

    @property
    def num_nodes(self) -> int:
        return self.num_pu_nodes + self.num_sus

    def weights_array(self) -> np.ndarray:
        if self.su_weights is None:
            return np.ones(self.num_sus)
        return np.asarray(self.su_weights, dtype=float)


def _frozen(a: np.ndarray) -> np.ndarray:
    # always copy: freezing a caller-owned buffer in place would be a
    # surprising side effect
    a = np.array(a, dtype=float, order="C")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NetworkInstance:
    """One channel realization: all per-subcarrier link power gains.

    Channel reciprocity is implicit: one gain per unordered link.
    """

    direct_gain: np.ndarray  # (K_P, N)       node (k,0) <-> (k,1)
    cross_gain_1: np.ndarray  # (K_P, K_S, N)  node (k,0) <-> SU s
    cross_gain_2: np.ndarray  # (K_P, K_S, N)  node (k,1) <-> SU s
    su_bs_gain: np.ndarray  # (K_S, N)       SU s <-> BS
    peak_power: np.ndarray  # (2*K_P + K_S,)
    rate_req: np.ndarray  # (2*K_P,)
    noise_var: float = 1.0

    def __post_init__(self):
        for name in ("direct_gain", "cross_gain_1", "cross_gain_2",
                     "su_bs_gain", "peak_power", "rate_req"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def num_pairs(self) -> int:
        return self.direct_gain.shape[0]

    @property
    def num_sus(self) -> int:
        return self.su_bs_gain.shape[0]

    @property
    def num_subcarriers(self) -> int:
        return self.su_bs_gain.shape[1]

    @property
    def num_pu_nodes(self) -> int:
        return 2 * self.num_pairs

    @property
    def num_nodes(self) -> int:
        return self.num_pu_nodes + self.num_sus

    @property
    def dual_dim(self) -> int:
        return 4 * self.num_pairs + self.num_sus


@dataclass(frozen=True)
class DualState:
    """Multipliers: lam_* price power, beta prices PU rate shortfall."""

    lam_pu: np.ndarray  # (2*K_P,)
    lam_su: np.ndarray  # (K_S,)
    beta: np.ndarray  # (2*K_P,)

    def __post_init__(self):
        for name in ("lam_pu", "lam_su", "beta"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def dim(self) -> int:
        return self.lam_pu.size + self.lam_su.size + self.beta.size

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.lam_pu, self.lam_su, self.beta])

    @classmethod
    def from_vector(cls, x: np.ndarray, num_pairs: int, num_sus: int) -> "DualState":
        x = np.asarray(x, dtype=float)
        p = 2 * num_pairs
        if x.size != 2 * p + num_sus:
            raise ValueError("dual vector has wrong dimension")
        return cls(lam_pu=x[:p], lam_su=x[p:p + num_sus], beta=x[p + num_sus:])

    @classmethod
    def zeros(cls, num_pairs: int, num_sus: int) -> "DualState":
        p = 2 * num_pairs
        return cls(np.zeros(p), np.zeros(num_sus), np.zeros(p))

    def is_nonnegative(self) -> bool:
        return bool(self.lam_pu.min(initial=0.0) >= 0
                    and self.lam_su.min(initial=0.0) >= 0
                    and self.beta.min(initial=0.0) >= 0)


@dataclass(frozen=True)
class SubcarrierCandidate:
    """One evaluated (mode, users, powers, rates) tuple on one subcarrier."""

    mode: Mode
    pair: int | None = None
    direction: int | None = None
    su: int | None = None
    powers: dict = field(default_factory=dict)  # flat node index -> power
    rates: dict = field(default_factory=dict)  # flat node index -> rate
    t_su: float = 0.0
    dual_value: float = 0.0
    unbounded: bool = False
    oneway_hint: bool = False

    def total_power(self, node: int) -> float:
        return self.powers.get(node, 0.0)


IDLE_CANDIDATE = SubcarrierCandidate(mode=Mode.IDLE)


@dataclass(frozen=True)
class Allocation:
    """Full N-subcarrier assignment with per-user totals."""

    candidates: tuple  # N SubcarrierCandidates
    node_power: np.ndarray  # (num_nodes,)
    pu_rate: np.ndarray  # (2*K_P,) rate delivered *to* each PU node
    su_rate: np.ndarray  # (K_S,) unweighted

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        for name in ("node_power", "pu_rate", "su_rate"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @classmethod
    def from_candidates(cls, instance: NetworkInstance, candidates) -> "Allocation":
        kp, ks = instance.num_pairs, instance.num_sus
        node_power = np.zeros(instance.num_nodes)
        pu_rate = np.zeros(2 * kp)
        su_rate = np.zeros(ks)
        for cand in candidates:
            for node, p in cand.powers.items():
                node_power[node] += p
            for node, r in cand.rates.items():
                if node < 2 * kp:
                    pu_rate[node] += r
                else:
                    su_rate[node - 2 * kp] += r
        return cls(candidates=tuple(candidates), node_power=node_power,
                   pu_rate=pu_rate, su_rate=su_rate)

    def weighted_su_sum_rate(self, weights=None) -> float:
        if weights is None:
            return float(self.su_rate.sum())
        return float(np.dot(np.asarray(weights, dtype=float), self.su_rate))


@dataclass(frozen=True)
class FeasibilityReport:
    power_used: np.ndarray
    power_limit: np.ndarray
    rate_achieved: np.ndarray
    rate_required: np.ndarray
    max_power_violation: float  # relative
    max_rate_shortfall: float  # relative
    feasible: bool
    violations: tuple


@dataclass(frozen=True)
class SolverReport:
    dual_bound: float
    primal_sum_rate: float
    feasible: bool
    max_power_violation: float
    max_rate_shortfall: float
    iterations: int
    wall_time: float


def validate_instance(instance: NetworkInstance, dual: DualState | None = None) -> list:
    """Return a list of invariant violations (empty iff well-formed)."""
    v = []
    kp, ks, n = instance.num_pairs, instance.num_sus, instance.num_subcarriers
    shapes = {
        "direct_gain": (kp, n),
        "cross_gain_1": (kp, ks, n),
        "cross_gain_2": (kp, ks, n),
        "su_bs_gain": (ks, n),
        "peak_power": (2 * kp + ks,),
        "rate_req": (2 * kp,),
    }
    for name, shape in shapes.items():
        arr = getattr(instance, name)
        if arr.shape != shape:
            v.append(f"{name}: shape {arr.shape} != expected {shape}")
            continue
        if not np.all(np.isfinite(arr)):
            idx = np.argwhere(~np.isfinite(arr))[0]
            v.append(f"{name}{tuple(idx)}: non-finite value")
        if name in ("direct_gain", "cross_gain_1", "cross_gain_2", "su_bs_gain"):
            if np.any(arr < 0):
                idx = np.argwhere(arr < 0)[0]
                v.append(f"{name}{tuple(idx)}: negative gain {arr[tuple(idx)]}")
    if np.any(instance.peak_power <= 0):
        i = int(np.argmax(instance.peak_power <= 0))
        v.append(f"peak_power[{i}]: must be > 0")
    if np.any(instance.rate_req < 0):
        i = int(np.argmax(instance.rate_req < 0))
        v.append(f"rate_req[{i}]: must be >= 0")
    if not instance.noise_var > 0:
        v.append("noise_var: must be > 0")
    if dual is not None:
        if dual.dim != instance.dual_dim:
            v.append(f"dual state dimension {dual.dim} != 4*K_P+K_S = {instance.dual_dim}")
        elif not dual.is_nonnegative():
            v.append("dual state has negative components")
    return v


def candidate_rates_from_powers(instance: NetworkInstance, n: int,
                                cand: SubcarrierCandidate) -> dict:
    """Recompute a candidate's achieved rates from its powers and the gains.

    For two-way relaying the achievable pair is a region; the original
    rate proportions are kept and clipped into the region defined by the
    (possibly rescaled) powers.
    """
    s2 = instance.noise_var
    kp = instance.num_pairs
    mode = cand.mode
    if mode is Mode.IDLE:
        return {}
    if mode is Mode.DIRECT_PU:
        k, d = cand.pair, cand.direction
        src, dst = pu_node(k, d), pu_node(k, 1 - d)
        g = instance.direct_gain[k, n] / s2
        return {dst: float(shannon_rate(cand.powers.get(src, 0.0) * g))}
    if mode is Mode.DIRECT_SU:
        s = cand.su
        node = su_node(kp, s)
        g = instance.su_bs_gain[s, n] / s2
        return {node: float(shannon_rate(cand.powers.get(node, 0.0) * g))}
    if mode is Mode.ONEWAY_DF:
        k, d, s = cand.pair, cand.direction, cand.su
        src, dst = pu_node(k, d), pu_node(k, 1 - d)
        rnode = su_node(kp, s)
        g = instance.direct_gain[k, n] / s2
        g1 = (instance.cross_gain_1 if d == 0 else instance.cross_gain_2)[k, s, n] / s2
        g2 = (instance.cross_gain_2 if d == 0 else instance.cross_gain_1)[k, s, n] / s2
        pp = cand.powers.get(src, 0.0)
        ps = cand.powers.get(rnode, 0.0)
        t = cand.t_su
        out = {}
        if t < 1.0:
            hop1 = shannon_rate(pp * g1)
            hop2 = shannon_rate(pp * g + ps * g2)
            out[dst] = float((1.0 - t) / 2.0 * min(hop1, hop2))
        if t > 0.0:
            gs = instance.su_bs_gain[s, n] / s2
            out[rnode] = float(t * shannon_rate(ps * gs))
        return out
    if mode is Mode.TWOWAY_DF:
        k, s = cand.pair, cand.su
        n1, n2 = pu_node(k, 0), pu_node(k, 1)
        rnode = su_node(kp, s)
        g1 = instance.cross_gain_1[k, s, n] / s2
        g2 = instance.cross_gain_2[k, s, n] / s2
        p1 = cand.powers.get(n1, 0.0)
        p2 = cand.powers.get(n2, 0.0)
        ps = cand.powers.get(rnode, 0.0)
        b1 = 0.5 * min(shannon_rate(p2 * g2), shannon_rate(ps * g1))
        b2 = 0.5 * min(shannon_rate(p1 * g1), shannon_rate(ps * g2))
        b12 = 0.5 * shannon_rate(p1 * g1 + p2 * g2)
        r1 = min(cand.rates.get(n1, 0.0), b1)
        r2 = min(cand.rates.get(n2, 0.0), b2)
        tot = r1 + r2
        if tot > b12 > 0:
            r1 *= b12 / tot
            r2 *= b12 / tot
        elif tot > b12:
            r1 = r2 = 0.0
        return {n1: float(r1), n2: float(r2)}
    raise ValueError(f"unknown mode {mode}")


def feasibility_check(instance: NetworkInstance, allocation: Allocation,
                      eps_power: float = 1e-6, eps_rate: float = 1e-6) -> FeasibilityReport:
    """Check the peak-power and PU-rate constraints of an allocation."""
    if len(allocation.candidates) != instance.num_subcarriers:
        raise ValueError("allocation has wrong number of subcarriers")
    if allocation.node_power.size != instance.num_nodes:
        raise ValueError("allocation node_power dimension mismatch")
    power_used = allocation.node_power
    limit = instance.peak_power
    rate = allocation.pu_rate
    req = instance.rate_req
    violations = []
    pv = 0.0
    for u in range(instance.num_nodes):
        rel = (power_used[u] - limit[u]) / limit[u]
        pv = max(pv, rel)
        if power_used[u] > limit[u] * (1 + eps_power):
            violations.append(f"node {u}: power {power_used[u]:.6g} > limit {limit[u]:.6g}")
    rs = 0.0
    for p in range(instance.num_pu_nodes):
        if req[p] > 0:
            rel = (req[p] - rate[p]) / req[p]
            rs = max(rs, rel)
            if rate[p] < req[p] * (1 - eps_rate):
                violations.append(f"pu node {p}: rate {rate[p]:.6g} < required {req[p]:.6g}")
    return FeasibilityReport(
        power_used=power_used.copy(), power_limit=limit.copy(),
        rate_achieved=rate.copy(), rate_required=req.copy(),
        max_power_violation=float(pv), max_rate_shortfall=float(rs),
        feasible=not violations, violations=tuple(violations))
