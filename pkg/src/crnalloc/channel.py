"""Channel realization generator.

Geometry: PU nodes uniform in a square area, SUs uniform in a disk
around the BS at the square's center.  Links combine a power-law path
loss with log-normal shadowing and frequency-selective Rayleigh fading
sampled on the N subcarriers from an exponentially decaying tap profile.

Conventions: the path-loss reference gain is 1 at 1 km (0 dB shadowing),
so "transmit SNR per subcarrier" in dB equals per-subcarrier power in dB
for a 1-km reference link over unit noise.  Total bandwidth is 1 MHz,
subcarrier spacing 1/N MHz.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import NetworkInstance, ScenarioConfig

D_MIN_KM = 0.01  # clamp: uniform placement can put nodes arbitrarily close
TOTAL_BANDWIDTH_MHZ = 1.0
NUM_TAPS = 6
TAP_DECAY_US = 1.0


@dataclass(frozen=True)
class NodeLayout:
    """Positions in km; PU nodes flat-indexed as in model.py."""

    pu_positions: np.ndarray  # (2*K_P, 2)
    su_positions: np.ndarray  # (K_S, 2)
    bs_position: np.ndarray  # (2,)

    def pu_su_distance(self, pu_flat: int, su: int) -> float:
        return float(np.linalg.norm(self.pu_positions[pu_flat] - self.su_positions[su]))

    def pu_pu_distance(self, a: int, b: int) -> float:
        return float(np.linalg.norm(self.pu_positions[a] - self.pu_positions[b]))

    def su_bs_distance(self, su: int) -> float:
        return float(np.linalg.norm(self.su_positions[su] - self.bs_position))


@dataclass(frozen=True)
class TapProfile:
    delays_us: np.ndarray
    mean_powers: np.ndarray  # normalized to sum 1

    def __post_init__(self):
        object.__setattr__(self, "delays_us", np.asarray(self.delays_us, dtype=float))
        p = np.asarray(self.mean_powers, dtype=float)
        object.__setattr__(self, "mean_powers", p)
        if p.size != self.delays_us.size:
            raise ValueError("delays and powers must have the same length")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("tap mean powers must sum to 1")

    @property
    def num_taps(self) -> int:
        return self.delays_us.size

    @classmethod
    def exponential(cls, max_delay_us: float, num_taps: int = NUM_TAPS,
                    decay_us: float = TAP_DECAY_US) -> "TapProfile":
        delays = np.linspace(0.0, max_delay_us, num_taps)
        powers = np.exp(-delays / decay_us)
        return cls(delays_us=delays, mean_powers=powers / powers.sum())


def place_nodes(config: ScenarioConfig, rng: np.random.Generator) -> NodeLayout:
    """Uniform PU placement in the square, SUs uniform in the BS disk."""
    side = config.area_side_km
    pu = rng.uniform(0.0, side, size=(config.num_pu_nodes, 2))
    bs = np.array([side / 2.0, side / 2.0])
    radius = config.cell_radius_km * np.sqrt(rng.uniform(size=config.num_sus))
    angle = rng.uniform(0.0, 2.0 * np.pi, size=config.num_sus)
    su = bs + np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)
    return NodeLayout(pu_positions=pu, su_positions=su, bs_position=bs)


def link_gain_large_scale(distance_km: float, config: ScenarioConfig,
                          shadow_draw_db: float = 0.0) -> float:
    """Power-law path loss times log-normal shadowing, reference gain 1 at 1 km."""
    d = max(distance_km, D_MIN_KM)
    return d ** (-config.path_loss_exponent) * 10.0 ** (shadow_draw_db / 10.0)


def response_from_amplitudes(amplitudes: np.ndarray, delays_us: np.ndarray,
                             num_subcarriers: int,
                             subcarrier_spacing_mhz: float | None = None) -> np.ndarray:
    """Per-subcarrier power gains |sum_l h_l e^{-j 2 pi n df tau_l}|^2."""
    if subcarrier_spacing_mhz is None:
        subcarrier_spacing_mhz = TOTAL_BANDWIDTH_MHZ / num_subcarriers
    n = np.arange(num_subcarriers)
    phase = -2j * np.pi * subcarrier_spacing_mhz * np.outer(n, delays_us)
    h = np.exp(phase) @ np.asarray(amplitudes)
    return np.abs(h) ** 2


def frequency_response(taps: TapProfile, rng: np.random.Generator,
                       num_subcarriers: int) -> np.ndarray:
    """Sample one Rayleigh realization; per-subcarrier gains average to 1."""
    std = np.sqrt(taps.mean_powers / 2.0)
    amps = std * (rng.standard_normal(taps.num_taps)
                  + 1j * rng.standard_normal(taps.num_taps))
    return response_from_amplitudes(amps, taps.delays_us, num_subcarriers)


def generate_instance(config: ScenarioConfig, seed: int | None = None,
                      disable_shadowing: bool = False,
                      disable_fading: bool = False
                      ) -> tuple[NetworkInstance, NodeLayout]:
    """Draw one full channel realization (and the layout, for FTM use)."""
    rng = np.random.default_rng(config.rng_seed if seed is None else seed)
    layout = place_nodes(config, rng)
    taps = TapProfile.exponential(config.max_delay_spread_us)
    n = config.num_subcarriers
    kp, ks = config.num_pu_pairs, config.num_sus

    def link(dist: float) -> np.ndarray:
        shadow = 0.0 if disable_shadowing else rng.normal(0.0, config.shadowing_std_db)
        large = link_gain_large_scale(dist, config, shadow)
        small = np.ones(n) if disable_fading else frequency_response(taps, rng, n)
        return large * small

    direct = np.empty((kp, n))
    cross1 = np.empty((kp, ks, n))
    cross2 = np.empty((kp, ks, n))
    subs = np.empty((ks, n))
    for k in range(kp):
        direct[k] = link(layout.pu_pu_distance(2 * k, 2 * k + 1))
        for s in range(ks):
            cross1[k, s] = link(layout.pu_su_distance(2 * k, s))
            cross2[k, s] = link(layout.pu_su_distance(2 * k + 1, s))
    for s in range(ks):
        subs[s] = link(layout.su_bs_distance(s))

    num_nodes = 2 * kp + ks
    instance = NetworkInstance(
        direct_gain=direct, cross_gain_1=cross1, cross_gain_2=cross2,
        su_bs_gain=subs,
        peak_power=np.full(num_nodes, config.peak_power_per_user),
        rate_req=np.full(2 * kp, config.pu_rate_requirement),
        noise_var=config.noise_variance)
    return instance, layout


def dump_instance(instance: NetworkInstance, layout: NodeLayout | None = None) -> str:
    """Serialize an instance (and optional layout) to a JSON document."""
    doc = {
        "schema": "crnalloc-instance-v1",
        "num_pu_pairs": instance.num_pairs,
        "num_sus": instance.num_sus,
        "num_subcarriers": instance.num_subcarriers,
        "noise_var": instance.noise_var,
        "direct_gain": instance.direct_gain.tolist(),
        "cross_gain_1": instance.cross_gain_1.tolist(),
        "cross_gain_2": instance.cross_gain_2.tolist(),
        "su_bs_gain": instance.su_bs_gain.tolist(),
        "peak_power": instance.peak_power.tolist(),
        "rate_req": instance.rate_req.tolist(),
    }
    if layout is not None:
        doc["layout"] = {
            "pu_positions": layout.pu_positions.tolist(),
            "su_positions": layout.su_positions.tolist(),
            "bs_position": layout.bs_position.tolist(),
        }
    return json.dumps(doc, indent=1)


def load_instance(text: str) -> tuple[NetworkInstance, NodeLayout | None]:
    doc = json.loads(text)
    if doc.get("schema") != "crnalloc-instance-v1":
        raise ValueError("not a crnalloc instance document")
    instance = NetworkInstance(
        direct_gain=np.array(doc["direct_gain"]),
        cross_gain_1=np.array(doc["cross_gain_1"]),
        cross_gain_2=np.array(doc["cross_gain_2"]),
        su_bs_gain=np.array(doc["su_bs_gain"]),
        peak_power=np.array(doc["peak_power"]),
        rate_req=np.array(doc["rate_req"]),
        noise_var=float(doc["noise_var"]))
    layout = None
    if "layout" in doc:
        lay = doc["layout"]
        layout = NodeLayout(pu_positions=np.array(lay["pu_positions"]),
                            su_positions=np.array(lay["su_positions"]),
                            bs_position=np.array(lay["bs_position"]))
    return instance, layout
