"""Shared helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from crnalloc.channel import generate_instance
from crnalloc.model import ScenarioConfig
from crnalloc.persub import ModeInputs


def scenario(num_subcarriers=4, num_pu_pairs=1, num_sus=2,
             peak_power_per_user=40.0, pu_rate_requirement=1.0,
             **kw) -> ScenarioConfig:
    """A small, fast scenario; keyword overrides pass straight through."""
    return ScenarioConfig(
        num_subcarriers=num_subcarriers, num_pu_pairs=num_pu_pairs,
        num_sus=num_sus, peak_power_per_user=peak_power_per_user,
        pu_rate_requirement=pu_rate_requirement, **kw)


def make_instance(seed=0, **kw):
    """(NetworkInstance, NodeLayout) from a small scenario."""
    return generate_instance(scenario(**kw), seed=seed)


def random_gain(rng) -> float:
    return float(10.0 ** rng.uniform(-2, 2))


def random_multiplier(rng) -> float:
    return float(10.0 ** rng.uniform(-2, 1))


def random_mode_inputs(rng, su_weight=1.0) -> ModeInputs:
    """Gains log-uniform in [1e-2, 1e2], multipliers in [1e-2, 10]."""
    return ModeInputs(
        gamma=random_gain(rng), gamma1=random_gain(rng),
        gamma2=random_gain(rng), gamma_s=random_gain(rng),
        lam_p1=random_multiplier(rng), lam_p2=random_multiplier(rng),
        lam_s=random_multiplier(rng), beta_p1=random_multiplier(rng),
        beta_p2=random_multiplier(rng), su_weight=su_weight)


@pytest.fixture(scope="session")
def midsize_instance():
    """One mid-sized realization shared by read-only tests."""
    instance, layout = make_instance(
        seed=7, num_subcarriers=16, num_pu_pairs=1, num_sus=2,
        peak_power_per_user=160.0, pu_rate_requirement=2.0,
        noise_variance=100.0)
    return instance, layout
