"""Shared fixtures.

Expensive artifacts (the exact-dynamics model, the hybrid cycle, small
transcriptions) are session-scoped: JAX compilation dominates their cost
and every module reuses them read-only.
"""
import numpy as np
import pytest

from musclegait.fileio import load_model, load_muscles, load_opt, load_sim
from musclegait.hybrid import build_gamma
from musclegait.model import PlanarBiped


@pytest.fixture(scope="session")
def model():
    return PlanarBiped(load_model())


@pytest.fixture(scope="session")
def gamma():
    return build_gamma()


@pytest.fixture(scope="session")
def muscles():
    return load_muscles()


@pytest.fixture(scope="session")
def opt_config():
    return load_opt()


@pytest.fixture(scope="session")
def sim_config():
    return load_sim()


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260826)
