"""
Shared fixtures: small and golden parameter sets, keys, oracles.

Small parameters (n = 8, k_g = 29) keep a full protocol run well under a
second; the golden set (n = 64, k_g = 35) is only used where a test needs
the canonical numbers.
"""

import numpy as np
import pytest

from src.ntcf_rlwe import build_params, gen_f
from src.random_oracle import RandomOracle


@pytest.fixture(scope="session")
def small_params():
    """n=8, m_bar=3, B_V=1, C_T=8, lambda=64 (k_g=29, m=32, B_P=81920)."""
    return build_params(8, m_bar=3, B_V=1, lam=64, C_T=8)


@pytest.fixture(scope="session")
def tiny_params():
    """Same ring as small_params with lambda=16, for repeated-trial experiments."""
    return build_params(8, m_bar=3, B_V=1, lam=16, C_T=8)


@pytest.fixture(scope="session")
def golden_params():
    return build_params(64, m_bar=3, B_V=1, lam=120, C_T=8)


@pytest.fixture(scope="session")
def small_keys(small_params):
    """(key, trapdoor) for small_params with a fixed seed."""
    return gen_f(small_params, np.random.default_rng(7))


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def oracle():
    return RandomOracle.deterministic()


@pytest.fixture
def lazy_oracle():
    return RandomOracle.lazy(np.random.default_rng(99))
