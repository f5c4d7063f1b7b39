import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stpnet import ModelParams, SigmoidRate


@pytest.fixture(scope="session")
def rate_a3():
    return SigmoidRate(3.0)


@pytest.fixture(scope="session")
def paper_params(rate_a3):
    """The published example: kappa = 107.78/108 just under the D = 1
    coupling threshold, three fixed points."""
    return ModelParams(alpha=107.78, beta=50.0, lam=2.16, rate=rate_a3)


@pytest.fixture(scope="session")
def unit_params(rate_a3):
    """kappa = 1: same fixed-point structure, slow decay; fluctuations at
    the upper equilibrium stay small relative to unit-scale balls."""
    return ModelParams(alpha=1.0, beta=1.0, lam=1.0, rate=rate_a3)


@pytest.fixture(scope="session")
def mild_params(rate_a3):
    """Moderate coupling and decay: sustained activity at small N."""
    return ModelParams(alpha=2.0, beta=1.0, lam=1.0, rate=rate_a3)
