import sys
from pathlib import Path

import numpy as np
import pytest

# Add the repository root to the Python path
sys.path.append(str(Path(__file__).parent.parent.parent))

from src.model.core import Grid, MixtureParams, State, sample_initial, validate_params
from src.utils.presets import get_preset


@pytest.fixture
def params():
    """Standard validated mixture: a = 1, K = 1, gamma = 2, triangular viscosity."""
    return validate_params(MixtureParams(a=1.0, K1=1.0, K2=1.0, gamma1=2.0, gamma2=2.0, mu=((1.0, 0.0), (0.5, 1.0))))


@pytest.fixture
def grid():
    return Grid(32)


@pytest.fixture
def smooth_state(grid):
    return sample_initial(get_preset("smooth"), grid)


@pytest.fixture
def equilibrium_state(grid):
    return sample_initial(get_preset("equilibrium"), grid)


@pytest.fixture
def constant_state():
    """Factory for spatially constant states (velocities are not pinned to zero)."""

    def make(n: int, rho: float = 1.0, u: float = 0.0, t: float = 0.0) -> State:
        ones = np.ones(n + 1)
        return State(t, rho * ones, rho * ones, u * ones, u * ones)

    return make
