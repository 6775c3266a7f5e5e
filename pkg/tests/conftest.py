import numpy as np
import pytest

from qkfp import ModelParams, build_profile
from qkfp.grids import MomentumGrid, PhaseGrid, TorusGrid

P_MAX = 8.0


@pytest.fixture(scope="session")
def grid128():
    return MomentumGrid(128, P_MAX)


@pytest.fixture(scope="session")
def grid256():
    return MomentumGrid(256, P_MAX)


@pytest.fixture(scope="session")
def fermion_prof(grid128):
    return build_profile(ModelParams(kappa=-1, theta=1.0), grid128.nodes)


@pytest.fixture(scope="session")
def boson_prof(grid128):
    return build_profile(ModelParams(kappa=1, theta=1.0), grid128.nodes)


@pytest.fixture(scope="session")
def maxwell_prof(grid128):
    return build_profile(ModelParams(kappa=0, theta=0.0), grid128.nodes)


@pytest.fixture(scope="session")
def phase_small():
    return PhaseGrid(TorusGrid(32), MomentumGrid(64, P_MAX))


def random_smooth_slice(grid: MomentumGrid, rng: np.random.Generator) -> np.ndarray:
    """Smooth decaying momentum slice: low-order polynomial/trig x Gaussian."""
    p = grid.nodes
    c = rng.normal(size=6)
    poly = c[0] + c[1] * p + c[2] * p * p / 4.0 + c[3] * np.sin(p) + c[4] * np.cos(2 * p)
    return (poly + c[5] * np.sin(0.5 * p)) * np.exp(-p * p / 4.0)


def random_smooth_field(phase: PhaseGrid, rng: np.random.Generator) -> np.ndarray:
    """Smooth decaying phase-space field with a few x-Fourier modes."""
    x = phase.x.nodes
    out = np.zeros(phase.shape)
    for k in range(3):
        amp = rng.normal(size=2)
        xmode = amp[0] * np.cos(k * x) + amp[1] * np.sin(k * x)
        out += np.outer(xmode, random_smooth_slice(phase.p, rng))
    return out
