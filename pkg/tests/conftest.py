import math

import pytest

from core.bvp import GridControl
from core.model import Kernel, ModelSpec, Params, make_kernel


def lam_for_p(params: Params, c: float, p: float) -> float:
    """Smaller root of lambda c - d lambda^2 - f'(0) = p."""
    return (c - math.sqrt(c * c - 4 * params.d * (params.growth + p))) / (2 * params.d)


@pytest.fixture
def unit_params():
    return Params(d=1.0, big_d=4.0, growth=1.0, mu_bar=1.0, nu_bar=1.0)


@pytest.fixture
def limit_spec(unit_params):
    return ModelSpec.limit(unit_params)


@pytest.fixture
def boxcar():
    return make_kernel({"shape": "boxcar", "halfwidth": 1.0}, 1.0)


@pytest.fixture
def full_boxcar_spec(boxcar):
    return ModelSpec(nu=boxcar, mu=boxcar)


@pytest.fixture
def rpsl2_spec(boxcar):
    return ModelSpec(nu=Kernel(atom=1.0), mu=boxcar)


@pytest.fixture
def coarse_grid():
    return GridControl(n_intervals=4096)


@pytest.fixture
def nu_nonlocal_spec(boxcar):
    return ModelSpec(nu=boxcar, mu=Kernel(atom=1.0))
