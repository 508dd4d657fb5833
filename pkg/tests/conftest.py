import numpy as np
import pytest

from thrustmip import _backend
from thrustmip.params import load_params


@pytest.fixture
def params():
    return load_params()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=_backend.available())
def kernels(request):
    return _backend.get(request.param)


def random_state(rng, scale=1.0):
    return np.array([
        rng.uniform(-5, 5),
        rng.uniform(-1.2, 1.2) * scale,
        rng.uniform(-6, 6) * scale,
        rng.uniform(-3, 3) * scale,
    ])


def random_input(rng, params):
    return np.array([rng.uniform(-1, 1), rng.uniform(0, params.f_t_max)])
