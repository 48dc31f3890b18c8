import numpy as np
import pytest

from bifurcata import create_settings
from bifurcata.services.families import BUILTIN_FAMILIES, builtin_family


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def settings():
    return create_settings('testing')


@pytest.fixture(params=sorted(BUILTIN_FAMILIES))
def builtin(request):
    return builtin_family(request.param)


@pytest.fixture
def pitchfork():
    return builtin_family('pitchfork')


@pytest.fixture
def transcritical():
    return builtin_family('transcritical')


@pytest.fixture
def quadratic():
    return builtin_family('quadratic')


@pytest.fixture
def coupled():
    return builtin_family('coupled')


@pytest.fixture
def two_mode():
    return builtin_family('two_mode')


@pytest.fixture
def double_pitchfork():
    return builtin_family('double_pitchfork')


@pytest.fixture
def two_parameter():
    return builtin_family('two_parameter')


@pytest.fixture
def bvp():
    return builtin_family('bvp')


@pytest.fixture
def random_symmetric(rng):
    def make(n):
        a = rng.standard_normal((n, n))
        return 0.5 * (a + a.T)
    return make


@pytest.fixture
def random_orthogonal(rng):
    def make(n):
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        return q
    return make
