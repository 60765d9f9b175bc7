import numpy as np
import pytest

from diraclab.algebra import Multivector, VectorFactorList


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_multivector(rng, dim, batch=(), scale=1.0):
    return Multivector(dim, scale * rng.standard_normal(tuple(batch) + (1 << dim,)))


def random_vector(rng, dim, unit=False):
    v = rng.standard_normal(dim)
    while np.linalg.norm(v) < 1e-3:
        v = rng.standard_normal(dim)
    if unit:
        v = v / np.linalg.norm(v)
    return Multivector.from_vector(dim, v)


def random_factor_list(rng, dim, count, unit=False):
    return VectorFactorList([random_vector(rng, dim, unit=unit) for _ in range(count)])
