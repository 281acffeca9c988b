import numpy as np
import pytest

from aeptools.entropy import Distribution


@pytest.fixture
def fair():
    return Distribution([0.5, 0.5], values=[0.0, 1.0])


@pytest.fixture
def p25():
    return Distribution([0.25, 0.75])


@pytest.fixture
def p11():
    return Distribution([0.89, 0.11])


def random_distributions(count, max_size=8, min_size=2, seed=0, binary=False):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        w = 2 if binary else int(rng.integers(min_size, max_size + 1))
        p = rng.dirichlet(np.ones(w))
        p = np.clip(p, 1e-3, None)
        out.append(Distribution(p / p.sum()))
    return out
