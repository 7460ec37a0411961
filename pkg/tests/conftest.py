import numpy as np
import pytest

from hetddf.gaussian import CanonicalGaussian, DimKey


def keys(n, owner="x"):
    return tuple(DimKey(owner, i) for i in range(n))


def random_spd(rng, n, cond=50.0):
    """SPD matrix with eigenvalues spread over ``[1, cond]``."""
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = np.exp(rng.uniform(0.0, np.log(cond), n))
    return (q * eig) @ q.T


def random_gaussian(rng, n, owner="x", cond=50.0):
    mean = rng.standard_normal(n)
    cov = random_spd(rng, n, cond)
    return mean, cov, CanonicalGaussian.from_moments(mean, cov, keys(n, owner))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
