import numpy as np
import pytest

SEEDS = list(range(10))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def away_from_zero(rng, shape, margin=1e-2, hi=1.0):
    """Uniform values with |x| >= margin (keeps ReLU inputs off the kink)."""
    mag = rng.uniform(margin, hi, shape)
    return np.where(rng.uniform(size=shape) < 0.5, -mag, mag)
