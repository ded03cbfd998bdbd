import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def spaced_scores(rng, shape, gap=1e-3):
    """Random score arrays whose sorted gaps all exceed ``gap``.

    Keeps selection ops away from ties so finite differences stay valid.
    """
    n = int(np.prod(shape))
    base = np.arange(n, dtype=np.float64) * (gap * 10.0)
    return (rng.permutation(base) + rng.uniform(0, gap, n)).reshape(shape)
