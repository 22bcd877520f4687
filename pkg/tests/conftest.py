import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=200,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def central_jacobian(f, x, h=1e-6):
    """Central finite-difference Jacobian, column by column."""
    x = np.asarray(x, dtype=float)
    cols = []
    for e in np.eye(len(x)):
        cols.append((np.asarray(f(x + h * e)) - np.asarray(f(x - h * e))) / (2 * h))
    return np.array(cols).T
