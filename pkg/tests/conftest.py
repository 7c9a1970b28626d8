import numpy as np
import pytest

from helpers import make_table


@pytest.fixture
def small_table():
    rng = np.random.default_rng(11)
    n = 300
    X = rng.standard_normal((n, 3))
    t = (rng.random(n) < 0.4 + 0.2 * (X[:, 0] > 0)).astype(float)
    y = 1.0 + X @ np.array([1.0, -0.5, 0.3]) + t * (2.0 + X[:, 1]) + rng.standard_normal(n)
    t_obs = np.where(rng.random(n) < 0.25, np.nan, t)
    return make_table(X, y, t_obs)
