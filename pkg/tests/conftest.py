import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vebreg import AshPrior, PointNormalPrior, default_ash_grid

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_ash(rng, K=None, spike=None):
    """Ash prior on a scaled default grid with Dirichlet weights."""
    K = K or int(rng.integers(2, 12))
    grid = default_ash_grid(K) * rng.uniform(0.5, 20.0)
    if K == 1:
        grid = np.array([rng.uniform(0.1, 5.0)])
    w = rng.dirichlet(np.full(K, 0.7))
    w = np.maximum(w, 1e-6)
    w /= w.sum()
    if spike is not None:
        w = np.full(K, (1 - spike) / (K - 1))
        w[0] = spike
    return AshPrior(grid, w)


def random_point_normal(rng):
    return PointNormalPrior(rng.uniform(0.05, 0.95), rng.uniform(0.1, 5.0))


def central_diff(f, x, h):
    x = np.array(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i] if np.ndim(h) else h
        g[i] = (f(x + e) - f(x - e)) / (2 * e[i])
    return g


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
