import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lsregen.benchmark import build_mixtures, quadrant_layouts
from lsregen.scene import BoundingBox, LayoutSpec, SceneMixture
from lsregen.schedule import build_schedule

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def schedule():
    return build_schedule("linear-beta", 1000)


@pytest.fixture(scope="session")
def short_schedule():
    return build_schedule("linear-beta", 50)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def gaussian_mixture(means, sigma, weights=None):
    """Mixture with placeholder layouts, for denoiser math that ignores geometry."""
    means = np.asarray(means, dtype=np.float64)
    K = len(means)
    lay = LayoutSpec((BoundingBox(0.1, 0.1, 0.5, 0.5, "person"),), means.shape[2:])
    weights = np.full(K, 1.0 / K) if weights is None else np.asarray(weights, dtype=np.float64)
    return SceneMixture(tuple([lay] * K), means, weights, sigma)


@pytest.fixture(scope="session")
def quadrants():
    return quadrant_layouts()


@pytest.fixture(scope="session")
def bench_mixtures(quadrants):
    return build_mixtures(quadrants)
