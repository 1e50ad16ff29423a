import numpy as np
import pytest

import saminv


@pytest.fixture(scope="session")
def toy():
    return saminv.load_generator("toy", seed=0)


@pytest.fixture(scope="session")
def toy_stats(toy):
    from saminv.inversion import style_statistics_for
    return style_statistics_for(toy)


@pytest.fixture(scope="session")
def patched(toy):
    """One off-manifold target with its ground-truth patch mask."""
    image, mask = saminv.patched_target(toy, seed=123)
    return image, mask


@pytest.fixture(scope="session")
def quick_bundle(toy, patched):
    """A small style-only inversion shared by bundle-consuming tests."""
    from saminv.config import OptimizationConfig
    image, _ = patched
    res = saminv.invert(toy, image, cfg=OptimizationConfig(steps=40))
    return res.bundle


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(0)
