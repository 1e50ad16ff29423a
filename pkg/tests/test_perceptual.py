import numpy as np
import pytest

from saminv.errors import ShapeError, UsageError
from saminv.perceptual import (PerceptualNet, get_perceptual,
                               perceptual_distance, perceptual_error_map)


@pytest.fixture(scope="module")
def imgs(rng):
    x = rng.standard_normal((3, 32, 32)).astype(np.float32) * 0.3
    y = x + rng.standard_normal((3, 32, 32)).astype(np.float32) * 0.2
    return x, y


def test_identity_is_zero(imgs):
    x, _ = imgs
    assert perceptual_distance(x, x) == 0.0
    assert np.all(perceptual_error_map(x, x) == 0.0)


def test_symmetry(imgs):
    x, y = imgs
    assert abs(perceptual_distance(x, y) - perceptual_distance(y, x)) < 1e-7


def test_positive_for_different(imgs):
    x, y = imgs
    assert perceptual_distance(x, y) > 0.0


def test_map_shape_and_sign(imgs):
    x, y = imgs
    m = perceptual_error_map(x, y)
    assert m.shape == (32, 32)
    assert m.min() >= 0.0


def test_deterministic_across_instances(imgs):
    x, y = imgs
    a = PerceptualNet("tiny")
    b = PerceptualNet("tiny")
    import torch
    xt = torch.from_numpy(x)[None]
    yt = torch.from_numpy(y)[None]
    assert float(a.distance_t(xt, yt)[0]) == float(b.distance_t(xt, yt)[0])


def test_shape_mismatch_rejected(imgs):
    x, _ = imgs
    with pytest.raises(ShapeError):
        perceptual_distance(x, x[:, :16, :16])


def test_unknown_preset_rejected():
    with pytest.raises(UsageError):
        PerceptualNet("resnet")


def test_cache_returns_same_instance():
    assert get_perceptual("tiny") is get_perceptual("tiny")


def test_localized_change_localized_error(imgs):
    x, _ = imgs
    y = x.copy()
    y[:, 4:10, 4:10] += 1.0
    m = perceptual_error_map(x, y)
    inside = m[4:10, 4:10].mean()
    outside = m[20:, 20:].mean()
    assert inside > 5 * outside
