"""Synthetic inversion targets with controlled difficulty.

A target is a generator sample with a rectangular block-checkerboard patch
stamped in. The patch colors and block layout sit far outside what style
vectors alone can produce, while remaining representable by feature offsets
at intermediate resolutions, so reconstruction error falls with offset
depth. Patch geometry is seeded, giving a labeled corpus (image + patch
mask) for predictor training and evaluation.
"""

from __future__ import annotations

import numpy as np

from .generator import GeneratorHandle, sample_style, synthesize


def sample_image(h: GeneratorHandle, seed: int) -> np.ndarray:
    return synthesize(h, sample_style(h, seed))


def patched_target(h: GeneratorHandle, seed: int, min_size: int = 10,
                   max_size: int = 20, block: int = 4):
    """One target image plus its ground-truth patch mask [H,W] in {0,1}."""
    rng = np.random.default_rng(seed)
    base = sample_image(h, seed)
    res = h.output_resolution
    ph = int(rng.integers(min_size, max_size + 1))
    pw = int(rng.integers(min_size, max_size + 1))
    y0 = int(rng.integers(0, res - ph + 1))
    x0 = int(rng.integers(0, res - pw + 1))

    # two strongly saturated block colors, alternating in a checker layout
    c0 = rng.uniform(0.5, 0.9, size=3) * rng.choice([-1.0, 1.0], size=3)
    c1 = -c0 * rng.uniform(0.7, 1.0, size=3)
    yy, xx = np.mgrid[0:ph, 0:pw]
    checker = ((yy // block) + (xx // block)) % 2
    patch = np.where(checker[None] == 0, c0[:, None, None], c1[:, None, None])
    patch = patch + rng.normal(0.0, 0.03, size=patch.shape)

    img = base.copy()
    img[:, y0:y0 + ph, x0:x0 + pw] = patch.astype(np.float32)
    mask = np.zeros((res, res), dtype=np.float32)
    mask[y0:y0 + ph, x0:x0 + pw] = 1.0
    return img, mask


def target_suite(h: GeneratorHandle, n: int, seed0: int = 100):
    """n patched targets with distinct seeds; returns (images [n,3,H,W], masks)."""
    imgs, masks = [], []
    for i in range(n):
        img, m = patched_target(h, seed0 + i)
        imgs.append(img)
        masks.append(m)
    return np.stack(imgs), np.stack(masks)
