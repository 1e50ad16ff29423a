"""Pluggable image segmentation backends used to pool error maps.

Backends take a CHW float image in [-1,1] and return integer labels [H,W]
with ids relabeled to 0..K-1. The default is graph-based felzenszwalb
segmentation; a deterministic grid backend exists for tests and as a
fallback that needs no image statistics.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, UsageError

_REGISTRY: dict = {}


def register_segmenter(name: str, fn) -> None:
    """fn(image_chw, **kwargs) -> int labels [H,W]."""
    _REGISTRY[name] = fn


def get_segmenter(name: str):
    if name not in _REGISTRY:
        raise UsageError(f"unknown segmenter {name!r}; have {sorted(_REGISTRY)}")
    return _REGISTRY[name]


def _relabel(labels: np.ndarray) -> np.ndarray:
    _, inverse = np.unique(labels, return_inverse=True)
    return inverse.reshape(labels.shape).astype(np.int32)


def _check_image(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError(f"expected CHW image with 3 channels, got {image.shape}")
    return image


def segment_grid(image: np.ndarray, block: int = 8) -> np.ndarray:
    """Square blocks in row-major order; edge blocks may be smaller."""
    image = _check_image(image)
    h, w = image.shape[1:]
    rows = (np.arange(h) // block)[:, None]
    cols = (np.arange(w) // block)[None, :]
    ncols = (w + block - 1) // block
    return _relabel(rows * ncols + cols)


def segment_felzenszwalb(image: np.ndarray, scale: float = 100.0, sigma: float = 0.5,
                         min_size: int = 20) -> np.ndarray:
    from skimage.segmentation import felzenszwalb

    image = _check_image(image)
    hwc = np.clip((image.transpose(1, 2, 0) + 1.0) / 2.0, 0.0, 1.0)
    labels = felzenszwalb(hwc, scale=scale, sigma=sigma, min_size=min_size,
                          channel_axis=2)
    return _relabel(labels)


register_segmenter("grid", segment_grid)
register_segmenter("felzenszwalb", segment_felzenszwalb)

DEFAULT_SEGMENTER = "felzenszwalb"


def segment_image(image: np.ndarray, backend: str = DEFAULT_SEGMENTER, **kwargs) -> np.ndarray:
    return get_segmenter(backend)(image, **kwargs)
