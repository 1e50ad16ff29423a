"""Spatial invertibility: from per-space error maps to a latent-space layout.

Each latent space gets a spatial map of how well it can reconstruct the
image (lower is better). Maps are pooled over segmentation regions, then
every pixel is assigned the most editable space whose pooled error clears a
threshold tau; pixels nothing clears fall through to the last (most
expressive) space. The per-space regions partition the image and are
downsampled to soft masks at each feature resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ShapeError, UsageError
from .generator import GeneratorHandle
from .spaces import LatentSpace

DEFAULT_TAU = 0.25

# Fixed display palette, one color per space in editability order.
SPACE_COLORS = {
    LatentSpace.W_PLUS: (64, 140, 230),
    LatentSpace.Z_PLUS: (64, 140, 230),
    LatentSpace.F2: (90, 200, 160),
    LatentSpace.F4: (90, 200, 120),
    LatentSpace.F6: (240, 200, 80),
    LatentSpace.F8: (240, 140, 60),
    LatentSpace.F10: (220, 70, 70),
}


def refine_map(error: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Replace every pixel's error with the mean over its segment."""
    error = np.asarray(error, dtype=np.float64)
    labels = np.asarray(labels)
    if error.shape != labels.shape:
        raise ShapeError(f"error {error.shape} vs labels {labels.shape}")
    _, inv = np.unique(labels, return_inverse=True)
    flat = inv.ravel()
    sums = np.bincount(flat, weights=error.ravel())
    counts = np.bincount(flat)
    return (sums / counts)[flat].reshape(error.shape).astype(np.float32)


def refine_maps(errors: dict, labels: np.ndarray) -> dict:
    return {s: refine_map(e, labels) for s, e in errors.items()}


@dataclass(frozen=True)
class LayerAssignment:
    """Per-pixel latent-space choice. labels[y,x] indexes into `order`."""

    order: tuple                      # spaces, most editable first
    labels: np.ndarray                # [H,W] int8
    tau: float

    def region_map(self, space: LatentSpace) -> np.ndarray:
        """Binary map of pixels assigned to `space`."""
        if space not in self.order:
            raise UsageError(f"{space} not in assignment order {self.order}")
        idx = self.order.index(space)
        return (self.labels == idx).astype(np.float32)

    def region_maps(self) -> dict:
        return {s: self.region_map(s) for s in self.order}

    def coverage(self) -> dict:
        """Fraction of pixels per space."""
        n = self.labels.size
        return {s: float((self.labels == i).sum()) / n for i, s in enumerate(self.order)}


def select_assignment(refined: dict, tau: float = DEFAULT_TAU, order=None) -> LayerAssignment:
    """Pick per pixel the most editable space whose refined error is <= tau.

    `refined` maps each candidate space to an [H,W] error map. Pixels where
    no space qualifies get the last space in the order. Raising tau can only
    move pixels toward more editable spaces.
    """
    if not refined:
        raise UsageError("no error maps given")
    if order is None:
        order = tuple(sorted(refined, key=lambda s: s.value))
    order = tuple(order)
    missing = [s for s in order if s not in refined]
    if missing:
        raise UsageError(f"missing error maps for {missing}")
    shape = next(iter(refined.values())).shape
    labels = np.full(shape, len(order) - 1, dtype=np.int8)
    undecided = np.ones(shape, dtype=bool)
    for i, s in enumerate(order):
        e = np.asarray(refined[s])
        if e.shape != shape:
            raise ShapeError(f"map for {s} has shape {e.shape}, expected {shape}")
        take = undecided & (e <= tau)
        labels[take] = i
        undecided &= ~take
    return LayerAssignment(order=order, labels=labels, tau=float(tau))


@dataclass(frozen=True)
class MaskSet:
    """Soft masks at feature resolution for every feature space in an assignment."""

    masks: dict = field(default_factory=dict)   # space -> [h,w] float in [0,1]
    image_shape: tuple = ()
    tau: float = DEFAULT_TAU


def downsample_mask(region: np.ndarray, size: tuple) -> np.ndarray:
    """Bilinear reduction of a binary region map to a soft mask."""
    t = torch.from_numpy(np.ascontiguousarray(region, dtype=np.float32))[None, None]
    out = F.interpolate(t, size=size, mode="bilinear", align_corners=False)
    return out[0, 0].clamp(0.0, 1.0).numpy()


def build_masks(h: GeneratorHandle, assignment: LayerAssignment) -> MaskSet:
    """Soft per-space masks; W+/Z+ regions need no mask (the style is global)."""
    layers = h.space_layers
    masks = {}
    for s in assignment.order:
        if s == h.native_space:
            continue
        if s not in layers:
            raise UsageError(f"assignment space {s} not on generator {h.id}")
        region = assignment.region_map(s)
        size = h.feature_shape(layers[s])[1:]
        masks[s] = downsample_mask(region, size).astype(np.float32)
    return MaskSet(masks=masks, image_shape=tuple(assignment.labels.shape),
                   tau=assignment.tau)


def assignment_to_rgb(assignment: LayerAssignment) -> np.ndarray:
    """Color-coded visualization, uint8 HWC."""
    h, w = assignment.labels.shape
    out = np.zeros((h, w, 3), dtype=np.uint8)
    for i, s in enumerate(assignment.order):
        out[assignment.labels == i] = SPACE_COLORS[s]
    return out
