"""End-to-end spatially adaptive inversion.

Ties the stages together: per-space error maps (measured by probe
inversions or predicted by a trained model), segment pooling, thresholded
space selection, soft mask construction, and the final masked inversion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import OptimizationConfig
from .dataset import probe_error_maps
from .errors import UsageError
from .generator import GeneratorHandle
from .inversion import InversionResult, invert, style_statistics_for
from .invertibility import (DEFAULT_TAU, LayerAssignment, MaskSet, build_masks,
                            refine_maps, select_assignment)
from .predictor import ErrorPredictor, predict_error_maps
from .segmentation import segment_image


@dataclass
class SamResult:
    """Everything the pipeline produced for one image."""

    result: InversionResult
    error_maps: dict                 # space -> raw [H,W] map
    refined: dict                    # space -> segment-pooled map
    labels: np.ndarray               # segmentation labels [H,W]
    assignment: LayerAssignment
    mask_set: MaskSet

    @property
    def bundle(self):
        return self.result.bundle


def sam_invert(h: GeneratorHandle, image: np.ndarray, tau: float = DEFAULT_TAU,
               cfg: OptimizationConfig | None = None,
               probe_cfg: OptimizationConfig | None = None,
               maps="measured", segmenter: str = "felzenszwalb",
               progress=None) -> SamResult:
    """Invert one image with automatic per-region latent space selection.

    maps: "measured" runs one probe inversion per space; an ErrorPredictor
    predicts the maps in a single pass; a {space: map} dict is used as is.
    """
    cfg = cfg or OptimizationConfig()
    probe_cfg = probe_cfg or cfg
    stats = style_statistics_for(h)
    spaces = [h.native_space] + list(h.feature_spaces)

    # probes account for len(spaces) rounds of probe_cfg.steps, the final
    # masked run for cfg.steps; progress is reported in completed steps
    probe_total = probe_cfg.steps * len(spaces)
    total = cfg.steps + (probe_total if maps == "measured" else 0)
    done_before_final = 0

    if isinstance(maps, dict):
        error_maps = dict(maps)
    elif isinstance(maps, ErrorPredictor):
        error_maps = predict_error_maps(maps, image)
    elif maps == "measured":
        def _probe_progress(round_done, rounds):
            if progress is not None:
                progress(round_done * probe_cfg.steps, total)
        probed = probe_error_maps(h, image[None], probe_cfg, spaces=spaces,
                                  stats=stats, progress=_probe_progress)
        error_maps = probed[0]["maps"]
        done_before_final = probe_total
    else:
        raise UsageError(f"maps must be 'measured', a predictor, or a dict; got {maps!r}")

    labels = segment_image(image, segmenter)
    refined = refine_maps(error_maps, labels)
    assignment = select_assignment(refined, tau, order=spaces)
    mask_set = build_masks(h, assignment)

    def _final_progress(step, record):
        if progress is not None:
            progress(done_before_final + step + 1, total)

    result = invert(h, image, mask_set, cfg, stats=stats, callback=_final_progress)
    return SamResult(result=result, error_maps=error_maps, refined=refined,
                     labels=labels, assignment=assignment, mask_set=mask_set)
