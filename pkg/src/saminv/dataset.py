"""Builds the supervision corpus for the invertibility predictor.

For every target image we run one inversion per candidate latent space
(style only, then each feature space under a full mask) and record the
spatial perceptual error map of each reconstruction. Items land in
numbered directories:

    0007/input.png    8-bit render for browsing
    0007/maps.samb    float arrays: image, error/<space>, labels, patch_mask
    0007/meta.json    seeds, per-space psnr, settings

Building is resumable: complete item directories are skipped on rerun.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import OptimizationConfig, config_digest
from .errors import LoadError
from .generator import GeneratorHandle
from .imgio import save_image
from .inversion import form_image, invert_batch, style_statistics_for
from .metrics import psnr
from .perceptual import perceptual_error_map
from .samb import read_samb, write_samb
from .segmentation import segment_image
from .spaces import LatentSpace
from .synthetic import patched_target

ITEM_FILES = ("input.png", "maps.samb", "meta.json")


def _item_dir(root: Path, i: int) -> Path:
    return root / f"{i:04d}"


def _is_complete(d: Path) -> bool:
    return all((d / f).exists() for f in ITEM_FILES)


def probe_error_maps(h: GeneratorHandle, images: np.ndarray,
                     cfg: OptimizationConfig, spaces=None, stats=None,
                     progress=None) -> list:
    """Measured per-space error maps for a batch of targets.

    Runs one full-mask inversion per candidate space (the style-only probe
    uses no mask at all) and scores each reconstruction with a spatial
    perceptual error map. Returns one {space: map} dict per image, with the
    reconstructions under the "recon" key of a parallel list.
    """
    spaces = list(spaces) if spaces is not None else [h.native_space] + list(h.feature_spaces)
    stats = stats or style_statistics_for(h)
    n = images.shape[0]
    maps = [dict() for _ in range(n)]
    recons = [dict() for _ in range(n)]
    for k, s in enumerate(spaces):
        assignment = None if s == h.native_space else (s,)
        results = invert_batch(h, images, assignment, cfg, stats=stats)
        for b, r in enumerate(results):
            rec = form_image(h, r.bundle)
            recons[b][s] = rec
            maps[b][s] = perceptual_error_map(images[b], rec, cfg.perceptual)
        if progress is not None:
            progress(k + 1, len(spaces))
    return [{"maps": maps[b], "recons": recons[b]} for b in range(n)]


def build_error_dataset(h: GeneratorHandle, out_dir, count: int,
                        cfg: OptimizationConfig | None = None, seed0: int = 100,
                        chunk: int = 10, segmenter: str = "felzenszwalb",
                        progress=None) -> list:
    """Create (or extend) a dataset of `count` items; returns all item dirs."""
    cfg = cfg or OptimizationConfig()
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    todo = [i for i in range(count) if not _is_complete(_item_dir(root, i))]
    done = count - len(todo)
    for start in range(0, len(todo), chunk):
        idxs = todo[start:start + chunk]
        pairs = [patched_target(h, seed0 + i) for i in idxs]
        images = np.stack([p[0] for p in pairs])
        probed = probe_error_maps(h, images, cfg)
        for j, i in enumerate(idxs):
            d = _item_dir(root, i)
            d.mkdir(exist_ok=True)
            image, patch_mask = pairs[j]
            labels = segment_image(image, segmenter)
            arrays = {"image": image.astype(np.float32),
                      "patch_mask": patch_mask.astype(np.float32),
                      "labels": labels.astype(np.float32)}
            psnrs = {}
            for s, e in probed[j]["maps"].items():
                arrays[f"error/{s.value}"] = e.astype(np.float32)
                psnrs[s.value] = psnr(image, probed[j]["recons"][s])
            meta = {"seed": seed0 + i, "index": i, "generator_id": h.id,
                    "segmenter": segmenter, "config": config_digest(cfg),
                    "steps": cfg.steps, "psnr": psnrs}
            # maps.samb last: its presence marks the item complete only
            # after meta/input exist, keeping interrupted items incomplete
            save_image(d / "input.png", image)
            with open(d / "meta.json", "w") as fh:
                json.dump(meta, fh, indent=1)
            write_samb(d / "maps.samb", meta, arrays)
            done += 1
            if progress is not None:
                progress(done, count)
    return [_item_dir(root, i) for i in range(count)]


def load_item(item_dir) -> dict:
    """One dataset item: image, per-space error maps, labels, metadata."""
    d = Path(item_dir)
    if not _is_complete(d):
        raise LoadError(f"incomplete dataset item {d}")
    meta, arrays = read_samb(d / "maps.samb")
    errors = {LatentSpace(k.split("/", 1)[1]): v
              for k, v in arrays.items() if k.startswith("error/")}
    return {"image": arrays["image"], "errors": errors,
            "labels": arrays["labels"].astype(np.int32),
            "patch_mask": arrays["patch_mask"], "meta": meta, "dir": d}


def load_dataset(root) -> list:
    root = Path(root)
    items = sorted(p for p in root.iterdir() if p.is_dir() and _is_complete(p))
    if not items:
        raise LoadError(f"no complete dataset items under {root}")
    return [load_item(p) for p in items]


def split_items(items: list, val_every: int = 5):
    """Deterministic train/val split by index position."""
    train = [it for k, it in enumerate(items) if k % val_every != 0]
    val = [it for k, it in enumerate(items) if k % val_every == 0]
    return train, val
