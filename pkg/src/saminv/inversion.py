"""Multilayer latent inversion.

An image is explained by an extended style (one style row per layer) plus
optional masked feature offsets at intermediate boundaries. Image formation
composes generator slices, adding each masked offset to the features at its
boundary before the next slice runs:

    f_a = G[0->a](const, w) + m_a * d_a
    f_b = G[a->b](f_a,  w) + m_b * d_b
    ...
    out = G[last->N](f, w)

Offsets absent from a bundle are zero. The objective is

    L = l2(x, out) + lam_lpips * perceptual(x, out)
        + lam_w * style_prior(w)
        + lam_f * sum ||d||^2

where style_prior is a Mahalanobis term on gaussianized styles plus a
drift penalty against the initial style.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from . import samb
from .config import OptimizationConfig
from .errors import NonFiniteLossError, ShapeError, UsageError
from .generator import (GeneratorHandle, StyleStatistics, _gaussianize_t,
                        estimate_style_statistics, gaussianize_style, mean_style,
                        sample_style)
from .perceptual import get_perceptual
from .spaces import LatentSpace


@dataclass
class LatentBundle:
    """Everything needed to re-render one inverted image."""

    generator_id: str
    w_plus: np.ndarray                      # [N,D] float32
    delta_f: dict = field(default_factory=dict)   # space -> [C,H,W]
    masks: dict = field(default_factory=dict)     # space -> [H,W] in [0,1]
    meta: dict = field(default_factory=dict)

    def spaces(self) -> list:
        out = [LatentSpace.W_PLUS]
        out.extend(sorted(self.delta_f, key=lambda s: s.value))
        return out


def validate_bundle(h: GeneratorHandle, bundle: LatentBundle) -> None:
    if bundle.w_plus.shape != (h.num_style_layers, h.style_dim):
        raise ShapeError(f"w_plus shape {bundle.w_plus.shape} != "
                         f"({h.num_style_layers},{h.style_dim})")
    layers = h.space_layers
    for s, d in bundle.delta_f.items():
        if s not in layers:
            raise UsageError(f"space {s} is not a feature space of generator {h.id}")
        want = h.feature_shape(layers[s])
        if tuple(d.shape) != want:
            raise ShapeError(f"delta at {s} has shape {tuple(d.shape)}, expected {want}")
        m = bundle.masks.get(s)
        if m is not None and tuple(m.shape) != want[1:]:
            raise ShapeError(f"mask at {s} has shape {tuple(m.shape)}, expected {want[1:]}")


def form_image_t(h: GeneratorHandle, w: torch.Tensor, deltas: dict,
                 masks: dict) -> torch.Tensor:
    """Differentiable formation. w: [B,N,D]; deltas/masks keyed by space."""
    layers = h.space_layers
    x = h.const_t(batch=w.shape[0], dtype=w.dtype)
    prev = 0
    for s, b in layers.items():
        x = h.slice_t(prev, b, x, w)
        if s in deltas:
            d = deltas[s]
            m = masks.get(s)
            x = x + d if m is None else x + m * d
        prev = b
    return h.slice_t(prev, h.num_style_layers, x, w)


def form_image(h: GeneratorHandle, bundle: LatentBundle) -> np.ndarray:
    """Render a bundle to a CHW float image."""
    validate_bundle(h, bundle)
    w = torch.from_numpy(np.ascontiguousarray(bundle.w_plus, dtype=np.float32))[None]
    deltas = {s: torch.from_numpy(np.ascontiguousarray(d, dtype=np.float32))[None]
              for s, d in bundle.delta_f.items()}
    masks = {s: torch.from_numpy(np.ascontiguousarray(m, dtype=np.float32))[None, None]
             for s, m in bundle.masks.items() if s in bundle.delta_f}
    with torch.no_grad():
        return form_image_t(h, w, deltas, masks)[0].numpy()


# ---------------------------------------------------------------------------
# loss terms

def l2_loss_t(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    return (x - y).pow(2).mean(dim=(1, 2, 3))


def reconstruction_loss_t(percep, x: torch.Tensor, y: torch.Tensor,
                          lam_lpips: float) -> torch.Tensor:
    rec = l2_loss_t(x, y)
    if lam_lpips > 0:
        rec = rec + lam_lpips * percep.distance_t(x, y)
    return rec


def style_prior_t(w: torch.Tensor, mu: torch.Tensor, sigma_inv: torch.Tensor,
                  w0: torch.Tensor) -> torch.Tensor:
    """Sum over style rows of Mahalanobis(gaussianized w) + drift from w0."""
    w_hat = _gaussianize_t(w)
    c = w_hat - mu                                     # [B,N,D]
    maha = torch.einsum("bnd,de,bne->bn", c, sigma_inv, c).sum(dim=1)
    drift = (w - w0).pow(2).sum(dim=(1, 2))
    return maha + drift


def offset_energy_t(deltas: dict) -> torch.Tensor:
    total = None
    for d in deltas.values():
        e = d.pow(2).sum(dim=tuple(range(1, d.ndim)))
        total = e if total is None else total + e
    return total


def wplus_regularizer(w: np.ndarray, stats: StyleStatistics, w0: np.ndarray) -> float:
    """Reference implementation on numpy float64 (used directly and as an oracle)."""
    w = np.asarray(w, dtype=np.float64)
    w0 = np.asarray(w0, dtype=np.float64)
    w_hat = gaussianize_style(w)
    c = w_hat - stats.mu[None, :]
    maha = float(np.einsum("nd,de,ne->", c, stats.sigma_inv_reg, c))
    drift = float(((w - w0) ** 2).sum())
    return maha + drift


def fspace_regularizer(deltas: dict) -> float:
    return float(sum((np.asarray(d, dtype=np.float64) ** 2).sum() for d in deltas.values()))


def reconstruction_loss(x: np.ndarray, y: np.ndarray, lam_lpips: float = 1.0,
                        preset: str = "tiny") -> float:
    xt = torch.from_numpy(np.ascontiguousarray(x, dtype=np.float32))[None]
    yt = torch.from_numpy(np.ascontiguousarray(y, dtype=np.float32))[None]
    with torch.no_grad():
        return float(reconstruction_loss_t(get_perceptual(preset), xt, yt, lam_lpips)[0])


def total_objective_t(h: GeneratorHandle, percep, x: torch.Tensor, w: torch.Tensor,
                      deltas: dict, masks: dict, mu: torch.Tensor,
                      sigma_inv: torch.Tensor, w0: torch.Tensor,
                      weights) -> dict:
    """All objective terms for one formation pass; values are [B] tensors."""
    out = form_image_t(h, w, deltas, masks)
    l2 = l2_loss_t(x, out)
    lp = percep.distance_t(x, out) if weights.lpips > 0 else torch.zeros_like(l2)
    w_reg = style_prior_t(w, mu, sigma_inv, w0)
    zero = torch.zeros_like(l2)
    f_reg = offset_energy_t(deltas) if deltas else zero
    total = l2 + weights.lpips * lp + weights.w_reg * w_reg + weights.f_reg * f_reg
    return {"total": total, "l2": l2, "lpips": lp, "w_reg": w_reg, "f_reg": f_reg,
            "image": out}


# ---------------------------------------------------------------------------
# optimization

@dataclass
class InversionResult:
    bundle: LatentBundle
    history: list
    best_step: int
    best_loss: float
    duration_s: float


_STATS_CACHE: dict = {}


def style_statistics_for(h: GeneratorHandle, n: int = 1000, seed: int = 0) -> StyleStatistics:
    key = (h.id, n, seed)
    if key not in _STATS_CACHE:
        _STATS_CACHE[key] = estimate_style_statistics(h, n, seed)
    return _STATS_CACHE[key]


def _resolve_masks(h: GeneratorHandle, assignment) -> dict:
    """Normalize an assignment argument to {space: [H,W] float mask}.

    Accepts: None (style only), an iterable of spaces (full masks), a
    {space: mask} dict, or any object with a `.masks` dict attribute.
    """
    if assignment is None:
        return {}
    if hasattr(assignment, "masks"):
        assignment = assignment.masks
    if isinstance(assignment, (str, LatentSpace)):
        assignment = [assignment]
    layers = h.space_layers
    if isinstance(assignment, dict):
        items = assignment.items()
    else:
        items = [(s, None) for s in assignment]
    out = {}
    for s, m in items:
        s = LatentSpace(s)
        if s == h.native_space:
            continue                      # the style vector is always optimized
        if s not in layers:
            raise UsageError(f"space {s} is not available on generator {h.id}")
        shape = h.feature_shape(layers[s])[1:]
        if m is None:
            m = np.ones(shape, dtype=np.float32)
        m = np.asarray(m, dtype=np.float32)
        if tuple(m.shape) != shape:
            raise ShapeError(f"mask for {s} has shape {m.shape}, expected {shape}")
        if m.max(initial=0.0) <= 0.0:
            continue                      # nothing to optimize under an empty mask
        out[s] = m
    return out


def _optimize_batch(h: GeneratorHandle, x: torch.Tensor, mask_stacks: dict,
                    cfg: OptimizationConfig, stats: StyleStatistics,
                    callback=None) -> list:
    """Shared optimizer core over a batch of independent targets.

    x: [B,3,H,W]; mask_stacks: space -> [B,H,W]. Losses are summed over the
    batch, but gradients (and Adam's elementwise moments) never couple
    samples, so results match running each target alone.
    """
    B = x.shape[0]
    percep = get_perceptual(cfg.perceptual)
    if cfg.init == "mean":
        w_init = mean_style(h, stats)[None].repeat(B, axis=0)
    else:
        w_init = np.stack([sample_style(h, cfg.seed + i) for i in range(B)])
    w0 = torch.from_numpy(w_init.astype(np.float32))
    w = w0.clone().requires_grad_(True)

    layers = h.space_layers
    deltas, masks = {}, {}
    for s, m in mask_stacks.items():
        deltas[s] = torch.zeros((B,) + h.feature_shape(layers[s]), requires_grad=True)
        masks[s] = torch.from_numpy(np.ascontiguousarray(m, dtype=np.float32))[:, None]

    mu = torch.from_numpy(stats.mu.astype(np.float32))
    sigma_inv = torch.from_numpy(stats.sigma_inv_reg.astype(np.float32))

    groups = [{"params": [w], "lr": cfg.lr_w}]
    if deltas:
        groups.append({"params": list(deltas.values()), "lr": cfg.lr_delta})
    opt = torch.optim.Adam(groups)

    histories = [[] for _ in range(B)]
    best_loss = np.full(B, np.inf)
    best_step = np.full(B, -1, dtype=int)
    best_w = [w_init[b] for b in range(B)]
    best_deltas = [{} for _ in range(B)]
    t0 = time.perf_counter()
    for step in range(cfg.steps):
        opt.zero_grad(set_to_none=True)
        terms = total_objective_t(h, percep, x, w, deltas, masks, mu, sigma_inv, w0,
                                  cfg.weights)
        vals = {k: v.detach().numpy() for k, v in terms.items() if k != "image"}
        for name, arr in vals.items():
            if not np.isfinite(arr).all():
                raise NonFiniteLossError(name, float(arr.ravel()[0]))
        w_np = d_np = None
        for b in range(B):
            rec = {k: float(v[b]) for k, v in vals.items()}
            rec["step"] = step
            histories[b].append(rec)
            if rec["total"] < best_loss[b]:
                if w_np is None:
                    w_np = w.detach().numpy()
                    d_np = {s: d.detach().numpy() for s, d in deltas.items()}
                best_loss[b] = rec["total"]
                best_step[b] = step
                best_w[b] = w_np[b].copy()
                best_deltas[b] = {s: d[b].copy() for s, d in d_np.items()}
        if callback is not None:
            callback(step, {k: float(v.sum()) for k, v in vals.items()})
        terms["total"].sum().backward()
        opt.step()
    duration = time.perf_counter() - t0

    results = []
    for b in range(B):
        sample_masks = {s: np.asarray(m[b]) for s, m in mask_stacks.items()}
        keep = [s for s in best_deltas[b] if sample_masks[s].max(initial=0.0) > 0.0]
        bundle = LatentBundle(
            generator_id=h.id,
            w_plus=best_w[b].astype(np.float32),
            delta_f={s: best_deltas[b][s].astype(np.float32) for s in keep},
            masks={s: sample_masks[s].astype(np.float32) for s in keep},
            meta={"steps": cfg.steps, "best_step": int(best_step[b]), "init": cfg.init,
                  "weights": {"lpips": cfg.weights.lpips, "w_reg": cfg.weights.w_reg,
                              "f_reg": cfg.weights.f_reg}},
        )
        results.append(InversionResult(
            bundle=bundle, history=histories[b], best_step=int(best_step[b]),
            best_loss=float(best_loss[b]), duration_s=duration / B))
    return results


def invert(h: GeneratorHandle, image: np.ndarray, assignment=None,
           cfg: OptimizationConfig | None = None, stats: StyleStatistics | None = None,
           callback=None) -> InversionResult:
    """Optimize a latent bundle so the formed image matches `image`.

    The style vector is always free; feature offsets are allocated per the
    assignment's masks. Returns the best iterate by total objective.
    """
    cfg = cfg or OptimizationConfig()
    if image.shape != (3, h.output_resolution, h.output_resolution):
        raise ShapeError(f"target shape {image.shape} != "
                         f"(3,{h.output_resolution},{h.output_resolution})")
    stats = stats or style_statistics_for(h)
    x = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32))[None]
    mask_arrays = _resolve_masks(h, assignment)
    stacks = {s: m[None] for s, m in mask_arrays.items()}
    return _optimize_batch(h, x, stacks, cfg, stats, callback)[0]


def invert_batch(h: GeneratorHandle, images: np.ndarray, assignments=None,
                 cfg: OptimizationConfig | None = None,
                 stats: StyleStatistics | None = None, callback=None) -> list:
    """Invert many targets in one optimizer run.

    Targets never interact (losses are summed, the optimizer is elementwise),
    so results match per-target runs up to batched-kernel float reassociation.
    assignments: a python list is read as one assignment per target (length
    B); anything else (None, tuple of spaces, dict, mask-set object) is
    shared by every target. Spaces missing from a target get a zero mask.
    """
    cfg = cfg or OptimizationConfig()
    images = np.asarray(images, dtype=np.float32)
    B = images.shape[0]
    if images.shape[1:] != (3, h.output_resolution, h.output_resolution):
        raise ShapeError(f"target batch shape {images.shape} != "
                         f"(B,3,{h.output_resolution},{h.output_resolution})")
    if isinstance(assignments, list):
        if len(assignments) != B:
            raise UsageError(f"got {len(assignments)} assignments for {B} targets")
        per_target = [_resolve_masks(h, a) for a in assignments]
    else:
        per_target = [_resolve_masks(h, assignments)] * B
    spaces = sorted({s for m in per_target for s in m}, key=lambda s: s.value)
    layers = h.space_layers
    stacks = {}
    for s in spaces:
        shape = h.feature_shape(layers[s])[1:]
        stacks[s] = np.stack([m.get(s, np.zeros(shape, dtype=np.float32))
                              for m in per_target])
    x = torch.from_numpy(np.ascontiguousarray(images))
    return _optimize_batch(h, x, stacks, cfg, stats or style_statistics_for(h), callback)


# ---------------------------------------------------------------------------
# persistence

def save_bundle(path, bundle: LatentBundle) -> None:
    meta = {
        "kind": "latent-bundle",
        "generator_id": bundle.generator_id,
        "spaces": [s.value for s in bundle.delta_f],
        "meta": bundle.meta,
    }
    arrays = {"w_plus": bundle.w_plus.astype(np.float32)}
    for s, d in bundle.delta_f.items():
        arrays[f"delta/{s.value}"] = d.astype(np.float32)
    for s, m in bundle.masks.items():
        arrays[f"mask/{s.value}"] = np.asarray(m, dtype=np.float32)
    samb.write_samb(path, meta, arrays)


def load_bundle(path) -> LatentBundle:
    meta, arrays = samb.read_samb(path)
    if meta.get("kind") != "latent-bundle":
        raise UsageError(f"{path} is not a latent bundle (kind={meta.get('kind')!r})")
    delta_f, masks = {}, {}
    for key, arr in arrays.items():
        if key.startswith("delta/"):
            delta_f[LatentSpace(key.split("/", 1)[1])] = arr
        elif key.startswith("mask/"):
            masks[LatentSpace(key.split("/", 1)[1])] = arr
    return LatentBundle(
        generator_id=meta["generator_id"], w_plus=arrays["w_plus"],
        delta_f=delta_f, masks=masks, meta=meta.get("meta", {}))
