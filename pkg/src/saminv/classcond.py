"""Class-conditional generator family: extended z codes, fixed class label.

The conditional net takes one z row per injection site (row 0 feeds the
input projection, later rows condition each layer's feature modulation
together with the class embedding). Inversion mirrors the style family:
reconstruction + a Gaussian prior on z rows + offset energy, except z is
already Gaussian so the prior uses raw rows. The class label is predicted
once up front and never optimized.

A small 8-class fixture at 32x32 stands in for a full conditional model;
its classes are separated by strong per-class color biases so a trivial
oracle classifier is exact on fixture samples.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import samb
from .config import OptimizationConfig
from .errors import LoadError, NonFiniteLossError, ShapeError, UsageError
from .perceptual import get_perceptual
from .spaces import BIGGAN_SPACES, LatentSpace

TOY_CLASS_COUNT = 8
TOY_Z_DIM = 32
TOY_CC_BOUNDARIES = (0, 2, 4, 6)

# cube-corner color bias per class; bit k of the label gives channel k's sign
CLASS_COLORS = np.array(
    [[0.7 if (c >> k) & 1 else -0.7 for k in range(3)] for c in range(TOY_CLASS_COUNT)],
    dtype=np.float32)


@dataclass(frozen=True)
class ClassSynthesisConfig:
    n_layers: int = 6
    z_dim: int = TOY_Z_DIM
    channels: int = 32
    emb_dim: int = 16
    n_classes: int = TOY_CLASS_COUNT
    const_res: int = 4
    up_layers: tuple = (1, 3, 5)
    boundaries: tuple = TOY_CC_BOUNDARIES

    @property
    def n_sites(self) -> int:
        """z rows: one for the input projection plus one per layer."""
        return self.n_layers + 1

    def out_resolutions(self) -> list:
        res, out = self.const_res, []
        for l in range(self.n_layers):
            if l in self.up_layers:
                res *= 2
            out.append(res)
        return out


class _FilmLayer(nn.Module):
    """3x3 conv whose features are scaled/shifted by (z row, class embedding)."""

    def __init__(self, cfg: ClassSynthesisConfig, up: bool, g: torch.Generator):
        super().__init__()
        self.up = up
        c, cond = cfg.channels, cfg.z_dim + cfg.emb_dim
        self.weight = nn.Parameter(torch.randn(c, c, 3, 3, generator=g)
                                   * math.sqrt(2.0 / (c * 9)))
        self.bias = nn.Parameter(torch.zeros(c))
        self.film = nn.Linear(cond, 2 * c)
        with torch.no_grad():
            self.film.weight.copy_(torch.randn(2 * c, cond, generator=g) * 0.03)
            self.film.bias.zero_()

    def forward(self, x, z_row, emb):
        if self.up:
            x = F.interpolate(x, scale_factor=2.0, mode="bilinear", align_corners=False)
        x = F.conv2d(x, self.weight, self.bias, padding=1)
        # rms normalization keeps depth from compounding the feature scale,
        # so the conditional modulation stays bounded
        x = x * torch.rsqrt(x.pow(2).mean(dim=(1, 2, 3), keepdim=True) + 1e-8)
        scale, shift = self.film(torch.cat([z_row, emb], dim=1)).chunk(2, dim=1)
        x = x * (1.0 + scale[:, :, None, None]) + shift[:, :, None, None]
        return F.leaky_relu(x, 0.2)


class ClassSynthesis(nn.Module):
    def __init__(self, cfg: ClassSynthesisConfig, seed: int):
        super().__init__()
        self.cfg = cfg
        g = torch.Generator().manual_seed(seed)
        c, cond = cfg.channels, cfg.z_dim + cfg.emb_dim
        self.embedding = nn.Embedding(cfg.n_classes, cfg.emb_dim)
        with torch.no_grad():
            self.embedding.weight.copy_(torch.randn(cfg.n_classes, cfg.emb_dim, generator=g))
        self.project = nn.Linear(cond, c * cfg.const_res ** 2)
        with torch.no_grad():
            self.project.weight.copy_(torch.randn(c * cfg.const_res ** 2, cond, generator=g)
                                      / math.sqrt(cond))
            self.project.bias.zero_()
        self.layers = nn.ModuleList(
            _FilmLayer(cfg, l in cfg.up_layers, g) for l in range(cfg.n_layers))
        self.to_rgb = nn.Conv2d(c, 3, 1)
        with torch.no_grad():
            w_rgb = torch.randn(3, c, 1, 1, generator=g) * (0.25 / math.sqrt(c))
            # zero response to constant features: the class color bias must
            # stay the only dc term, or the oracle classifier loses its margin
            self.to_rgb.weight.copy_(w_rgb - w_rgb.mean(dim=1, keepdim=True))
            self.to_rgb.bias.zero_()
        self.register_buffer("class_colors", torch.from_numpy(CLASS_COLORS[:cfg.n_classes]))

    def input_block(self, z0, emb):
        c, r = self.cfg.channels, self.cfg.const_res
        return self.project(torch.cat([z0, emb], dim=1)).view(-1, c, r, r)

    def forward_slice(self, i, j, x, z_plus, emb, labels):
        """Layers i..j-1; z row l+1 conditions layer l. labels: [B] long."""
        for l in range(i, j):
            x = self.layers[l](x, z_plus[:, l + 1], emb)
        if j == self.cfg.n_layers:
            x = self.to_rgb(x) + self.class_colors[labels][:, :, None, None]
        return x


@dataclass(frozen=True, eq=False)
class ClassHandle:
    """Immutable view of a loaded class-conditional generator."""

    id: str
    net: ClassSynthesis = field(repr=False)
    n_sites: int
    z_dim: int
    n_classes: int
    slice_boundaries: tuple
    output_resolution: int
    classifier: str = "toy-median"

    def __post_init__(self):
        self.net.eval()
        self.net.requires_grad_(False)

    @property
    def space_layers(self) -> dict:
        return dict(zip(BIGGAN_SPACES[1:], self.slice_boundaries[1:-1]))

    @property
    def feature_spaces(self) -> tuple:
        return tuple(self.space_layers)

    @property
    def native_space(self) -> LatentSpace:
        return BIGGAN_SPACES[0]

    @property
    def num_style_layers(self) -> int:       # shared naming with GeneratorHandle
        return self.net.cfg.n_layers

    def feature_shape(self, layer: int) -> tuple:
        if layer not in self.slice_boundaries:
            raise UsageError(f"layer {layer} not a boundary {self.slice_boundaries}")
        cfg = self.net.cfg
        if layer == 0:
            return (cfg.channels, cfg.const_res, cfg.const_res)
        if layer == cfg.n_layers:
            return (3, self.output_resolution, self.output_resolution)
        res = cfg.out_resolutions()
        return (cfg.channels, res[layer - 1], res[layer - 1])

    def embed(self, label: int) -> torch.Tensor:
        # detached constant: gradients must never reach the class embedding
        idx = torch.as_tensor([int(label)])
        return self.net.embedding(idx).detach()


def load_class_generator(source: str, seed: int = 0) -> ClassHandle:
    if source == "toy":
        cfg = ClassSynthesisConfig()
        net = ClassSynthesis(cfg, seed)
        return ClassHandle(id=f"toy-cc:{seed}", net=net, n_sites=cfg.n_sites,
                           z_dim=cfg.z_dim, n_classes=cfg.n_classes,
                           slice_boundaries=cfg.boundaries,
                           output_resolution=cfg.out_resolutions()[-1])
    try:
        meta, arrays = samb.read_samb(source)
    except OSError as exc:
        raise LoadError(f"cannot read class generator {source}: {exc}") from exc
    if meta.get("kind") != "class-generator":
        raise LoadError(f"{source} is not a class-conditional checkpoint")
    cfg = ClassSynthesisConfig(
        n_layers=int(meta["n_layers"]), z_dim=int(meta["z_dim"]),
        channels=int(meta["channels"]), emb_dim=int(meta["emb_dim"]),
        n_classes=int(meta["n_classes"]), const_res=int(meta["const_res"]),
        up_layers=tuple(meta["up_layers"]), boundaries=tuple(meta["boundaries"]))
    net = ClassSynthesis(cfg, seed=0)
    state = {k: torch.from_numpy(v) for k, v in arrays.items()}
    try:
        net.load_state_dict(state)
    except RuntimeError as exc:
        raise ShapeError(f"checkpoint {source} does not match its layout: {exc}") from exc
    return ClassHandle(id=meta.get("id", str(source)), net=net, n_sites=cfg.n_sites,
                       z_dim=cfg.z_dim, n_classes=cfg.n_classes,
                       slice_boundaries=cfg.boundaries,
                       output_resolution=cfg.out_resolutions()[-1],
                       classifier=meta.get("classifier", "toy-median"))


def save_class_generator(h: ClassHandle, path) -> None:
    cfg = h.net.cfg
    meta = {"kind": "class-generator", "id": h.id, "n_layers": cfg.n_layers,
            "z_dim": cfg.z_dim, "channels": cfg.channels, "emb_dim": cfg.emb_dim,
            "n_classes": cfg.n_classes, "const_res": cfg.const_res,
            "up_layers": list(cfg.up_layers), "boundaries": list(cfg.boundaries),
            "classifier": h.classifier}
    samb.write_samb(path, meta, {k: v.numpy() for k, v in h.net.state_dict().items()})


# ---------------------------------------------------------------------------
# sampling, statistics, classification

def sample_z_plus(h: ClassHandle, seed: int) -> np.ndarray:
    """One z cloned to every injection site -> [K,Dz]."""
    g = torch.Generator().manual_seed(seed)
    z = torch.randn(h.z_dim, generator=g).numpy()
    return np.tile(z[None, :], (h.n_sites, 1)).astype(np.float32)


@dataclass(frozen=True)
class ZStatistics:
    mu: np.ndarray
    sigma: np.ndarray
    sigma_inv_reg: np.ndarray
    sample_count: int
    seed: int
    eps: float = 1e-6


def estimate_z_statistics(h: ClassHandle, n: int = 1000, seed: int = 0) -> ZStatistics:
    """Gaussian fit of raw z samples (z needs no gaussianizing conversion)."""
    if n < 2:
        raise UsageError(f"need at least 2 samples, got {n}")
    g = torch.Generator().manual_seed(seed)
    z = torch.randn(n, h.z_dim, generator=g).numpy().astype(np.float64)
    mu = z.mean(axis=0)
    c = z - mu
    sigma = c.T @ c / (n - 1)
    sigma = (sigma + sigma.T) / 2.0
    eps = 1e-6
    return ZStatistics(mu=mu, sigma=sigma,
                       sigma_inv_reg=np.linalg.inv(sigma + eps * np.eye(h.z_dim)),
                       sample_count=n, seed=seed, eps=eps)


_Z_STATS_CACHE: dict = {}


def z_statistics_for(h: ClassHandle, n: int = 1000, seed: int = 0) -> ZStatistics:
    key = (h.id, n, seed)
    if key not in _Z_STATS_CACHE:
        _Z_STATS_CACHE[key] = estimate_z_statistics(h, n, seed)
    return _Z_STATS_CACHE[key]


def zplus_regularizer(z_plus: np.ndarray, stats: ZStatistics, z0: np.ndarray) -> float:
    """Sum over rows of Mahalanobis distance plus drift from the initial code."""
    z = np.asarray(z_plus, dtype=np.float64)
    z0 = np.asarray(z0, dtype=np.float64)
    if z.shape != z0.shape:
        raise ShapeError(f"z shape {z.shape} != init shape {z0.shape}")
    if z.shape[-1] != stats.mu.shape[0]:
        raise ShapeError(f"z dim {z.shape[-1]} != stats dim {stats.mu.shape[0]}")
    c = z - stats.mu[None, :]
    maha = float(np.einsum("nd,de,ne->", c, stats.sigma_inv_reg, c))
    return maha + float(((z - z0) ** 2).sum())


def _z_prior_t(z, mu, sigma_inv, z0):
    c = z - mu
    maha = torch.einsum("bnd,de,bne->bn", c, sigma_inv, c).sum(dim=1)
    return maha + (z - z0).pow(2).sum(dim=(1, 2))


_CLASSIFIERS: dict = {}


def register_classifier(name: str, fn) -> None:
    """fn(image_chw) -> int label."""
    _CLASSIFIERS[name] = fn


def _median_color_classifier(image: np.ndarray) -> int:
    """Oracle for the fixture: medians recover the class color-bias signs."""
    med = np.median(np.asarray(image, dtype=np.float64), axis=(1, 2))
    return int(sum((1 << k) for k in range(3) if med[k] > 0))


register_classifier("toy-median", _median_color_classifier)


def predict_class(image: np.ndarray, classifier: str = "toy-median") -> int:
    if classifier not in _CLASSIFIERS:
        raise UsageError(f"classifier {classifier!r} unavailable; "
                         f"registered: {sorted(_CLASSIFIERS)}")
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ShapeError(f"expected CHW image, got {arr.shape}")
    return int(_CLASSIFIERS[classifier](arr))


# ---------------------------------------------------------------------------
# bundles and formation

@dataclass
class ClassBundle:
    generator_id: str
    z_plus: np.ndarray               # [K,Dz]
    class_label: int
    delta_f: dict = field(default_factory=dict)
    masks: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def form_image_cc_t(h: ClassHandle, z: torch.Tensor, labels: torch.Tensor,
                    emb: torch.Tensor, deltas: dict, masks: dict) -> torch.Tensor:
    x = h.net.input_block(z[:, 0], emb)
    prev = 0
    for s, b in h.space_layers.items():
        x = h.net.forward_slice(prev, b, x, z, emb, labels)
        if s in deltas:
            m = masks.get(s)
            x = x + deltas[s] if m is None else x + m * deltas[s]
        prev = b
    return h.net.forward_slice(prev, h.net.cfg.n_layers, x, z, emb, labels)


def form_image_cc(h: ClassHandle, bundle: ClassBundle) -> np.ndarray:
    z = torch.from_numpy(np.ascontiguousarray(bundle.z_plus, dtype=np.float32))[None]
    if z.shape[1:] != (h.n_sites, h.z_dim):
        raise ShapeError(f"z_plus shape {bundle.z_plus.shape} != ({h.n_sites},{h.z_dim})")
    labels = torch.as_tensor([bundle.class_label])
    emb = h.embed(bundle.class_label)
    deltas = {s: torch.from_numpy(np.ascontiguousarray(d, dtype=np.float32))[None]
              for s, d in bundle.delta_f.items()}
    masks = {s: torch.from_numpy(np.ascontiguousarray(m, dtype=np.float32))[None, None]
             for s, m in bundle.masks.items() if s in bundle.delta_f}
    with torch.no_grad():
        return form_image_cc_t(h, z, labels, emb, deltas, masks)[0].numpy()


def synthesize_cc(h: ClassHandle, z_plus: np.ndarray, label: int) -> np.ndarray:
    return form_image_cc(h, ClassBundle(h.id, np.asarray(z_plus, np.float32), int(label)))


def sample_image_cc(h: ClassHandle, label: int, seed: int) -> np.ndarray:
    return synthesize_cc(h, sample_z_plus(h, seed), label)


def _resolve_masks_cc(h: ClassHandle, assignment) -> dict:
    if assignment is None:
        return {}
    if hasattr(assignment, "masks"):
        assignment = assignment.masks
    if isinstance(assignment, (str, LatentSpace)):
        assignment = [assignment]
    items = assignment.items() if isinstance(assignment, dict) \
        else [(s, None) for s in assignment]
    layers = h.space_layers
    out = {}
    for s, m in items:
        s = LatentSpace(s)
        if s == h.native_space:
            continue
        if s not in layers:
            raise UsageError(f"space {s} not available on {h.id}")
        shape = h.feature_shape(layers[s])[1:]
        m = np.ones(shape, np.float32) if m is None else np.asarray(m, np.float32)
        if tuple(m.shape) != shape:
            raise ShapeError(f"mask for {s} has shape {m.shape}, expected {shape}")
        if m.max(initial=0.0) > 0.0:
            out[s] = m
    return out


@dataclass
class ClassInversionResult:
    bundle: ClassBundle
    history: list
    best_step: int
    best_loss: float
    duration_s: float


def invert_class_conditional(h: ClassHandle, image: np.ndarray, assignment=None,
                             cfg: OptimizationConfig | None = None,
                             classifier: str | None = None,
                             stats: ZStatistics | None = None) -> ClassInversionResult:
    return invert_class_conditional_batch(
        h, np.asarray(image, np.float32)[None], assignment, cfg, classifier, stats)[0]


def invert_class_conditional_batch(h: ClassHandle, images: np.ndarray, assignment=None,
                                   cfg: OptimizationConfig | None = None,
                                   classifier: str | None = None,
                                   stats: ZStatistics | None = None) -> list:
    """Predict each image's class, then optimize z rows and masked offsets.

    The predicted label is frozen before the first step; only z_plus and
    feature offsets ever receive gradients.
    """
    cfg = cfg or OptimizationConfig()
    stats = stats or z_statistics_for(h)
    images = np.asarray(images, dtype=np.float32)
    B = images.shape[0]
    res = h.output_resolution
    if images.shape[1:] != (3, res, res):
        raise ShapeError(f"target batch shape {images.shape} != (B,3,{res},{res})")
    labels_np = [predict_class(images[b], classifier or h.classifier) for b in range(B)]
    labels = torch.as_tensor(labels_np)
    emb = torch.cat([h.embed(l) for l in labels_np], dim=0)

    if isinstance(assignment, list):
        if len(assignment) != B:
            raise UsageError(f"{len(assignment)} assignments for {B} targets")
        per_target = [_resolve_masks_cc(h, a) for a in assignment]
    else:
        per_target = [_resolve_masks_cc(h, assignment)] * B
    spaces = sorted({s for m in per_target for s in m}, key=lambda s: s.value)
    layers = h.space_layers
    mask_stacks = {}
    for s in spaces:
        shape = h.feature_shape(layers[s])[1:]
        mask_stacks[s] = np.stack([m.get(s, np.zeros(shape, np.float32))
                                   for m in per_target])

    x = torch.from_numpy(images)
    percep = get_perceptual(cfg.perceptual)
    z0_np = np.tile(stats.mu.astype(np.float32)[None, None, :], (B, h.n_sites, 1))
    z0 = torch.from_numpy(z0_np)
    z = z0.clone().requires_grad_(True)
    deltas = {s: torch.zeros((B,) + h.feature_shape(layers[s]), requires_grad=True)
              for s in mask_stacks}
    masks = {s: torch.from_numpy(m)[:, None] for s, m in mask_stacks.items()}
    mu = torch.from_numpy(stats.mu.astype(np.float32))
    sigma_inv = torch.from_numpy(stats.sigma_inv_reg.astype(np.float32))

    groups = [{"params": [z], "lr": cfg.lr_w}]
    if deltas:
        groups.append({"params": list(deltas.values()), "lr": cfg.lr_delta})
    opt = torch.optim.Adam(groups)

    histories = [[] for _ in range(B)]
    best_loss = np.full(B, np.inf)
    best_step = np.full(B, -1, dtype=int)
    best_z = [z0_np[b] for b in range(B)]
    best_deltas = [{} for _ in range(B)]
    t0 = time.perf_counter()
    for step in range(cfg.steps):
        opt.zero_grad(set_to_none=True)
        out = form_image_cc_t(h, z, labels, emb, deltas, masks)
        l2 = (x - out).pow(2).mean(dim=(1, 2, 3))
        lp = percep.distance_t(x, out) if cfg.weights.lpips > 0 else torch.zeros_like(l2)
        z_reg = _z_prior_t(z, mu, sigma_inv, z0)
        f_reg = torch.zeros_like(l2)
        for d in deltas.values():
            f_reg = f_reg + d.pow(2).sum(dim=(1, 2, 3))
        total = l2 + cfg.weights.lpips * lp + cfg.weights.z_reg * z_reg \
            + cfg.weights.f_reg * f_reg
        vals = {"total": total.detach().numpy(), "l2": l2.detach().numpy(),
                "lpips": lp.detach().numpy(), "z_reg": z_reg.detach().numpy(),
                "f_reg": f_reg.detach().numpy()}
        for name, arr in vals.items():
            if not np.isfinite(arr).all():
                raise NonFiniteLossError(name, float(arr.ravel()[0]))
        z_np = d_np = None
        for b in range(B):
            rec = {k: float(v[b]) for k, v in vals.items()}
            rec["step"] = step
            histories[b].append(rec)
            if rec["total"] < best_loss[b]:
                if z_np is None:
                    z_np = z.detach().numpy()
                    d_np = {s: d.detach().numpy() for s, d in deltas.items()}
                best_loss[b] = rec["total"]
                best_step[b] = step
                best_z[b] = z_np[b].copy()
                best_deltas[b] = {s: d[b].copy() for s, d in d_np.items()}
        total.sum().backward()
        opt.step()
    duration = time.perf_counter() - t0

    results = []
    for b in range(B):
        keep = {s: m[b] for s, m in mask_stacks.items() if m[b].max(initial=0.0) > 0.0}
        bundle = ClassBundle(
            generator_id=h.id, z_plus=best_z[b].astype(np.float32),
            class_label=int(labels_np[b]),
            delta_f={s: best_deltas[b][s].astype(np.float32) for s in keep},
            masks={s: m.astype(np.float32) for s, m in keep.items()},
            meta={"steps": cfg.steps, "best_step": int(best_step[b]),
                  "class_label": int(labels_np[b])})
        results.append(ClassInversionResult(
            bundle=bundle, history=histories[b], best_step=int(best_step[b]),
            best_loss=float(best_loss[b]), duration_s=duration / B))
    return results


def save_class_bundle(path, bundle: ClassBundle) -> None:
    meta = {"kind": "latent-bundle", "family": "class-conditional",
            "generator_id": bundle.generator_id,
            "class_label": int(bundle.class_label), "meta": bundle.meta}
    arrays = {"z_plus": bundle.z_plus.astype(np.float32)}
    for s, d in bundle.delta_f.items():
        arrays[f"delta/{s.value}"] = d.astype(np.float32)
    for s, m in bundle.masks.items():
        arrays[f"mask/{s.value}"] = np.asarray(m, np.float32)
    samb.write_samb(path, meta, arrays)


def load_class_bundle(path) -> ClassBundle:
    meta, arrays = samb.read_samb(path)
    if meta.get("kind") != "latent-bundle" or "class_label" not in meta:
        raise UsageError(f"{path} is not a class-conditional bundle")
    delta_f, masks = {}, {}
    for key, arr in arrays.items():
        if key.startswith("delta/"):
            delta_f[LatentSpace(key.split("/", 1)[1])] = arr
        elif key.startswith("mask/"):
            masks[LatentSpace(key.split("/", 1)[1])] = arr
    return ClassBundle(generator_id=meta["generator_id"], z_plus=arrays["z_plus"],
                       class_label=int(meta["class_label"]), delta_f=delta_f,
                       masks=masks, meta=meta.get("meta", {}))
