"""Feed-forward encoders: one network pass instead of an optimization loop.

A style encoder maps the image to a full extended style (predicted as an
offset from the mean style). Per-space feature encoders then look at the
image next to the style-only reconstruction and emit a feature offset at
that space's resolution. Training is staged: the style encoder first, then
each feature encoder with the style branch frozen.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import OptimizationConfig
from .errors import LoadError, ShapeError, UsageError
from .generator import GeneratorHandle, sample_style, synthesize
from .inversion import (LatentBundle, _resolve_masks, form_image_t,
                        style_statistics_for)
from .samb import read_samb, write_samb
from .spaces import LatentSpace
from .synthetic import patched_target


def _conv(cin, cout, g, k=3, stride=1):
    c = nn.Conv2d(cin, cout, k, stride=stride, padding=k // 2)
    with torch.no_grad():
        c.weight.copy_(torch.randn(cout, cin, k, k, generator=g)
                       * math.sqrt(2.0 / (cin * k * k)))
        c.bias.zero_()
    return c


class StyleEncoder(nn.Module):
    """Image -> extended style offsets. Conv trunk kept at half resolution."""

    def __init__(self, n_layers: int, style_dim: int, seed: int = 0):
        super().__init__()
        self.n_layers = n_layers
        self.style_dim = style_dim
        g = torch.Generator().manual_seed(seed)
        self.trunk = nn.Sequential(
            _conv(3, 32, g), nn.LeakyReLU(0.2),
            _conv(32, 64, g, stride=2), nn.LeakyReLU(0.2),
            _conv(64, 64, g), nn.LeakyReLU(0.2),
        )
        self.head = nn.Linear(64, n_layers * style_dim)
        with torch.no_grad():
            self.head.weight.copy_(torch.randn(n_layers * style_dim, 64, generator=g) * 0.02)
            self.head.bias.zero_()

    def forward(self, x: torch.Tensor, w_mean: torch.Tensor) -> torch.Tensor:
        feats = self.trunk(x).mean(dim=(2, 3))
        off = self.head(feats).view(-1, self.n_layers, self.style_dim)
        return w_mean[None] + off


class FeatureEncoder(nn.Module):
    """(image, style-only render) -> feature offset at one space's resolution."""

    def __init__(self, channels: int, image_res: int, feature_res: int, seed: int = 0):
        super().__init__()
        if image_res % feature_res:
            raise UsageError(f"image res {image_res} not divisible by feature res {feature_res}")
        self.channels = channels
        self.image_res = image_res
        self.feature_res = feature_res
        n_down = int(math.log2(image_res // feature_res))
        g = torch.Generator().manual_seed(seed)
        layers = [_conv(6, 32, g), nn.LeakyReLU(0.2)]
        for _ in range(n_down):
            layers += [_conv(32, 32, g, stride=2), nn.LeakyReLU(0.2)]
        layers += [_conv(32, 32, g), nn.LeakyReLU(0.2), _conv(32, channels, g, k=1)]
        with torch.no_grad():
            layers[-1].weight.mul_(0.1)       # start near the zero offset
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor, base: torch.Tensor) -> torch.Tensor:
        return self.net(torch.cat([x, base], dim=1))


class EncoderSet:
    """Style encoder + per-space feature encoders bound to one generator."""

    def __init__(self, generator_id: str, style: StyleEncoder, features: dict,
                 w_mean: np.ndarray):
        self.generator_id = generator_id
        self.style = style
        self.features = features          # space -> FeatureEncoder
        self.w_mean = w_mean.astype(np.float32)

    def eval(self):
        self.style.eval()
        for enc in self.features.values():
            enc.eval()
        return self


def build_encoders(h: GeneratorHandle, seed: int = 0) -> EncoderSet:
    stats = style_statistics_for(h)
    style = StyleEncoder(h.num_style_layers, h.style_dim, seed=seed)
    features = {}
    for k, (s, b) in enumerate(h.space_layers.items()):
        c, rh, _ = h.feature_shape(b)
        features[s] = FeatureEncoder(c, h.output_resolution, rh, seed=seed + 1 + k)
    return EncoderSet(h.id, style, features, stats.w_mean)


def _sample_batch(h: GeneratorHandle, n: int, seed: int, patched: bool):
    imgs, ws = [], []
    for i in range(n):
        if patched:
            img, _ = patched_target(h, seed + i)
            imgs.append(img)
        else:
            w = sample_style(h, seed + i)
            ws.append(w)
            imgs.append(synthesize(h, w))
    x = torch.from_numpy(np.stack(imgs).astype(np.float32))
    w_gt = torch.from_numpy(np.stack(ws).astype(np.float32)) if ws else None
    return x, w_gt


def train_encoders(h: GeneratorHandle, seed: int = 0, style_steps: int = 300,
                   feature_steps: int = 200, batch: int = 16, lr: float = 1e-3,
                   progress=None) -> EncoderSet:
    """Two-stage training on generator samples; returns the trained set.

    Stage 1 regresses sampled styles (plus an image term). Stage 2 trains
    each feature encoder by reconstruction through the formation path, with
    the style encoder frozen.
    """
    encs = build_encoders(h, seed=seed)
    w_mean_t = torch.from_numpy(encs.w_mean)

    opt = torch.optim.Adam(encs.style.parameters(), lr=lr)
    step_count = 0
    total_steps = style_steps + feature_steps * len(encs.features)
    for step in range(style_steps):
        x, w_gt = _sample_batch(h, batch, seed * 100003 + step * batch, patched=False)
        opt.zero_grad(set_to_none=True)
        w_pred = encs.style(x, w_mean_t)
        out = form_image_t(h, w_pred, {}, {})
        loss = F.mse_loss(w_pred, w_gt) + F.mse_loss(out, x)
        loss.backward()
        opt.step()
        step_count += 1
        if progress is not None:
            progress(step_count, total_steps)
    encs.style.eval()
    encs.style.requires_grad_(False)

    for s, enc in encs.features.items():
        opt = torch.optim.Adam(enc.parameters(), lr=lr)
        for step in range(feature_steps):
            x, _ = _sample_batch(h, batch, seed * 900001 + step * batch, patched=True)
            with torch.no_grad():
                w_pred = encs.style(x, w_mean_t)
                base = form_image_t(h, w_pred, {}, {})
            opt.zero_grad(set_to_none=True)
            delta = enc(x, base)
            out = form_image_t(h, w_pred, {s: delta}, {})
            loss = F.mse_loss(out, x) + 1e-5 * delta.pow(2).sum(dim=(1, 2, 3)).mean()
            loss.backward()
            opt.step()
            step_count += 1
            if progress is not None:
                progress(step_count, total_steps)
        enc.eval()
        enc.requires_grad_(False)
    return encs.eval()


def encode_bundle(h: GeneratorHandle, encs: EncoderSet, image: np.ndarray,
                  assignment=None) -> LatentBundle:
    """One forward pass to a renderable bundle; masks follow the assignment."""
    if encs.generator_id != h.id:
        raise UsageError(f"encoder set was trained for {encs.generator_id}, not {h.id}")
    if image.shape != (3, h.output_resolution, h.output_resolution):
        raise ShapeError(f"image shape {image.shape} != "
                         f"(3,{h.output_resolution},{h.output_resolution})")
    x = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32))[None]
    mask_arrays = _resolve_masks(h, assignment)
    with torch.no_grad():
        w_pred = encs.style(x, torch.from_numpy(encs.w_mean))
        delta_f = {}
        if mask_arrays:
            base = form_image_t(h, w_pred, {}, {})
            for s in mask_arrays:
                delta_f[s] = encs.features[s](x, base)[0].numpy().astype(np.float32)
    return LatentBundle(
        generator_id=h.id, w_plus=w_pred[0].numpy().astype(np.float32),
        delta_f=delta_f, masks=dict(mask_arrays),
        meta={"method": "encoder"})


_ENC_SPEC_FILE = "encoder.json"


def save_encoders(path, encs: EncoderSet) -> None:
    spec = {
        "generator_id": encs.generator_id,
        "style": {"n_layers": encs.style.n_layers, "style_dim": encs.style.style_dim},
        "features": {s.value: {"channels": enc.channels, "image_res": enc.image_res,
                               "feature_res": enc.feature_res}
                     for s, enc in encs.features.items()},
    }
    meta = {"kind": "encoder-set", "generator_id": encs.generator_id}
    arrays = {"w_mean": encs.w_mean}
    for k, v in encs.style.state_dict().items():
        arrays[f"style/{k}"] = v.numpy().astype(np.float32)
    for s, enc in encs.features.items():
        for k, v in enc.state_dict().items():
            arrays[f"feature/{s.value}/{k}"] = v.numpy().astype(np.float32)
    write_samb(path, meta, arrays, extra_json={_ENC_SPEC_FILE: spec})


def load_encoders(path, h: GeneratorHandle) -> EncoderSet:
    meta, arrays = read_samb(path)
    if meta.get("kind") != "encoder-set":
        raise LoadError(f"{path} is not an encoder checkpoint")
    if meta.get("generator_id") != h.id:
        raise UsageError(f"encoder checkpoint {path} targets generator "
                         f"{meta.get('generator_id')!r}, not {h.id!r}")
    encs = build_encoders(h)
    encs.w_mean = arrays["w_mean"]
    style_state = {k.split("/", 1)[1]: torch.from_numpy(v)
                   for k, v in arrays.items() if k.startswith("style/")}
    encs.style.load_state_dict(style_state)
    for s, enc in encs.features.items():
        prefix = f"feature/{s.value}/"
        state = {k[len(prefix):]: torch.from_numpy(v)
                 for k, v in arrays.items() if k.startswith(prefix)}
        enc.load_state_dict(state)
    return encs.eval()
