"""Invertibility predictor: image -> per-space spatial error maps.

A shared conv backbone feeds one small head per latent space. Heads end in
a ReLU so predicted maps are non-negative like the perceptual error maps
they regress. Trained with plain MSE against measured maps; the constant
per-space mean map over the training set is the reference baseline any
useful predictor must beat.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import PredictorConfig
from .errors import LoadError, ShapeError
from .samb import read_samb, write_samb
from .spaces import LatentSpace

BACKBONE_CHANNELS = 8


def _conv(cin, cout, g, k=3):
    c = nn.Conv2d(cin, cout, k, padding=k // 2)
    with torch.no_grad():
        c.weight.copy_(torch.randn(cout, cin, k, k, generator=g)
                       * math.sqrt(2.0 / (cin * k * k)))
        c.bias.zero_()
    return c


class ErrorPredictor(nn.Module):
    """Shared backbone to BACKBONE_CHANNELS features, then a head per space."""

    def __init__(self, spaces, resolution: int = 32, seed: int = 0):
        super().__init__()
        self.spaces = tuple(LatentSpace(s) for s in spaces)
        self.resolution = resolution
        g = torch.Generator().manual_seed(seed)
        self.backbone = nn.Sequential(
            _conv(3, 32, g), nn.LeakyReLU(0.2),
            _conv(32, 32, g), nn.LeakyReLU(0.2),
            _conv(32, BACKBONE_CHANNELS, g), nn.LeakyReLU(0.2),
        )
        heads = {}
        for s in self.spaces:
            heads[s.value] = nn.Sequential(
                _conv(BACKBONE_CHANNELS, 16, g), nn.BatchNorm2d(16), nn.LeakyReLU(0.2),
                _conv(16, 16, g), nn.BatchNorm2d(16), nn.LeakyReLU(0.2),
                _conv(16, 1, g), nn.ReLU(),
            )
        self.heads = nn.ModuleDict(heads)

    def forward(self, x: torch.Tensor) -> dict:
        """x: [B,3,H,W] at self.resolution -> {space: [B,1,H,W]} maps >= 0."""
        feats = self.backbone(x)
        return {s: self.heads[s.value](feats) for s in self.spaces}


def _stack_batch(items, spaces):
    xs = np.stack([it["image"] for it in items]).astype(np.float32)
    ys = {s: np.stack([it["errors"][s] for it in items])[:, None].astype(np.float32)
          for s in spaces}
    return torch.from_numpy(xs), {s: torch.from_numpy(y) for s, y in ys.items()}


def _fit_resolution(x: torch.Tensor, res: int) -> torch.Tensor:
    if x.shape[-1] == res and x.shape[-2] == res:
        return x
    return F.interpolate(x, size=(res, res), mode="bilinear", align_corners=False)


def mean_map_baseline(items, spaces=None) -> dict:
    """Constant predictor: the per-space mean of all training maps."""
    spaces = spaces or sorted(items[0]["errors"], key=lambda s: s.value)
    return {s: np.mean([it["errors"][s] for it in items], axis=0) for s in spaces}


def maps_mse(pred, items) -> float:
    """MSE over items; pred is {space: map} or a callable item -> {space: map}."""
    total, n = 0.0, 0
    for it in items:
        for s in it["errors"]:
            p = pred(it)[s] if callable(pred) else pred[s]
            total += float(((p - it["errors"][s]) ** 2).sum())
            n += it["errors"][s].size
    return total / n


def train_predictor(items, cfg: PredictorConfig | None = None, val_items=None):
    """Train on dataset items; returns (model, report).

    report: train_loss curve, validation MSE of the model and of the
    constant mean-map baseline computed on the same split.
    """
    cfg = cfg or PredictorConfig()
    spaces = sorted(items[0]["errors"], key=lambda s: s.value)
    model = ErrorPredictor(spaces, resolution=cfg.resolution, seed=cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    model.train()
    curve = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(items))
        losses = []
        for start in range(0, len(items), cfg.batch_size):
            batch = [items[i] for i in order[start:start + cfg.batch_size]]
            x, ys = _stack_batch(batch, spaces)
            x = _fit_resolution(x, cfg.resolution)
            opt.zero_grad(set_to_none=True)
            preds = model(x)
            loss = sum(F.mse_loss(_fit_resolution(preds[s], ys[s].shape[-1]), ys[s])
                       for s in spaces)
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
        curve.append(float(np.mean(losses)))
    model.eval()
    report = {"train_loss": curve, "spaces": [s.value for s in spaces]}
    if val_items:
        report["val_mse"] = maps_mse(lambda it: predict_error_maps(model, it["image"]),
                                     val_items)
        baseline = mean_map_baseline(items, spaces)
        report["baseline_val_mse"] = maps_mse(baseline, val_items)
    return model, report


def predict_error_maps(model: ErrorPredictor, image: np.ndarray) -> dict:
    """Predicted {space: [H,W]} maps at the image's own resolution."""
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ShapeError(f"expected CHW image, got {arr.shape}")
    h, w = arr.shape[1:]
    x = torch.from_numpy(np.ascontiguousarray(arr))[None]
    x = _fit_resolution(x, model.resolution)
    with torch.no_grad():
        preds = model(x)
    out = {}
    for s, p in preds.items():
        if p.shape[-2:] != (h, w):
            p = F.interpolate(p, size=(h, w), mode="bilinear", align_corners=False)
            p = p.clamp(min=0.0)
        out[s] = p[0, 0].numpy()
    return out


def save_predictor(path, model: ErrorPredictor) -> None:
    meta = {"kind": "error-predictor", "spaces": [s.value for s in model.spaces],
            "resolution": model.resolution}
    arrays = {k: v.detach().numpy().astype(np.float32)
              for k, v in model.state_dict().items()}
    write_samb(path, meta, arrays)


def load_predictor(path) -> ErrorPredictor:
    meta, arrays = read_samb(path)
    if meta.get("kind") != "error-predictor":
        raise LoadError(f"{path} is not a predictor checkpoint")
    model = ErrorPredictor([LatentSpace(s) for s in meta["spaces"]],
                           resolution=int(meta["resolution"]))
    state = {k: torch.from_numpy(v) for k, v in arrays.items()}
    model.load_state_dict(state)
    model.eval()
    return model
