"""Style-based generator wrapper: sliced sub-networks, style sampling, statistics.

A generator is held behind an immutable `GeneratorHandle` exposing the
network as composable slices between fixed layer boundaries. The package
ships a small deterministic 32x32 fixture ("toy") so everything downstream
runs on CPU in seconds; checkpoints saved by this package load back at any
size via `load_generator(path)`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import samb
from .errors import LoadError, ShapeError, UsageError
from .spaces import STYLEGAN_SPACES, LatentSpace

# Toy fixture layout: 8 style layers at 32x32 standing in for the 16-layer
# full-scale layout; boundaries mirror {0,4,6,8,10,16}.
TOY_BOUNDARIES = (0, 2, 3, 4, 5, 8)
TOY_STYLE_DIM = 64
TOY_CHANNELS = 32
NOISE_GAIN = 0.05


@dataclass(frozen=True)
class SynthesisConfig:
    n_layers: int = 8
    style_dim: int = TOY_STYLE_DIM
    channels: int = TOY_CHANNELS
    const_res: int = 4
    up_layers: tuple = (1, 3, 5)
    boundaries: tuple = TOY_BOUNDARIES

    def out_resolutions(self) -> list[int]:
        """Output spatial side of every layer."""
        res, out = self.const_res, []
        for l in range(self.n_layers):
            if l in self.up_layers:
                res *= 2
            out.append(res)
        return out


def stylegan2_layout(resolution: int = 512, channels: int = 8,
                     style_dim: int = 512) -> SynthesisConfig:
    """Full-scale 16-layer layout with boundaries (0,4,6,8,10,16)."""
    n_ups = int(math.log2(resolution // 4))
    return SynthesisConfig(
        n_layers=16,
        style_dim=style_dim,
        channels=channels,
        const_res=4,
        up_layers=tuple(range(1, 2 * n_ups, 2)),
        boundaries=(0, 4, 6, 8, 10, 16),
    )


class _ModulatedLayer(nn.Module):
    """One style-modulated 3x3 conv with demodulation and a frozen noise map."""

    def __init__(self, style_dim: int, channels: int, out_res: int, up: bool,
                 g: torch.Generator):
        super().__init__()
        self.up = up
        self.affine = nn.Linear(style_dim, channels)
        with torch.no_grad():
            self.affine.weight.copy_(
                torch.randn(channels, style_dim, generator=g) / math.sqrt(style_dim))
            self.affine.bias.fill_(1.0)
        self.weight = nn.Parameter(torch.randn(channels, channels, 3, 3, generator=g))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.register_buffer("noise", torch.randn(1, 1, out_res, out_res, generator=g))

    def forward(self, x: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
        # x: [B,C,H,W], w: [B,D] (this layer's style row)
        if self.up:
            x = F.interpolate(x, scale_factor=2.0, mode="bilinear", align_corners=False)
        s = self.affine(w)                                   # [B,C]
        x = x * s[:, :, None, None]
        x = F.conv2d(x, self.weight, padding=1)
        wsq = self.weight.pow(2).sum(dim=(2, 3))             # [Cout,Cin]
        demod = torch.rsqrt(wsq @ (s * s).T + 1e-8).T        # [B,Cout]
        x = x * demod[:, :, None, None]
        x = x + NOISE_GAIN * self.noise
        return F.leaky_relu(x + self.bias[None, :, None, None], 0.2)


class StyleSynthesis(nn.Module):
    """Mapping MLP + modulated conv stack + unmodulated toRGB."""

    def __init__(self, cfg: SynthesisConfig, seed: int):
        super().__init__()
        self.cfg = cfg
        g = torch.Generator().manual_seed(seed)
        d = cfg.style_dim
        self.map1 = nn.Linear(d, d)
        self.map2 = nn.Linear(d, d)
        self.map3 = nn.Linear(d, d)
        for lin in (self.map1, self.map2, self.map3):
            with torch.no_grad():
                lin.weight.copy_(torch.randn(d, d, generator=g) / math.sqrt(d))
                lin.bias.zero_()
        self.register_buffer(
            "const", torch.randn(cfg.channels, cfg.const_res, cfg.const_res, generator=g))
        resolutions = cfg.out_resolutions()
        self.layers = nn.ModuleList(
            _ModulatedLayer(d, cfg.channels, resolutions[l], l in cfg.up_layers, g)
            for l in range(cfg.n_layers))
        self.to_rgb = nn.Conv2d(cfg.channels, 3, 1)
        with torch.no_grad():
            # gain keeps toy outputs spread over a usable slice of [-1,1]
            self.to_rgb.weight.copy_(
                torch.randn(3, cfg.channels, 1, 1, generator=g) * (6.0 / math.sqrt(cfg.channels)))
            self.to_rgb.bias.zero_()

    def mapping(self, z: torch.Tensor) -> torch.Tensor:
        h = F.leaky_relu(self.map1(z), 0.2)
        h = F.leaky_relu(self.map2(h), 0.2)
        return self.map3(h)

    def forward_slice(self, i: int, j: int, x: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
        """Run conv layers i..j-1; apply toRGB if j is the final layer count.

        x: [B,C,H,W] features at layer i; w: [B,N,D]. Only style rows i..j-1
        are read, so styles of other layers cannot influence the output.
        """
        for l in range(i, j):
            x = self.layers[l](x, w[:, l])
        if j == self.cfg.n_layers:
            x = self.to_rgb(x)
        return x


@dataclass(frozen=True, eq=False)
class GeneratorHandle:
    """Immutable view of a loaded generator. Safe for concurrent read-only use."""

    id: str
    net: StyleSynthesis = field(repr=False)
    num_style_layers: int
    style_dim: int
    slice_boundaries: tuple
    output_resolution: int

    def __post_init__(self):
        b = self.slice_boundaries
        if list(b) != sorted(set(b)) or b[0] != 0 or b[-1] != self.num_style_layers:
            raise ShapeError(f"bad slice boundaries {b} for {self.num_style_layers} layers")
        self.net.eval()
        self.net.requires_grad_(False)

    @property
    def constant_input(self) -> np.ndarray:
        return self.net.const.detach().numpy().copy()

    @property
    def space_layers(self) -> dict[LatentSpace, int]:
        """Feature spaces mapped to their injection boundaries (editability order)."""
        inner = self.slice_boundaries[1:-1]
        return dict(zip(STYLEGAN_SPACES[1:], inner))

    @property
    def feature_spaces(self) -> tuple:
        return tuple(self.space_layers)

    @property
    def native_space(self) -> LatentSpace:
        return STYLEGAN_SPACES[0]

    def feature_shape(self, layer: int) -> tuple[int, int, int]:
        if layer not in self.slice_boundaries:
            raise UsageError(f"layer {layer} is not a slice boundary {self.slice_boundaries}")
        if layer == 0:
            c = self.net.const
            return (c.shape[0], c.shape[1], c.shape[2])
        res = self.net.cfg.out_resolutions()
        if layer == self.num_style_layers:
            return (3, self.output_resolution, self.output_resolution)
        return (self.net.cfg.channels, res[layer - 1], res[layer - 1])

    # torch-level helpers used by the optimizers; public ops wrap these.
    def slice_t(self, i: int, j: int, x: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
        if i not in self.slice_boundaries or j not in self.slice_boundaries or i >= j:
            raise UsageError(f"({i},{j}) is not a boundary pair of {self.slice_boundaries}")
        return self.net.forward_slice(i, j, x, w)

    def const_t(self, batch: int = 1, dtype=torch.float32) -> torch.Tensor:
        return self.net.const.to(dtype)[None].expand(batch, -1, -1, -1)

    def mapping_t(self, z: torch.Tensor) -> torch.Tensor:
        return self.net.mapping(z)

    def double_copy(self) -> "GeneratorHandle":
        """float64 twin for finite-difference work."""
        cfg = self.net.cfg
        net = StyleSynthesis(cfg, seed=0)
        net.load_state_dict(self.net.state_dict())
        net.double()
        return GeneratorHandle(
            id=self.id + "/f64", net=net, num_style_layers=self.num_style_layers,
            style_dim=self.style_dim, slice_boundaries=self.slice_boundaries,
            output_resolution=self.output_resolution)


@dataclass(frozen=True)
class FeatureTensor:
    """Activations at a slice boundary."""

    values: np.ndarray
    layer_index: int


@dataclass(frozen=True)
class StyleStatistics:
    """Gaussian fit of converted style samples, plus the raw mean used for init.

    mu/sigma are over gaussianized samples (negative side expanded 5x);
    sigma_inv_reg is inv(sigma + eps*I).
    """

    mu: np.ndarray
    sigma: np.ndarray
    sigma_inv_reg: np.ndarray
    sample_count: int
    seed: int
    w_mean: np.ndarray
    eps: float = 1e-6


def gaussianize_style(w: np.ndarray) -> np.ndarray:
    """Map styles back toward their Gaussian preimage: x for x>=0, 5x for x<0."""
    w = np.asarray(w)
    return np.where(w >= 0, w, 5.0 * w)


def _gaussianize_t(w: torch.Tensor) -> torch.Tensor:
    return F.leaky_relu(w, negative_slope=5.0)


def _build_from_config(cfg: SynthesisConfig, seed: int, id: str) -> GeneratorHandle:
    net = StyleSynthesis(cfg, seed)
    return GeneratorHandle(
        id=id,
        net=net,
        num_style_layers=cfg.n_layers,
        style_dim=cfg.style_dim,
        slice_boundaries=cfg.boundaries,
        output_resolution=cfg.out_resolutions()[-1],
    )


def load_generator(source: str, seed: int = 0) -> GeneratorHandle:
    """Load a generator: "toy" for the CPU fixture, else a checkpoint path."""
    if source == "toy":
        return _build_from_config(SynthesisConfig(), seed, id=f"toy:{seed}")
    try:
        meta, arrays = samb.read_samb(source)
    except LoadError:
        raise
    except OSError as exc:
        raise LoadError(f"cannot read generator weights {source}: {exc}") from exc
    if meta.get("kind") != "style-generator":
        raise LoadError(f"{source} is not a generator checkpoint (kind={meta.get('kind')!r})")
    cfg = SynthesisConfig(
        n_layers=int(meta["n_layers"]),
        style_dim=int(meta["style_dim"]),
        channels=int(meta["channels"]),
        const_res=int(meta["const_res"]),
        up_layers=tuple(meta["up_layers"]),
        boundaries=tuple(meta["boundaries"]),
    )
    handle = _build_from_config(cfg, seed=0, id=meta.get("id", str(source)))
    state = {k: torch.from_numpy(v) for k, v in arrays.items()}
    try:
        handle.net.load_state_dict(state)
    except RuntimeError as exc:
        raise ShapeError(f"checkpoint {source} does not match its declared layout: {exc}") from exc
    handle.net.requires_grad_(False)
    return handle


def save_generator(h: GeneratorHandle, path) -> None:
    cfg = h.net.cfg
    meta = {
        "kind": "style-generator",
        "id": h.id,
        "n_layers": cfg.n_layers,
        "style_dim": cfg.style_dim,
        "channels": cfg.channels,
        "const_res": cfg.const_res,
        "up_layers": list(cfg.up_layers),
        "boundaries": list(cfg.boundaries),
    }
    arrays = {k: v.detach().numpy() for k, v in h.net.state_dict().items()}
    samb.write_samb(path, meta, arrays)


def run_slice(h: GeneratorHandle, i: int, j: int, f_in, w: np.ndarray) -> FeatureTensor:
    """Run the i->j sub-network. f_in: FeatureTensor, raw array, or None (i=0)."""
    dtype = next(h.net.parameters()).dtype
    np_dtype = np.float64 if dtype == torch.float64 else np.float32
    if f_in is None:
        if i != 0:
            raise UsageError("f_in may be omitted only at the constant input (i=0)")
        x = h.const_t()
    else:
        values = f_in.values if isinstance(f_in, FeatureTensor) else np.asarray(f_in)
        if isinstance(f_in, FeatureTensor) and f_in.layer_index != i:
            raise UsageError(f"feature is at layer {f_in.layer_index}, slice starts at {i}")
        if tuple(values.shape) != h.feature_shape(i):
            raise ShapeError(
                f"feature shape {tuple(values.shape)} != {h.feature_shape(i)} at layer {i}")
        x = torch.from_numpy(np.ascontiguousarray(values, dtype=np_dtype))[None]
    wt = torch.from_numpy(np.ascontiguousarray(w, dtype=np_dtype))[None]
    if wt.shape[1] != h.num_style_layers or wt.shape[2] != h.style_dim:
        raise ShapeError(f"style shape {tuple(w.shape)} != ({h.num_style_layers},{h.style_dim})")
    with torch.no_grad():
        out = h.slice_t(i, j, x, wt)
    return FeatureTensor(values=out[0].numpy(), layer_index=j)


def synthesize(h: GeneratorHandle, w: np.ndarray) -> np.ndarray:
    """Plain full forward from the constant input."""
    return run_slice(h, 0, h.num_style_layers, None, w).values


def feature_shape(h: GeneratorHandle, layer: int) -> tuple[int, int, int]:
    return h.feature_shape(layer)


def sample_style(h: GeneratorHandle, seed: int) -> np.ndarray:
    """Draw z ~ N(0,I), map to w, broadcast to all style rows -> [N,D]."""
    g = torch.Generator().manual_seed(seed)
    z = torch.randn(1, h.style_dim, generator=g)
    with torch.no_grad():
        w = h.mapping_t(z)[0].numpy()
    return np.tile(w[None, :], (h.num_style_layers, 1)).astype(np.float32)


def _sample_w_batch(h: GeneratorHandle, n: int, seed: int) -> np.ndarray:
    g = torch.Generator().manual_seed(seed)
    z = torch.randn(n, h.style_dim, generator=g)
    with torch.no_grad():
        return h.mapping_t(z).numpy().astype(np.float64)


def estimate_style_statistics(h: GeneratorHandle, n: int, seed: int) -> StyleStatistics:
    """Fit mean/covariance of gaussianized style samples; precompute ridge inverse."""
    if n < 2:
        raise UsageError(f"need at least 2 samples to fit statistics, got {n}")
    w = _sample_w_batch(h, n, seed)
    w_hat = gaussianize_style(w)
    mu = w_hat.mean(axis=0)
    centered = w_hat - mu
    sigma = centered.T @ centered / (n - 1)
    sigma = (sigma + sigma.T) / 2.0
    eps = 1e-6
    sigma_inv = np.linalg.inv(sigma + eps * np.eye(sigma.shape[0]))
    return StyleStatistics(
        mu=mu, sigma=sigma, sigma_inv_reg=sigma_inv,
        sample_count=n, seed=seed, w_mean=w.mean(axis=0), eps=eps)


def mean_style(h: GeneratorHandle, stats: StyleStatistics) -> np.ndarray:
    """Mean style broadcast to [N,D]; the optimizer's w+ starting point."""
    return np.tile(stats.w_mean[None, :], (h.num_style_layers, 1)).astype(np.float32)
