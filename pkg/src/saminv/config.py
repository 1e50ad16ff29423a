"""Run configuration dataclasses and JSON (de)serialization."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .errors import UsageError


@dataclass(frozen=True)
class LossWeights:
    """Weights of the inversion objective terms.

    Calibrated once on the toy fixture and frozen: f_reg is set so the
    offset penalty actually suppresses delta abuse on invertible content
    (without it, deltas absorb ~9x more energy) while leaving masked hard
    regions expressive.
    """

    lpips: float = 1.0
    w_reg: float = 1e-3
    f_reg: float = 5e-4
    z_reg: float = 1e-3

    def __post_init__(self):
        for name in ("lpips", "w_reg", "f_reg", "z_reg"):
            if getattr(self, name) < 0:
                raise UsageError(f"loss weight {name} must be >= 0")


@dataclass(frozen=True)
class OptimizationConfig:
    """Optimizer settings for latent-space inversion."""

    steps: int = 300
    lr_w: float = 0.05
    lr_delta_scale: float = 0.1      # delta lr = lr_w * lr_delta_scale
    weights: LossWeights = field(default_factory=LossWeights)
    init: str = "mean"               # "mean" or "sample"
    seed: int = 0
    log_every: int = 0
    perceptual: str = "tiny"

    def __post_init__(self):
        if self.steps < 1:
            raise UsageError("steps must be >= 1")
        if self.lr_w <= 0 or self.lr_delta_scale <= 0:
            raise UsageError("learning rates must be positive")
        if self.init not in ("mean", "sample"):
            raise UsageError(f"unknown init mode {self.init!r}")

    @property
    def lr_delta(self) -> float:
        return self.lr_w * self.lr_delta_scale


@dataclass(frozen=True)
class PredictorConfig:
    """Training settings for the invertibility predictor."""

    resolution: int = 256            # input side fed to the backbone
    epochs: int = 40
    lr: float = 2e-3
    batch_size: int = 8
    seed: int = 0
    perceptual: str = "tiny"


def _from_dict(cls, data: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise UsageError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = dict(data)
    if cls is OptimizationConfig and isinstance(kwargs.get("weights"), dict):
        kwargs["weights"] = LossWeights(**kwargs["weights"])
    return cls(**kwargs)


def load_config(path, cls=OptimizationConfig):
    """Read a config dataclass from a JSON file; unknown keys are an error."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"bad config JSON {path}: {exc}") from exc
    return _from_dict(cls, data)


def config_digest(cfg) -> str:
    """Stable short hash of a config, for artifact naming and provenance."""
    blob = json.dumps(dataclasses.asdict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]
