"""Named latent edits with per-space layer gating.

A direction moves the extended style. Whether the visible effect survives
depends on where each image region is carried: regions explained by deep
feature offsets are pinned at their injection layer, so only style rows
after that layer can still act there. The capability table records, per
direction, the deepest space at which the edit is known to survive.

Rendering uses two synthesis streams: A carries the original bundle
(styles + masked offsets), B the edited styles. At every injection layer
with a mask, B is re-seeded inside the mask from A's pinned features:

    f_B := m * (f_A + delta) + (1 - m) * f_B

after which B continues under edited modulation while A continues the
plain reconstruction for any deeper splice. Style-only regions therefore
see the whole edit; offset regions only its post-injection part. Soft mask
edges blend the streams, avoiding seams.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import LoadError, RenderError, ShapeError, UsageError
from .generator import GeneratorHandle, _sample_w_batch
from .imgio import hstack_images
from .inversion import LatentBundle, form_image
from .invertibility import LayerAssignment
from .samb import read_samb, write_samb
from .spaces import EDITABILITY_ORDER, LatentSpace

# Deepest space each packaged edit survives, most editable spaces first.
# Every row admits W_PLUS; capability can only shrink with depth.
CAPABILITY_TABLE = {
    "cars": {
        "car size": LatentSpace.W_PLUS,
        "add trees": LatentSpace.F4,
        "wheel type": LatentSpace.F6,
        "car color (red)": LatentSpace.F10,
    },
    "cats": {
        "change pose": LatentSpace.W_PLUS,
        "large cat eyes": LatentSpace.F6,
        "cat fur color (black)": LatentSpace.F8,
        "cat with red nose": LatentSpace.F8,
    },
    "horses": {
        "change pose": LatentSpace.W_PLUS,
        "horse with a saddle": LatentSpace.W_PLUS,
        "white horse": LatentSpace.F4,
        "reduce trees": LatentSpace.F6,
    },
    "ffhq": {
        "add glasses": LatentSpace.W_PLUS,
        "laughing person": LatentSpace.F4,
        "thick eyebrows": LatentSpace.F8,
        "increase age": LatentSpace.F10,
    },
}


def capability_up_to(deepest: LatentSpace, order=EDITABILITY_ORDER) -> dict:
    """Boolean capability per space: true for every space at most as deep."""
    cut = order.index(deepest)
    return {s: i <= cut for i, s in enumerate(order)}


@dataclass(frozen=True)
class EditDirection:
    """A named style-space move plus its per-space survival flags."""

    name: str
    dataset: str
    delta_w_plus: np.ndarray          # [N,D]; rows may be zero
    capability: dict                  # LatentSpace -> bool, all five spaces

    def __post_init__(self):
        missing = [s for s in EDITABILITY_ORDER if s not in self.capability]
        if missing:
            raise UsageError(f"direction {self.name!r}: capability missing {missing}")
        flags = [bool(self.capability[s]) for s in EDITABILITY_ORDER]
        for shallow, deep in zip(flags, flags[1:]):
            if deep and not shallow:
                raise UsageError(
                    f"direction {self.name!r}: capability must not grow with depth")

    def deepest(self) -> LatentSpace | None:
        ok = [s for s in EDITABILITY_ORDER if self.capability[s]]
        return ok[-1] if ok else None


@dataclass(frozen=True)
class EditRequest:
    direction: str
    magnitude: float
    bundle_id: str = ""

    def __post_init__(self):
        if not np.isfinite(self.magnitude):
            raise UsageError("edit magnitude must be finite")


@dataclass(frozen=True)
class ApplicabilityVerdict:
    per_space: dict                  # space -> bool, spaces present in the layout
    failing: tuple
    applicable: bool
    coverage: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "per_space": {s.value: ok for s, ok in self.per_space.items()},
            "failing": [s.value for s in self.failing],
            "applicable": self.applicable,
            "coverage": {s.value: c for s, c in self.coverage.items()},
        }


def check_applicability(direction: EditDirection, layout) -> ApplicabilityVerdict:
    """Verdict per occupied region. layout: LayerAssignment or iterable of spaces."""
    if isinstance(layout, LayerAssignment):
        coverage = {s: c for s, c in layout.coverage().items() if c > 0}
        present = list(coverage)
    else:
        coverage = {}
        present = [LatentSpace(s) for s in layout]
    per_space = {s: bool(direction.capability[s]) for s in present}
    failing = tuple(s for s, ok in per_space.items() if not ok)
    return ApplicabilityVerdict(per_space=per_space, failing=failing,
                                applicable=not failing, coverage=coverage)


def bundle_spaces(bundle: LatentBundle) -> list:
    """Spaces that actually carry content: the style plus nonzero-mask offsets."""
    out = [LatentSpace.W_PLUS]
    for s, d in bundle.delta_f.items():
        m = bundle.masks.get(s)
        if m is None or np.asarray(m).max(initial=0.0) > 0.0:
            out.append(s)
    return out


def apply_edit(h: GeneratorHandle, bundle: LatentBundle, direction: EditDirection,
               magnitude: float, force: bool = False) -> np.ndarray:
    """Render the bundle with the direction applied at the given magnitude."""
    EditRequest(direction.name, float(magnitude))
    if direction.delta_w_plus.shape != bundle.w_plus.shape:
        raise ShapeError(f"direction shape {direction.delta_w_plus.shape} != "
                         f"style shape {bundle.w_plus.shape}")

    w = bundle.w_plus.astype(np.float32)
    w_edit = (w + float(magnitude) * direction.delta_w_plus).astype(np.float32)
    if np.array_equal(w_edit, w):
        # identical styles make the two streams coincide; one render suffices,
        # and an edit that moves nothing needs no applicability gate
        return form_image(h, bundle)

    verdict = check_applicability(direction, bundle_spaces(bundle))
    if not verdict.applicable:
        names = [s.value for s in verdict.failing]
        if not force:
            raise UsageError(f"direction {direction.name!r} does not survive "
                             f"regions assigned to {names}; pass force=True to "
                             "render anyway")
        warnings.warn(f"forcing edit {direction.name!r} despite inapplicable "
                      f"regions {names}", stacklevel=2)

    wa = torch.from_numpy(w)[None]
    wb = torch.from_numpy(w_edit)[None]
    deltas = {s: torch.from_numpy(np.ascontiguousarray(d, dtype=np.float32))[None]
              for s, d in bundle.delta_f.items()}
    masks = {s: torch.from_numpy(np.ascontiguousarray(m, dtype=np.float32))[None, None]
             for s, m in bundle.masks.items() if s in bundle.delta_f}

    layers = h.space_layers
    with torch.no_grad():
        fa = h.const_t()
        fb = h.const_t()
        prev = 0
        for s, b in layers.items():
            fa = h.slice_t(prev, b, fa, wa)
            fb = h.slice_t(prev, b, fb, wb)
            if s in deltas:
                m = masks.get(s)
                pinned = fa + deltas[s]
                if m is None:
                    fb = pinned
                    fa = pinned
                else:
                    fb = m * pinned + (1.0 - m) * fb
                    # A stays on the reconstruction path for deeper splices
                    fa = fa + m * deltas[s]
            prev = b
        out = h.slice_t(prev, h.num_style_layers, fb, wb)
    if not torch.isfinite(out).all():
        raise RenderError(f"edit {direction.name!r} at magnitude {magnitude} "
                          "produced non-finite pixels")
    return out[0].numpy()


def render_comparison(h: GeneratorHandle, bundle: LatentBundle,
                      direction: EditDirection, magnitudes,
                      force: bool = False) -> np.ndarray:
    """Strip: the inversion render followed by one frame per magnitude."""
    frames = [form_image(h, bundle)]
    for m in magnitudes:
        frames.append(apply_edit(h, bundle, direction, m, force=force))
    return hstack_images(frames)


# ---------------------------------------------------------------------------
# direction registries

def save_direction(path, d: EditDirection) -> None:
    meta = {"kind": "edit-direction", "name": d.name, "dataset": d.dataset,
            "capability": {s.value: bool(v) for s, v in d.capability.items()}}
    write_samb(path, meta, {"delta": d.delta_w_plus.astype(np.float32)})


def _direction_from_file(path) -> EditDirection:
    meta, arrays = read_samb(path)
    if meta.get("kind") != "edit-direction":
        raise LoadError(f"{path} is not a direction file")
    if "delta" not in arrays:
        raise LoadError(f"{path}: missing delta array")
    delta = arrays["delta"]
    if delta.ndim != 2:
        raise LoadError(f"{path}: delta must be [N,D], got shape {delta.shape}")
    try:
        capability = {LatentSpace(k): bool(v) for k, v in meta["capability"].items()}
        return EditDirection(name=meta["name"], dataset=meta.get("dataset", ""),
                             delta_w_plus=delta, capability=capability)
    except (KeyError, ValueError, UsageError) as exc:
        raise LoadError(f"malformed direction file {path}: {exc}") from exc


def load_directions(path) -> dict:
    """Registry {name: EditDirection} from one file or a directory of files."""
    p = Path(path)
    files = sorted(p.glob("*.samb")) if p.is_dir() else [p]
    if not files:
        raise LoadError(f"no direction files under {p}")
    registry = {}
    for f in files:
        d = _direction_from_file(f)
        registry[d.name] = d
    return registry


def save_directions(dir_path, registry: dict) -> None:
    out = Path(dir_path)
    out.mkdir(parents=True, exist_ok=True)
    for name, d in registry.items():
        slug = "".join(ch if ch.isalnum() else "-" for ch in name).strip("-")
        save_direction(out / f"{slug}.samb", d)


def _principal_style_moves(h: GeneratorHandle, count: int, seed: int) -> np.ndarray:
    """Leading principal directions of sampled styles, scaled to one std."""
    w = _sample_w_batch(h, 512, seed)
    c = w - w.mean(axis=0)
    cov = c.T @ c / (len(w) - 1)
    vals, vecs = np.linalg.eigh(cov)
    moves = []
    for k in range(count):
        v = vecs[:, -1 - k] * np.sqrt(max(vals[-1 - k], 0.0))
        moves.append(np.tile(v[None, :], (h.num_style_layers, 1)))
    return np.asarray(moves, dtype=np.float32)


def builtin_directions(h: GeneratorHandle, dataset: str = "toy", seed: int = 11) -> dict:
    """Packaged directions for a dataset tag.

    "toy" ships principal-component moves with one capability pattern per
    depth. The named real-dataset registries carry the authoritative
    capability rows; their vectors are fixture placeholders (principal
    moves of the attached generator) to be replaced by user-supplied files.
    """
    if dataset == "toy":
        depths = [LatentSpace.W_PLUS, LatentSpace.F4, LatentSpace.F6, LatentSpace.F10]
        moves = _principal_style_moves(h, len(depths), seed)
        return {f"toy pc{k}": EditDirection(
                    name=f"toy pc{k}", dataset="toy", delta_w_plus=moves[k],
                    capability=capability_up_to(depth))
                for k, (depth, _) in enumerate(zip(depths, moves))}
    if dataset not in CAPABILITY_TABLE:
        raise UsageError(f"unknown dataset tag {dataset!r}; "
                         f"have {['toy'] + sorted(CAPABILITY_TABLE)}")
    rows = CAPABILITY_TABLE[dataset]
    moves = _principal_style_moves(h, len(rows), seed)
    return {name: EditDirection(name=name, dataset=dataset, delta_w_plus=moves[k],
                                capability=capability_up_to(deepest))
            for k, (name, deepest) in enumerate(rows.items())}
