"""Durable bundle storage for the service and CLI.

Each stored bundle is one SAMB container holding the latents plus the
cached refinement state (refined per-space error maps and segmentation
labels) so threshold previews never re-run probes or the predictor.
Writes are atomic (tmp file + rename); ids are short opaque hex strings.
"""

from __future__ import annotations

import secrets
from pathlib import Path

import numpy as np

from .errors import UsageError
from .inversion import LatentBundle
from .samb import read_samb, write_samb
from .spaces import LatentSpace


class StoredBundle:
    def __init__(self, bundle: LatentBundle, refined: dict, labels, tau: float,
                 bundle_id: str):
        self.bundle = bundle
        self.refined = refined          # space -> [H,W] pooled error map
        self.labels = labels            # [H,W] int segmentation labels
        self.tau = tau
        self.id = bundle_id


class BundleStore:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, bundle_id: str) -> Path:
        if not bundle_id.isalnum():
            raise UsageError(f"bad bundle id {bundle_id!r}")
        return self.root / f"{bundle_id}.samb"

    def save(self, bundle: LatentBundle, refined: dict | None = None,
             labels=None, tau: float = 0.25, bundle_id: str | None = None) -> str:
        bundle_id = bundle_id or secrets.token_hex(6)
        meta = {
            "kind": "stored-bundle",
            "generator_id": bundle.generator_id,
            "tau": float(tau),
            "spaces": [s.value for s in bundle.delta_f],
            "meta": bundle.meta,
        }
        arrays = {"w_plus": bundle.w_plus.astype(np.float32)}
        for s, d in bundle.delta_f.items():
            arrays[f"delta/{s.value}"] = d.astype(np.float32)
        for s, m in bundle.masks.items():
            arrays[f"mask/{s.value}"] = np.asarray(m, np.float32)
        for s, m in (refined or {}).items():
            arrays[f"refined/{s.value}"] = np.asarray(m, np.float32)
        if labels is not None:
            arrays["labels"] = np.asarray(labels, np.float32)
        write_samb(self._path(bundle_id), meta, arrays)
        return bundle_id

    def exists(self, bundle_id: str) -> bool:
        try:
            return self._path(bundle_id).exists()
        except UsageError:
            return False

    def load(self, bundle_id: str) -> StoredBundle:
        path = self._path(bundle_id)
        if not path.exists():
            raise UsageError(f"unknown bundle {bundle_id!r}")
        meta, arrays = read_samb(path)
        delta_f, masks, refined = {}, {}, {}
        labels = None
        for key, arr in arrays.items():
            kind, _, name = key.partition("/")
            if kind == "delta":
                delta_f[LatentSpace(name)] = arr
            elif kind == "mask":
                masks[LatentSpace(name)] = arr
            elif kind == "refined":
                refined[LatentSpace(name)] = arr
            elif key == "labels":
                labels = arr.astype(np.int32)
        bundle = LatentBundle(generator_id=meta["generator_id"], w_plus=arrays["w_plus"],
                              delta_f=delta_f, masks=masks, meta=meta.get("meta", {}))
        return StoredBundle(bundle=bundle, refined=refined, labels=labels,
                            tau=float(meta.get("tau", 0.25)), bundle_id=bundle_id)

    def list_ids(self) -> list:
        return sorted(p.stem for p in self.root.glob("*.samb"))
