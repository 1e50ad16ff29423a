"""SAMB container: bit-exact zip archive of named float32 arrays + JSON metadata.

Layout: `meta.json` (UTF-8) plus one blob entry per array. Blob format:

    bytes 0..3   magic "SAMB"
    byte  4      version  (1)
    byte  5      dtype    (1 = float32)
    byte  6      rank
    byte  7      pad      (0)
    bytes 8..15  reserved (zero)
    then rank dims as u32 little-endian
    then row-major float32 little-endian payload

Round-trips are bit-identical, NaN payloads included.
"""

from __future__ import annotations

import json
import struct
import zipfile
from pathlib import Path

import numpy as np

from .errors import LoadError

MAGIC = b"SAMB"
VERSION = 1
DTYPE_F32 = 1
_ARRAY_SUFFIX = ".arr"


def encode_array(arr: np.ndarray) -> bytes:
    a = np.ascontiguousarray(np.asarray(arr, dtype="<f4"))
    header = struct.pack("<4sBBBB8x", MAGIC, VERSION, DTYPE_F32, a.ndim, 0)
    dims = struct.pack(f"<{a.ndim}I", *a.shape)
    return header + dims + a.tobytes()


def decode_array(blob: bytes, name: str = "<blob>") -> np.ndarray:
    if len(blob) < 16:
        raise LoadError(f"{name}: truncated SAMB blob ({len(blob)} bytes)")
    magic, version, dtype, rank, _pad = struct.unpack_from("<4sBBBB", blob, 0)
    if magic != MAGIC:
        raise LoadError(f"{name}: bad magic {magic!r}")
    if version != VERSION:
        raise LoadError(f"{name}: unsupported version {version}")
    if dtype != DTYPE_F32:
        raise LoadError(f"{name}: unsupported dtype code {dtype}")
    dims_end = 16 + 4 * rank
    if len(blob) < dims_end:
        raise LoadError(f"{name}: truncated dims")
    dims = struct.unpack_from(f"<{rank}I", blob, 16)
    payload = blob[dims_end:]
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    if count * 4 != len(payload):
        raise LoadError(
            f"{name}: payload length {len(payload)} != 4 * prod(dims) = {count * 4}"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(dims)
    return arr.copy()  # own the memory; keeps bytes bit-identical


def write_samb(path, meta: dict, arrays: dict[str, np.ndarray],
               extra_json: dict | None = None) -> None:
    """Write atomically (tmp file + rename). extra_json adds named JSON entries."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr("meta.json", json.dumps(meta, indent=1, sort_keys=True))
        for name, obj in (extra_json or {}).items():
            zf.writestr(name, json.dumps(obj, indent=1, sort_keys=True))
        for name, arr in arrays.items():
            zf.writestr(name + _ARRAY_SUFFIX, encode_array(arr))
    tmp.replace(path)


def read_samb(path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    try:
        with zipfile.ZipFile(path) as zf:
            names = zf.namelist()
            if "meta.json" not in names:
                raise LoadError(f"{path}: missing meta.json")
            meta = json.loads(zf.read("meta.json").decode("utf-8"))
            arrays = {}
            for entry in names:
                if entry.endswith(_ARRAY_SUFFIX):
                    key = entry[: -len(_ARRAY_SUFFIX)]
                    arrays[key] = decode_array(zf.read(entry), name=f"{path}:{entry}")
    except (zipfile.BadZipFile, json.JSONDecodeError, OSError) as exc:
        raise LoadError(f"cannot read SAMB container {path}: {exc}") from exc
    return meta, arrays
