"""Image array conventions and PNG I/O.

Internally images are float32 CHW arrays in [-1, 1]; 8-bit sRGB only at the
I/O boundary.
"""

from __future__ import annotations

import io

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .errors import ShapeError


def to_uint8(img: np.ndarray) -> np.ndarray:
    """float CHW [-1,1] -> uint8 HWC."""
    arr = np.asarray(img, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ShapeError(f"expected CHW image with 1 or 3 channels, got {arr.shape}")
    arr = np.clip((arr + 1.0) * 127.5, 0.0, 255.0).round().astype(np.uint8)
    return np.transpose(arr, (1, 2, 0))


def from_uint8(arr: np.ndarray) -> np.ndarray:
    """uint8 HWC (or HW) -> float32 CHW in [-1,1]."""
    a = np.asarray(arr)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.shape[2] == 4:  # drop alpha
        a = a[:, :, :3]
    if a.shape[2] == 1:
        a = np.repeat(a, 3, axis=2)
    out = a.astype(np.float32) / 127.5 - 1.0
    return np.ascontiguousarray(np.transpose(out, (2, 0, 1)))


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return from_uint8(np.asarray(im.convert("RGB")))


def save_image(path, img: np.ndarray) -> None:
    Image.fromarray(to_uint8(img)).save(path)


def encode_png(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(to_uint8(img)).save(buf, format="PNG")
    return buf.getvalue()


def encode_png_u8(arr: np.ndarray) -> bytes:
    """PNG-encode an already-quantized uint8 HWC array."""
    buf = io.BytesIO()
    Image.fromarray(np.asarray(arr, dtype=np.uint8)).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return from_uint8(np.asarray(im.convert("RGB")))


def resize_image(img: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resize of a CHW float image to size x size."""
    t = torch.from_numpy(np.asarray(img, dtype=np.float32))[None]
    out = F.interpolate(t, size=(size, size), mode="bilinear", align_corners=False)
    return out[0].numpy()


def hstack_images(frames: list[np.ndarray]) -> np.ndarray:
    """Concatenate CHW images left to right."""
    if not frames:
        raise ShapeError("no frames to stack")
    h = frames[0].shape[1]
    if any(f.shape[1] != h or f.shape[0] != frames[0].shape[0] for f in frames):
        raise ShapeError("frames must share channel count and height")
    return np.concatenate(frames, axis=2)
