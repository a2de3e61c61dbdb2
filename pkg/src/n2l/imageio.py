"""8-bit RGB image loading/saving (PNG, PPM) and [0,1] tensor conversion."""

from __future__ import annotations

import numpy as np
from PIL import Image

from .autodiff import Tensor


def load_image(path) -> Tensor:
    """Read an RGB image file into a [1,3,H,W] float64 tensor in [0,1]."""
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.uint8)
    return tensor_from_u8(rgb)


def tensor_from_u8(rgb: np.ndarray) -> Tensor:
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected HxWx3 array, got {rgb.shape}")
    data = rgb.astype(np.float64) / 255.0
    return Tensor(data.transpose(2, 0, 1)[None])


def u8_from_unit(data: np.ndarray) -> np.ndarray:
    """[1,3,H,W] floats -> HxWx3 uint8, clamped to [0,1], round half up."""
    clipped = np.clip(data[0], 0.0, 1.0)
    return np.floor(clipped * 255.0 + 0.5).astype(np.uint8).transpose(1, 2, 0)


def save_png(path, rgb: np.ndarray) -> None:
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")


def save_gray_png(path, channel: np.ndarray) -> None:
    """Write one 2D float map as a min-max-normalized grayscale PNG."""
    lo, hi = float(channel.min()), float(channel.max())
    if hi > lo:
        unit = (channel - lo) / (hi - lo)
    else:
        unit = np.zeros_like(channel)
    Image.fromarray(np.floor(unit * 255.0 + 0.5).astype(np.uint8), mode="L").save(
        path, format="PNG"
    )
