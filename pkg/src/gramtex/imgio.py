"""Image I/O and resampling helpers.

Images are float64 (H, W, 3) arrays in [0, 1].  8-bit PNG bytes map
linearly to [0, 1] (no gamma transform); on export values are clamped to
[0, 1] and rounded to the nearest byte, so an 8-bit-representable image
round-trips exactly.
"""

import numpy as np
from PIL import Image

__all__ = ["load_png", "save_png", "resize_bilinear", "luminance"]

# ITU-R 601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114])


def load_png(path):
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_png(img, path):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected HxWx3 image, got shape {img.shape}")
    bytes_ = np.clip(np.rint(np.clip(img, 0.0, 1.0) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(bytes_, mode="RGB").save(path, format="PNG")


def luminance(img):
    """ITU-R 601 luminance of an (H, W, 3) image."""
    return np.asarray(img, dtype=np.float64) @ _LUMA


def resize_bilinear(img, out_h, out_w):
    """Bilinear resampling with half-pixel-centered sample positions.

    Deterministic and dependency-free; used for multi-scale feature
    extraction and for resizing sources to the synthesis working size.
    """
    img = np.asarray(img, dtype=np.float64)
    H, W = img.shape[:2]
    if out_h < 1 or out_w < 1:
        raise ValueError(f"invalid output size {out_h}x{out_w}")
    ys = (np.arange(out_h) + 0.5) * H / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * W / out_w - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, H - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    if img.ndim == 2:
        img = img[:, :, None]
        squeeze = True
    else:
        squeeze = False
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    out = top * (1 - wy) + bot * wy
    return out[..., 0] if squeeze else out
