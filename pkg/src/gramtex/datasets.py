"""Synthetic texture processes and the desk-scale classification dataset.

Four texture families (stripes, dots, checker, blobs) are rendered at
random global translations, so class identity lives in local structure,
not in absolute position.  The same generators produce the reference
textures shipped with the package for the quilting/synthesis experiments.
"""

from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import rng as rng_mod
from .imgio import load_png

__all__ = [
    "TEXTURE_KINDS",
    "render_texture",
    "TextureDataset",
    "make_dataset",
    "reference_texture",
    "REFERENCE_TEXTURES",
]

TEXTURE_KINDS = ("stripes", "dots", "checker", "blobs")

REFERENCE_TEXTURES = ("stripes", "dots", "checker")


def _to_rgb(gray, tint):
    img = gray[:, :, None] * np.asarray(tint)[None, None, :]
    return np.clip(img, 0.0, 1.0)


def render_texture(kind, h, w, rng, period=8.0, noise=0.05):
    """Render one (h, w, 3) texture sample in [0, 1].

    The phase / offset is drawn from `rng`, so repeated calls give shifted
    copies of the same stationary process.
    """
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    px = rng.uniform(0.0, period)
    py = rng.uniform(0.0, period)
    if kind == "stripes":
        g = 0.5 + 0.5 * np.sin(2 * np.pi * (xx + px) / period)
        tint = (0.9, 0.8, 0.6)
    elif kind == "dots":
        gx = 0.5 + 0.5 * np.cos(2 * np.pi * (xx + px) / period)
        gy = 0.5 + 0.5 * np.cos(2 * np.pi * (yy + py) / period)
        g = (gx * gy) ** 2
        tint = (0.6, 0.8, 0.9)
    elif kind == "checker":
        sx = np.sign(np.sin(2 * np.pi * (xx + px) / period))
        sy = np.sign(np.sin(2 * np.pi * (yy + py) / period))
        g = 0.5 + 0.45 * sx * sy
        tint = (0.8, 0.8, 0.8)
    elif kind == "blobs":
        # band-pass noise: random field smoothed by a separable box blur
        field = rng.uniform(0.0, 1.0, size=(h, w))
        k = max(int(period) // 2, 1)
        kernel = np.ones(k) / k
        for axis in (0, 1):
            field = np.apply_along_axis(
                lambda m: np.convolve(m, kernel, mode="same"), axis, field
            )
        g = (field - field.min()) / max(field.max() - field.min(), 1e-12)
        g = (g > 0.5).astype(np.float64) * 0.8 + 0.1
        tint = (0.7, 0.9, 0.7)
    else:
        raise ValueError(f"unknown texture kind {kind!r}")
    if noise > 0:
        g = np.clip(g + rng.normal(0.0, noise, size=g.shape), 0.0, 1.0)
    return _to_rgb(g, tint)


@dataclass
class TextureDataset:
    images: list  # (base_h, base_w, 3) arrays; crops are taken at train time
    labels: np.ndarray
    class_names: tuple
    crop: int

    def __len__(self):
        return len(self.images)


def make_dataset(n_per_class, base_size, crop, seed, kinds=TEXTURE_KINDS):
    """Labeled texture images, `base_size` square, meant to be cropped to
    `crop` with jitter at training time."""
    if crop > base_size:
        raise ValueError("crop larger than base image")
    gen = rng_mod.stream(seed, "texture-dataset")
    images, labels = [], []
    for ci, kind in enumerate(kinds):
        for _ in range(n_per_class):
            images.append(render_texture(kind, base_size, base_size, gen))
            labels.append(ci)
    return TextureDataset(images=images, labels=np.asarray(labels),
                          class_names=tuple(kinds), crop=crop)


def reference_texture(name):
    """Load one of the reference textures shipped with the package."""
    if name not in REFERENCE_TEXTURES:
        raise KeyError(f"unknown reference texture {name!r}; "
                       f"choose from {REFERENCE_TEXTURES}")
    path = resources.files("gramtex").joinpath(f"assets/textures/{name}.png")
    with resources.as_file(path) as p:
        return load_png(p)
