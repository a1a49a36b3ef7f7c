"""Non-parametric image quilting: raster-scan placement of source patches
matched by overlap SSD, joined along minimum-error boundary cuts.

Output pixels are pure copies from the source (no blending); seams decide,
per overlap pixel, whether the old canvas or the new patch wins.  The
texture-transfer variant additionally scores candidates against the
luminance of a correspondence image.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import rng as rng_mod
from .imgio import luminance

__all__ = [
    "QuiltParams",
    "Placement",
    "overlap_ssd",
    "pick_patch",
    "min_cut_seam",
    "quilt",
    "quilt_transfer",
]


@dataclass
class QuiltParams:
    patch: int
    out_h: int
    out_w: int
    overlap: int = 0  # 0 -> default patch // 6 (at least 1)
    tolerance: float = 0.1
    seed: int = 0

    def resolved_overlap(self):
        return self.overlap if self.overlap > 0 else max(self.patch // 6, 1)

    def validate(self, source_shape):
        ov = self.resolved_overlap()
        if not (1 <= ov < self.patch):
            raise ValueError(f"overlap {ov} must be in [1, patch)")
        if self.patch > source_shape[0] or self.patch > source_shape[1]:
            raise ValueError(
                f"patch {self.patch} exceeds source extents {source_shape[:2]}"
            )
        if self.out_h < self.patch or self.out_w < self.patch:
            raise ValueError("output extents must be >= patch size")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")


@dataclass
class Placement:
    """Per-placement record for diagnostics and provenance tests."""

    out_pos: tuple  # top-left in the canvas
    src_pos: tuple  # top-left in the source
    new_mask: np.ndarray  # (patch, patch) bool: pixels taken from the new patch
    seam_cost: float = 0.0
    straight_cost: float = 0.0


def overlap_ssd(source, top_left, target_patch, mask):
    """Sum of squared per-channel differences between the source patch at
    `top_left` and `target_patch`, over mask-selected pixels only."""
    source = np.asarray(source, dtype=np.float64)
    r, c = top_left
    p = np.asarray(target_patch).shape[0]
    if r < 0 or c < 0 or r + p > source.shape[0] or c + p > source.shape[1]:
        raise ValueError(f"candidate at {top_left} not fully inside the source")
    cand = source[r : r + p, c : c + p]
    d = (cand - target_patch) ** 2
    return float(np.sum(d * mask[:, :, None]))


def _candidate_errors(source, target_patch, mask):
    """SSD of every valid source position against the masked target patch,
    shape (nH, nW)."""
    p = target_patch.shape[0]
    win = sliding_window_view(source, (p, p), axis=(0, 1))  # (nH, nW, C, p, p)
    tgt = np.transpose(target_patch, (2, 0, 1))
    d = (win - tgt) ** 2
    return np.einsum("abcij,ij->ab", d, mask.astype(np.float64), optimize=True)


def pick_patch(source, target_patch, mask, params, rng):
    """Uniformly random choice among candidates whose SSD is within
    (1 + tolerance) * min SSD; exhaustive scan over all valid positions."""
    err = _candidate_errors(np.asarray(source, dtype=np.float64),
                            np.asarray(target_patch, dtype=np.float64), mask)
    return _pick_from_errors(err, params.tolerance, rng)


def _pick_from_errors(err, tolerance, rng):
    emin = err.min()
    good = np.flatnonzero(err.ravel() <= (1.0 + tolerance) * emin)
    choice = int(good[rng.integers(len(good))]) if len(good) > 1 else int(good[0])
    return choice // err.shape[1], choice % err.shape[1]


def min_cut_seam(err_band):
    """Minimum-cost monotone path through an (H, O) error band.

    cost(i, j) = err(i, j) + min(cost(i-1, j-1..j+1)); adjacent seam
    indices differ by at most 1, ties broken toward the smaller column.
    Returns the per-row column indices.
    """
    err = np.asarray(err_band, dtype=np.float64)
    H, O = err.shape
    if O == 1:
        return np.zeros(H, dtype=np.int64)
    cost = err[0].copy()
    offsets = np.zeros((H, O), dtype=np.int64)
    inf = np.inf
    for i in range(1, H):
        left = np.concatenate(([inf], cost[:-1]))
        right = np.concatenate((cost[1:], [inf]))
        stacked = np.stack((left, cost, right))  # order favors smaller column
        choice = stacked.argmin(axis=0)
        offsets[i] = choice - 1
        cost = err[i] + stacked[choice, np.arange(O)]
    seam = np.empty(H, dtype=np.int64)
    seam[-1] = int(cost.argmin())
    for i in range(H - 1, 0, -1):
        seam[i - 1] = seam[i] + offsets[i, seam[i]]
    return seam


def _grid(out, patch, step):
    n = 1 if out <= patch else 1 + math.ceil((out - patch) / step)
    return [i * step for i in range(n)]


def _quilt_impl(source, params, corr=None, alpha=1.0, placements=None):
    source = np.asarray(source, dtype=np.float64)
    params.validate(source.shape)
    patch = params.patch
    ov = params.resolved_overlap()
    step = patch - ov
    rng = rng_mod.stream(params.seed, "quilt")

    rows = _grid(params.out_h, patch, step)
    cols = _grid(params.out_w, patch, step)
    canvas = np.zeros((rows[-1] + patch, cols[-1] + patch, source.shape[2]))

    src_lum = luminance(source) if corr is not None else None
    lum_win = (sliding_window_view(src_lum, (patch, patch)) if corr is not None else None)
    corr_lum = luminance(corr) if corr is not None else None

    for r in rows:
        for c in cols:
            mask = np.zeros((patch, patch), dtype=bool)
            if c > 0:
                mask[:, :ov] = True
            if r > 0:
                mask[:ov, :] = True
            target = canvas[r : r + patch, c : c + patch]
            err = _candidate_errors(source, target, mask)
            if corr is not None:
                # clamp the correspondence window at the output boundary
                ch = min(patch, corr_lum.shape[0] - r)
                cw = min(patch, corr_lum.shape[1] - c)
                cpatch = corr_lum[r : r + ch, c : c + cw]
                d = (lum_win[:, :, :ch, :cw] - cpatch) ** 2
                err = alpha * err + (1.0 - alpha) * d.sum(axis=(2, 3))
            sr, sc = _pick_from_errors(err, params.tolerance, rng)
            patch_img = source[sr : sr + patch, sc : sc + patch]

            new_mask = np.ones((patch, patch), dtype=bool)
            seam_cost = straight_cost = 0.0
            if c > 0:
                band = ((target[:, :ov] - patch_img[:, :ov]) ** 2).sum(axis=2)
                seam = min_cut_seam(band)
                jj = np.arange(ov)[None, :]
                new_mask[:, :ov] &= jj >= seam[:, None]
                seam_cost += float(band[np.arange(patch), seam].sum())
                straight_cost += float(band[:, 0].sum())
            if r > 0:
                band = ((target[:ov, :] - patch_img[:ov, :]) ** 2).sum(axis=2)
                seam = min_cut_seam(band.T)
                ii = np.arange(ov)[:, None]
                new_mask[:ov, :] &= ii >= seam[None, :]
                seam_cost += float(band[seam, np.arange(patch)].sum())
                straight_cost += float(band[0, :].sum())
            target[new_mask] = patch_img[new_mask]
            if placements is not None:
                placements.append(Placement((r, c), (sr, sc), new_mask.copy(),
                                            seam_cost, straight_cost))
    return canvas[: params.out_h, : params.out_w].copy()


def quilt(source, params, placements=None):
    """Synthesize an (out_h, out_w) texture by quilting source patches.

    Raster placement with spacing patch - overlap; the first patch is a
    seeded random pick; vertical seams cut left overlaps and horizontal
    seams cut top overlaps.  `placements`, if given a list, collects
    per-placement diagnostics.
    """
    return _quilt_impl(source, params, placements=placements)


def quilt_transfer(source, correspondence, params, alpha_blend, placements=None):
    """Quilting with a correspondence map (texture transfer).

    Candidate error = alpha_blend * overlap SSD + (1 - alpha_blend) *
    SSD between the patch luminance and the correspondence luminance at
    the target position.  With alpha_blend = 1 this is identical to
    quilt() under the same seed.
    """
    corr = np.asarray(correspondence, dtype=np.float64)
    if corr.shape[0] < params.out_h or corr.shape[1] < params.out_w:
        raise ValueError(
            f"correspondence extents {corr.shape[:2]} smaller than output "
            f"({params.out_h}, {params.out_w})"
        )
    if alpha_blend >= 1.0:
        return _quilt_impl(source, params, placements=placements)
    return _quilt_impl(source, params, corr=corr, alpha=alpha_blend,
                       placements=placements)
