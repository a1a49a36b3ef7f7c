"""Bilinear (Gram) pooling of feature maps and the signed-sqrt + l2
feature normalization used on the classification path.

The Gram descriptor of an (H, W, C) feature map is the location-averaged
outer product (1/N) * sum_j f_j f_j^T.  Summation runs in a canonical
order (feature vectors sorted lexicographically), so any spatial
permutation of the map produces a bit-identical descriptor.
"""

from dataclasses import dataclass

import numpy as np

from .tensor_ops import ShapeError

__all__ = [
    "GramFeature",
    "bilinear_pool",
    "bilinear_backward",
    "normalize",
    "normalize_backward",
]

_SQRT_FLOOR = 1e-10  # clamp for the sqrt derivative at zero entries
_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class GramFeature:
    matrix: np.ndarray  # (C, C), symmetric
    source_layer: str = ""
    normalized: bool = False


def _rows(F):
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 3:
        raise ShapeError(f"feature map must be HxWxC, got shape {F.shape}")
    H, W, C = F.shape
    if H * W < 1:
        raise ShapeError("feature map has empty spatial extent")
    return F.reshape(H * W, C)


def bilinear_pool(F, source_layer=""):
    """Raw (unnormalized) Gram descriptor of an (H, W, C) map.

    Invariant under any permutation of the N = H*W locations, bit-exactly:
    rows are put into lexicographic order before the sum, so the summation
    order depends only on the multiset of feature vectors.
    """
    rows = _rows(F)
    order = np.lexsort(rows.T[::-1])
    rows = np.ascontiguousarray(rows[order])
    B = rows.T @ rows / rows.shape[0]
    B = 0.5 * (B + B.T)  # enforce exact symmetry against rounding
    return GramFeature(matrix=B, source_layer=source_layer, normalized=False)


def bilinear_backward(F, dB):
    """Gradient of bilinear_pool: dF_j = (dB + dB^T) f_j / N."""
    F = np.asarray(F, dtype=np.float64)
    rows = _rows(F)
    dB = np.asarray(dB, dtype=np.float64)
    C = rows.shape[1]
    if dB.shape != (C, C):
        raise ShapeError(f"dB must be ({C}, {C}), got {dB.shape}")
    dF = rows @ (dB + dB.T) / rows.shape[0]
    return dF.reshape(F.shape)


def normalize(B):
    """Signed square root then l2 normalization, flattened to length C^2.

    y = sign(b) * sqrt(|b|) elementwise; output is y / max(||y||_2, 1e-12),
    so it has unit norm unless the input is all zero.
    """
    mat = B.matrix if isinstance(B, GramFeature) else np.asarray(B, dtype=np.float64)
    b = mat.ravel()
    y = np.sign(b) * np.sqrt(np.abs(b))
    n = np.linalg.norm(y)
    return y / max(n, _NORM_FLOOR)


def normalize_backward(B, upstream):
    """Gradient of normalize w.r.t. the raw Gram entries (returned C x C).

    The sqrt derivative is clamped with |b| >= 1e-10 at zero-valued
    entries, matching the forward's nondifferentiable point handling.
    """
    mat = B.matrix if isinstance(B, GramFeature) else np.asarray(B, dtype=np.float64)
    C = mat.shape[0]
    b = mat.ravel()
    u = np.asarray(upstream, dtype=np.float64).ravel()
    if u.size != b.size:
        raise ShapeError(f"upstream size {u.size} != C^2 = {b.size}")
    y = np.sign(b) * np.sqrt(np.abs(b))
    n = np.linalg.norm(y)
    if n > _NORM_FLOOR:
        z = y / n
        du_dy = (u - np.dot(u, z) * z) / n
    else:
        du_dy = u / _NORM_FLOOR
    dy_db = 0.5 / np.sqrt(np.maximum(np.abs(b), _SQRT_FLOOR))
    return (du_dy * dy_db).reshape(C, C)
