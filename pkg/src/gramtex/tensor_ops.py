"""Dense tensor kernels: convolution, ReLU, max pooling, and their backward
passes, plus a central finite-difference gradient checker.

Conventions used throughout the package:
  * activations / images are float64 arrays of shape (H, W, C), row-major
    with the channel axis fastest;
  * conv weights have shape (kH, kW, Cin, Cout), biases shape (Cout,).

All kernels are pure functions of their inputs and deterministic: the same
arrays always produce bit-identical outputs.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "ShapeError",
    "conv2d",
    "conv2d_backward",
    "relu",
    "relu_backward",
    "maxpool",
    "maxpool_backward",
    "PoolIndices",
    "finite_diff_check",
]


class ShapeError(ValueError):
    """Raised when tensor extents are incompatible with an operation."""


def _as_f64(x):
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64))


def _check_conv_args(x, w, b, pad, stride):
    if x.ndim != 3:
        raise ShapeError(f"conv2d input must be HxWxC, got shape {x.shape}")
    if w.ndim != 4:
        raise ShapeError(f"conv2d weights must be kHxkWxCinxCout, got shape {w.shape}")
    kH, kW, cin, cout = w.shape
    if x.shape[2] != cin:
        raise ShapeError(
            f"channel mismatch: input has {x.shape[2]} channels, weights expect {cin}"
        )
    if b.shape != (cout,):
        raise ShapeError(f"bias must have shape ({cout},), got {b.shape}")
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if x.shape[0] + 2 * pad < kH or x.shape[1] + 2 * pad < kW:
        raise ShapeError(
            f"padded input {x.shape[0] + 2 * pad}x{x.shape[1] + 2 * pad} smaller "
            f"than kernel {kH}x{kW}"
        )


def conv2d(x, w, b, pad=0, stride=1):
    """Cross-correlation of an (H, W, Cin) input with (kH, kW, Cin, Cout)
    weights after symmetric zero padding.

    Output spatial extent is floor((H + 2*pad - kH) / stride) + 1.
    """
    x, w, b = _as_f64(x), _as_f64(w), _as_f64(b)
    _check_conv_args(x, w, b, pad, stride)
    kH, kW = w.shape[:2]
    xp = np.pad(x, ((pad, pad), (pad, pad), (0, 0))) if pad else x
    # windows: (Ho, Wo, Cin, kH, kW)
    win = sliding_window_view(xp, (kH, kW), axis=(0, 1))[::stride, ::stride]
    out = np.tensordot(win, w, axes=([2, 3, 4], [2, 0, 1])) + b
    return np.ascontiguousarray(out)


def conv2d_backward(x, w, upstream, pad=0, stride=1):
    """Gradients of conv2d w.r.t. input, weights and bias.

    `upstream` must have the conv2d output shape; returns
    (grad_input, grad_weights, grad_bias).
    """
    x, w, up = _as_f64(x), _as_f64(w), _as_f64(upstream)
    kH, kW, cin, cout = w.shape
    b = np.zeros(cout)
    _check_conv_args(x, w, b, pad, stride)
    ho = (x.shape[0] + 2 * pad - kH) // stride + 1
    wo = (x.shape[1] + 2 * pad - kW) // stride + 1
    if up.shape != (ho, wo, cout):
        raise ShapeError(f"upstream shape {up.shape} != conv output ({ho}, {wo}, {cout})")

    xp = np.pad(x, ((pad, pad), (pad, pad), (0, 0))) if pad else x
    win = sliding_window_view(xp, (kH, kW), axis=(0, 1))[::stride, ::stride]

    grad_bias = up.sum(axis=(0, 1))
    # (Cin, kH, kW, Cout) -> (kH, kW, Cin, Cout)
    gw = np.tensordot(win, up, axes=([0, 1], [0, 1]))
    grad_weights = np.ascontiguousarray(gw.transpose(1, 2, 0, 3))

    # scatter patch gradients back into the padded input
    patch_grad = np.tensordot(up, w, axes=([2], [3]))  # (Ho, Wo, kH, kW, Cin)
    gxp = np.zeros_like(xp)
    for a in range(kH):
        for c in range(kW):
            gxp[a : a + ho * stride : stride, c : c + wo * stride : stride, :] += (
                patch_grad[:, :, a, c, :]
            )
    if pad:
        gxp = gxp[pad:-pad, pad:-pad, :]
    return np.ascontiguousarray(gxp), grad_weights, grad_bias


def relu(x):
    """Elementwise max(0, x)."""
    return np.maximum(_as_f64(x), 0.0)


def relu_backward(x, upstream):
    """Mask upstream where the forward input was <= 0."""
    x, up = _as_f64(x), _as_f64(upstream)
    if x.shape != up.shape:
        raise ShapeError(f"relu_backward shapes differ: {x.shape} vs {up.shape}")
    return np.where(x > 0.0, up, 0.0)


@dataclass(frozen=True)
class PoolIndices:
    """Argmax bookkeeping for maxpool_backward.

    `flat` holds, per (ho, wo, c) output cell, the flat row-major index of
    the winning pixel in the (H, W) input plane.
    """

    input_shape: tuple
    flat: np.ndarray  # (Ho, Wo, C) int64


def maxpool(x, window, stride):
    """Max pooling with a square window; truncates trailing rows/columns
    that do not fit a full window.  Ties go to the first index in row-major
    scan order, which makes the backward pass deterministic.
    """
    x = _as_f64(x)
    if x.ndim != 3:
        raise ShapeError(f"maxpool input must be HxWxC, got {x.shape}")
    H, W, C = x.shape
    if window > H or window > W:
        raise ShapeError(f"window {window} larger than input {H}x{W}")
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    win = sliding_window_view(x, (window, window), axis=(0, 1))[::stride, ::stride]
    ho, wo = win.shape[:2]
    flatwin = win.reshape(ho, wo, C, window * window)
    arg = flatwin.argmax(axis=3)  # first max in scan order
    out = np.take_along_axis(flatwin, arg[..., None], axis=3)[..., 0]
    # translate window-local argmax into global flat (H*W) indices
    hh = np.arange(ho)[:, None, None] * stride + arg // window
    ww = np.arange(wo)[None, :, None] * stride + arg % window
    flat = hh * W + ww
    return np.ascontiguousarray(out), PoolIndices((H, W, C), flat.astype(np.int64))


def maxpool_backward(indices, upstream):
    """Route upstream gradient mass to the stored argmax positions."""
    up = _as_f64(upstream)
    H, W, C = indices.input_shape
    if up.shape != indices.flat.shape:
        raise ShapeError(
            f"upstream shape {up.shape} != pooled shape {indices.flat.shape}"
        )
    grad = np.zeros((H * W, C))
    ho, wo, _ = up.shape
    cols = np.broadcast_to(np.arange(C), (ho, wo, C))
    np.add.at(grad, (indices.flat.ravel(), cols.ravel()), up.ravel())
    return grad.reshape(H, W, C)


def finite_diff_check(f, point, epsilon=1e-3):
    """Max relative error between the analytic gradient of a scalar map and
    its central finite-difference estimate.

    `f` maps an array to (value, grad).  The step is epsilon scaled by the
    RMS magnitude of the point (floored at 1) to avoid cancellation on
    large-magnitude inputs.  Relative error per coordinate is
    |a - n| / max(|a|, |n|, 1e-8).
    """
    point = _as_f64(point)
    value, grad = f(point)
    if not np.isfinite(value):
        raise ValueError("objective is non-finite at the evaluation point")
    grad = _as_f64(grad)
    if grad.shape != point.shape:
        raise ShapeError(f"gradient shape {grad.shape} != point shape {point.shape}")
    rms = float(np.sqrt(np.mean(point**2)))
    h = epsilon * max(rms, 1.0)
    flat = point.ravel().copy()
    num = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp, _ = f(flat.reshape(point.shape))
        flat[i] = orig - h
        fm, _ = f(flat.reshape(point.shape))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError("objective is non-finite at a perturbed point")
        num[i] = (fp - fm) / (2.0 * h)
    a = grad.ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(num)), 1e-8)
    return float(np.max(np.abs(a - num) / denom))
