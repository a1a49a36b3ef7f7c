"""Finite-difference verification suites for every differentiable path.

Each suite builds seeded random instances, runs the central-difference
checker against the analytic gradients, and reports the worst relative
error.  The CLI `gradcheck` command fails if any suite exceeds 1e-4.
"""

import os

import numpy as np

from . import bilinear as BL
from . import losses as LS
from . import network as NET
from . import rng as rng_mod
from .tensor_ops import conv2d, conv2d_backward, finite_diff_check, maxpool, \
    maxpool_backward, relu, relu_backward

__all__ = ["MODULES", "run_suite", "run_all", "THRESHOLD"]

THRESHOLD = 1e-4

_CORRUPT_ENV = "GRAMTEX_GRADCHECK_CORRUPT"


def _maybe_corrupt(g):
    # test hook: lets the CLI tests force a failing gradient
    if os.environ.get(_CORRUPT_ENV):
        g = np.asarray(g, dtype=np.float64).copy()
        g.ravel()[0] += 1.0
    return g


def _check_tensor(seed):
    gen = rng_mod.stream(seed, "gradcheck-tensor")
    errs = []
    x = gen.normal(size=(6, 7, 2))
    w = gen.normal(size=(3, 3, 2, 3))
    b = gen.normal(size=3)
    u = gen.normal(size=conv2d(x, w, b, pad=1).shape)

    def f_conv(z):
        out = conv2d(z, w, b, pad=1)
        gx, _, _ = conv2d_backward(z, w, u, pad=1)
        return float(np.sum(out * u)), _maybe_corrupt(gx)

    errs.append(finite_diff_check(f_conv, x))

    xr = gen.normal(size=(5, 5, 3))
    xr[np.abs(xr) < 0.05] += 0.2  # keep clear of the ReLU kink
    ur = gen.normal(size=xr.shape)

    def f_relu(z):
        return float(np.sum(relu(z) * ur)), relu_backward(z, ur)

    errs.append(finite_diff_check(f_relu, xr))

    xp = gen.normal(size=(6, 6, 2))
    out0, _ = maxpool(xp, 2, 2)
    up = gen.normal(size=out0.shape)

    def f_pool(z):
        out, idx = maxpool(z, 2, 2)
        return float(np.sum(out * up)), maxpool_backward(idx, up)

    errs.append(finite_diff_check(f_pool, xp, epsilon=1e-5))
    return max(errs)


def _check_bilinear(seed):
    gen = rng_mod.stream(seed, "gradcheck-bilinear")
    F = gen.normal(size=(4, 5, 3))
    dB = gen.normal(size=(3, 3))

    def f_pool(z):
        B = BL.bilinear_pool(z)
        return float(np.sum(B.matrix * dB)), BL.bilinear_backward(z, dB)

    e1 = finite_diff_check(f_pool, F)

    u = gen.normal(size=9)
    # keep Gram entries away from the sqrt clamp
    F2 = gen.normal(size=(4, 4, 3)) + 1.0

    def f_norm(z):
        B = BL.bilinear_pool(z)
        nu = BL.normalize(B)
        dB = BL.normalize_backward(B, u)
        return float(np.dot(nu, u)), BL.bilinear_backward(z, dB)

    e2 = finite_diff_check(f_norm, F2)
    return max(e1, e2)


def _toy_net(seed):
    layers = [
        NET.LayerSpec("conv1", "conv", out_channels=3, kernel=3, pad=1),
        NET.LayerSpec("relu1", "relu"),
        NET.LayerSpec("pool1", "maxpool", window=2, stride=2),
        NET.LayerSpec("conv2", "conv", out_channels=4, kernel=3, pad=1),
        NET.LayerSpec("relu2", "relu"),
    ]
    return NET.init_random(layers, seed=seed)


def _check_network(seed):
    gen = rng_mod.stream(seed, "gradcheck-network")
    net = _toy_net(seed)
    img = gen.uniform(size=(8, 8, 3))
    u1 = gen.normal(size=(8, 8, 3))
    u2 = gen.normal(size=(4, 4, 4))

    def f(z):
        acts = NET.forward_collect(net, z, ["relu1", "relu2"])
        val = float(np.sum(acts.activations["relu1"] * u1)
                    + np.sum(acts.activations["relu2"] * u2))
        g = NET.backward_to_input(net, acts, {"relu1": u1, "relu2": u2})
        return val, g

    return finite_diff_check(f, img, epsilon=1e-4)


def _check_losses(seed):
    gen = rng_mod.stream(seed, "gradcheck-losses")
    errs = []

    x = gen.uniform(size=(5, 6, 2))

    def f_tv(z):
        return LS.tv_prior(z)

    errs.append(finite_diff_check(f_tv, x))

    z0 = gen.normal(size=5)

    def f_cls(z):
        return LS.class_loss(z, 2)

    errs.append(finite_diff_check(f_cls, z0))

    net = _toy_net(seed + 1)
    src = gen.uniform(size=(8, 8, 3))
    acts = NET.forward_collect(net, src, ["relu1", "relu2"])
    targets = {n: BL.bilinear_pool(a) for n, a in acts.activations.items()}
    spec = LS.ObjectiveSpec(
        texture_terms=[("relu1", 1.0, targets["relu1"]),
                       ("relu2", 0.5, targets["relu2"])],
        prior_weight=1e-3,
        grad_normalize="off",
    )
    img = gen.uniform(size=(8, 8, 3))

    def f_obj(z):
        rep = LS.total_objective(net, z, spec)
        return rep.total, rep.image_grad

    errs.append(finite_diff_check(f_obj, img, epsilon=1e-4))
    return max(errs)


MODULES = {
    "tensor": _check_tensor,
    "bilinear": _check_bilinear,
    "network": _check_network,
    "losses": _check_losses,
}


def run_suite(name, seed=0):
    if name not in MODULES:
        raise KeyError(f"unknown gradcheck module {name!r}")
    return MODULES[name](seed)


def run_all(seed=0, only=None):
    names = MODULES if only is None else {only: MODULES[only]}
    return {name: run_suite(name, seed) for name in names}
