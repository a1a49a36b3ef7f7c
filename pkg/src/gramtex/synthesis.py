"""Generative experiments: texture synthesis, style transfer, category
inversion, attribute editing, and multi-scale Gram descriptors.

Each job fixes the optimization variable at a declared working size
(default 224x224), computes targets from sources resized to that size,
and minimizes the weighted objective with L-BFGS from a random, quilted,
or supplied initial image.
"""

from dataclasses import dataclass, field

import numpy as np

from . import bilinear as BL
from . import losses as LS
from . import network as NET
from . import optimize as OPT
from . import quilting as Q
from . import rng as rng_mod
from .imgio import resize_bilinear

__all__ = [
    "SynthesisJob",
    "default_texture_layers",
    "default_scale_set",
    "synthesize_texture",
    "style_transfer",
    "invert_category",
    "edit_with_attribute",
    "multiscale_gram",
]

_RAND_INIT_STD_FALLBACK = 0.25  # used when no source image fixes the scale


@dataclass
class SynthesisJob:
    net: "NET.Network"
    size: tuple = (224, 224)
    layers: list = None  # texture layers; None -> default set for the net
    alpha: float = 1.0
    prior_weight: float = 1e-6
    tv_exponent: float = 2.0
    grad_normalize: str = "l1"
    content_layer: str = "relu4_1"
    init: str = "rand"  # rand | quilt | image
    init_image: np.ndarray = None
    iterations: int = 250
    seed: int = 0
    quilt_params: Q.QuiltParams = None
    transfer_alpha: float = 0.5  # overlap-vs-correspondence blend for quilted init
    stop_at: float = None
    callback: object = None  # called with (iteration, image, objective)

    def texture_layers(self):
        if self.layers is not None:
            return list(self.layers)
        return default_texture_layers(self.net)


def default_texture_layers(net):
    """First ReLU of every conv block (the reluN_1 naming scheme)."""
    names = [n for n in net.layer_names() if n.startswith("relu") and n.endswith("_1")]
    if not names:
        names = [l.name for l in net.layers if l.kind == "relu"]
    return names


def _resize_to(img, size):
    img = np.asarray(img, dtype=np.float64)
    if img.shape[:2] == tuple(size):
        return img
    return resize_bilinear(img, size[0], size[1])


def _gram_targets(net, image, layers):
    acts = NET.forward_collect(net, image, layers)
    return {name: BL.bilinear_pool(acts.activations[name], source_layer=name)
            for name in layers}


def _rand_init(job, source=None):
    shape = (job.size[0], job.size[1], job.net.in_channels)
    if source is not None:
        std = float(np.std(source - job.net.mean))
    else:
        std = _RAND_INIT_STD_FALLBACK
    gen = rng_mod.stream(job.seed, "synthesis-init")
    return gen.normal(0.0, max(std, 1e-6), size=shape)


def _default_quilt_params(job, source):
    patch = max(min(source.shape[0], source.shape[1]) // 4, 8)
    return Q.QuiltParams(patch=patch, out_h=job.size[0], out_w=job.size[1],
                         seed=job.seed)


def _initial_image(job, source=None, content=None):
    if job.init == "image":
        if job.init_image is None:
            raise ValueError("init='image' requires init_image")
        return _resize_to(job.init_image, job.size)
    if job.init == "quilt":
        if source is None:
            raise ValueError("init='quilt' requires a source texture")
        params = job.quilt_params or _default_quilt_params(job, source)
        if content is not None:
            return Q.quilt_transfer(source, content, params, job.transfer_alpha)
        return Q.quilt(source, params)
    if job.init == "rand":
        return _rand_init(job, source)
    raise ValueError(f"unknown init mode {job.init!r}")


def _run(job, spec, x0, classifiers=None):
    def f(x):
        report = LS.total_objective(job.net, x, spec, classifiers)
        return report.total, report.image_grad

    return OPT.lbfgs_minimize(f, x0, max_iters=job.iterations,
                              stop_at=job.stop_at, callback=job.callback)


def synthesize_texture(job, source):
    """Match the Gram descriptors of `source` at the job's texture layers
    (source is resized to the working size before targets are computed).
    Returns (image, trace)."""
    source = _resize_to(source, job.size)
    layers = job.texture_layers()
    targets = _gram_targets(job.net, source, layers)
    spec = LS.ObjectiveSpec(
        texture_terms=[(name, job.alpha, targets[name]) for name in layers],
        prior_weight=job.prior_weight,
        tv_exponent=job.tv_exponent,
        grad_normalize=job.grad_normalize,
    )
    x0 = _initial_image(job, source=source)
    return _run(job, spec, x0)


def style_transfer(content_img, style_img, lam, job):
    """Texture terms from the style image plus a content (activation)
    reconstruction term from the content image, weighted by `lam`."""
    content = _resize_to(content_img, job.size)
    style = _resize_to(style_img, job.size)
    layers = job.texture_layers()
    targets = _gram_targets(job.net, style, layers)
    spec = LS.ObjectiveSpec(
        texture_terms=[(name, job.alpha, targets[name]) for name in layers],
        prior_weight=job.prior_weight,
        tv_exponent=job.tv_exponent,
        grad_normalize=job.grad_normalize,
    )
    if lam > 0:
        acts = NET.forward_collect(job.net, content, [job.content_layer])
        spec.content_term = (job.content_layer, lam,
                             acts.activations[job.content_layer])
    x0 = _initial_image(job, source=style, content=content)
    return _run(job, spec, x0)


def invert_category(class_id, job, classifiers, beta=100.0,
                    texture_source=None):
    """Synthesize a pre-image whose classifier heads assign high likelihood
    to `class_id`, optionally while also matching the texture of a source
    image (alpha-weighted Gram terms)."""
    if not classifiers:
        raise ValueError("invert_category needs at least one classifier head")
    layers = sorted(classifiers)
    texture_terms = []
    source = None
    if texture_source is not None and job.alpha > 0:
        source = _resize_to(texture_source, job.size)
        targets = _gram_targets(job.net, source, job.texture_layers())
        texture_terms = [(name, job.alpha, targets[name])
                         for name in job.texture_layers()]
    spec = LS.ObjectiveSpec(
        texture_terms=texture_terms,
        class_terms=[(int(class_id), beta)],
        class_layers=layers,
        prior_weight=job.prior_weight,
        tv_exponent=job.tv_exponent,
        grad_normalize=job.grad_normalize,
    )
    x0 = _initial_image(job, source=source)
    return _run(job, spec, x0, classifiers=classifiers)


def edit_with_attribute(source_img, class_targets, mode, job, classifiers,
                        lam=5e-8):
    """Adjust an image toward one or more class targets.

    mode "texture": Gram targets from the source (structure free to move);
    mode "content": activation target from the source at the content layer
    (overall structure preserved), texture terms off.  `class_targets` is a
    list of (class_index, beta) pairs blended additively.
    """
    if not class_targets:
        raise ValueError("no class targets given")
    if mode not in ("texture", "content"):
        raise ValueError(f"unknown edit mode {mode!r}")
    source = _resize_to(source_img, job.size)
    layers = sorted(classifiers)
    spec = LS.ObjectiveSpec(
        class_terms=[(int(c), float(b)) for c, b in class_targets],
        class_layers=layers,
        prior_weight=job.prior_weight,
        tv_exponent=job.tv_exponent,
        grad_normalize=job.grad_normalize,
    )
    if mode == "texture":
        targets = _gram_targets(job.net, source, job.texture_layers())
        spec.texture_terms = [(name, job.alpha, targets[name])
                              for name in job.texture_layers()]
    else:
        acts = NET.forward_collect(job.net, source, [job.content_layer])
        spec.content_term = (job.content_layer, lam,
                             acts.activations[job.content_layer])
    if job.init == "image" and job.init_image is None:
        job.init_image = source
    x0 = _initial_image(job, source=source)
    return _run(job, spec, x0, classifiers=classifiers)


def default_scale_set():
    """Scale factors 2^s for s in {1.5, 1.0, 0.5, 0, -0.5, ..., -3}."""
    exps = [1.5 - 0.5 * i for i in range(10)]
    return [2.0**s for s in exps]


def multiscale_gram(net, image, layer, scales=None, mode="raw-average",
                    max_pixels=1024**2, return_raw=False):
    """Gram descriptor pooled over multiple image scales.

    The image is bilinearly resized to each scale; scales whose resized
    image is smaller than the network's minimum input or larger than
    `max_pixels` are discarded.  In "raw-average" mode the raw Grams are
    averaged and normalized once; "normalize-average" normalizes per scale
    and averages the unit vectors.
    """
    image = np.asarray(image, dtype=np.float64)
    if scales is None:
        scales = default_scale_set()
    min_size = net.min_input_size()
    H, W = image.shape[:2]
    surviving = []
    for s in scales:
        h, w = int(round(H * s)), int(round(W * s))
        if min(h, w) < min_size or h * w > max_pixels:
            continue
        surviving.append((s, h, w))
    if not surviving:
        raise ValueError("no surviving scale after the discard rule")
    grams = []
    for s, h, w in surviving:
        scaled = image if (h, w) == (H, W) else resize_bilinear(image, h, w)
        acts = NET.forward_collect(net, scaled, [layer])
        grams.append(BL.bilinear_pool(acts.activations[layer], source_layer=layer))
    if mode == "normalize-average":
        vecs = [BL.normalize(g) for g in grams]
        return np.mean(vecs, axis=0)
    if mode != "raw-average":
        raise ValueError(f"unknown multiscale mode {mode!r}")
    avg = BL.GramFeature(
        matrix=np.mean([g.matrix for g in grams], axis=0),
        source_layer=layer,
    )
    if return_raw:
        return avg
    return BL.normalize(avg)
