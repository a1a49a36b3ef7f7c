"""Scalar objective terms with analytic gradients: Gram-matching loss,
content (activation) loss, class negative log-likelihood, the TV smoothness
prior, and the weighted total objective over a network.

The total objective optionally l1-normalizes the image-space gradient of
each texture term before weighting, which keeps per-layer losses of wildly
different scales balanced during optimization.  The reported per-term
scalars are always the raw (un-normalized) values.
"""

from dataclasses import dataclass, field

import numpy as np

from . import bilinear as BL
from . import network as NET
from .tensor_ops import ShapeError

__all__ = [
    "ObjectiveSpec",
    "LossReport",
    "gram_loss",
    "content_loss",
    "class_loss",
    "tv_prior",
    "total_objective",
]


@dataclass
class ObjectiveSpec:
    """The full weighted objective.

    texture_terms: list of (layer_name, alpha, target GramFeature-or-matrix)
    content_term: optional (layer_name, lambda, target activation)
    class_terms: list of (target_class_index, beta) applied across
        class_layers (one classifier head per listed layer)
    prior_weight: weight on the TV prior
    tv_exponent: exponent of the TV prior (2 = plain quadratic TV)
    grad_normalize: "l1" (default; per-texture-term image-gradient l1
        normalization), "target" (divide each texture term by the squared
        l2 norm of its target descriptor), or "off".
    """

    texture_terms: list = field(default_factory=list)
    content_term: tuple = None
    class_terms: list = field(default_factory=list)
    class_layers: list = field(default_factory=list)
    prior_weight: float = 0.0
    tv_exponent: float = 2.0
    grad_normalize: str = "l1"

    def validate(self):
        if not (self.texture_terms or self.content_term or self.class_terms
                or self.prior_weight > 0):
            raise ValueError("objective has no terms")
        for name, alpha, _ in self.texture_terms:
            if alpha < 0:
                raise ValueError(f"negative texture weight on {name}")
        if self.content_term is not None and self.content_term[1] < 0:
            raise ValueError("negative content weight")
        for _, beta in self.class_terms:
            if beta < 0:
                raise ValueError("negative class weight")
        if self.prior_weight < 0:
            raise ValueError("negative prior weight")
        if self.grad_normalize not in ("l1", "target", "off"):
            raise ValueError(f"unknown grad_normalize mode {self.grad_normalize!r}")
        if self.class_terms and not self.class_layers:
            raise ValueError("class terms present but no classifier layers listed")


@dataclass
class LossReport:
    total: float
    per_term: dict
    image_grad: np.ndarray


def gram_loss(B, B_target):
    """Sum of elementwise squared differences; gradient is 2*(B - B_target)."""
    B = B.matrix if isinstance(B, BL.GramFeature) else np.asarray(B, dtype=np.float64)
    Bt = (B_target.matrix if isinstance(B_target, BL.GramFeature)
          else np.asarray(B_target, dtype=np.float64))
    if B.shape != Bt.shape:
        raise ShapeError(f"gram shapes differ: {B.shape} vs {Bt.shape}")
    d = B - Bt
    return float(np.sum(d * d)), 2.0 * d


def content_loss(F, F_target):
    """Squared difference over all locations and channels of an activation."""
    F = np.asarray(F, dtype=np.float64)
    Ft = np.asarray(F_target, dtype=np.float64)
    if F.shape != Ft.shape:
        raise ShapeError(f"activation shapes differ: {F.shape} vs {Ft.shape}")
    d = F - Ft
    return float(np.sum(d * d)), 2.0 * d


def class_loss(logits, target):
    """Negative log-likelihood of the target class, computed from logits in
    the log-sum-exp-stable form.  Gradient is w.r.t. the logits:
    softmax(logits) - onehot(target).
    """
    z = np.asarray(logits, dtype=np.float64)
    if not (0 <= target < z.size):
        raise IndexError(f"target class {target} out of range for {z.size} classes")
    zmax = z.max()
    lse = zmax + np.log(np.sum(np.exp(z - zmax)))
    loss = float(lse - z[target])
    p = np.exp(z - lse)
    g = p.copy()
    g[target] -= 1.0
    return loss, g


def tv_prior(x, exponent=2.0):
    """TV smoothness prior: per pixel and channel, the squared forward
    differences (right and down) are summed and raised to exponent/2;
    boundary pixels use only the in-bounds difference.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] < 2 or x.shape[1] < 2:
        raise ShapeError(f"tv_prior needs an HxWxC image with H,W >= 2, got {x.shape}")
    H, W, C = x.shape
    dh = np.zeros_like(x)
    dv = np.zeros_like(x)
    dh[:, :-1, :] = x[:, 1:, :] - x[:, :-1, :]
    dv[:-1, :, :] = x[1:, :, :] - x[:-1, :, :]
    s = dh * dh + dv * dv
    q = exponent / 2.0
    if exponent == 2.0:
        value = float(np.sum(s))
        w = np.ones_like(s)
    else:
        sf = np.maximum(s, 1e-12)
        value = float(np.sum(np.where(s > 0, sf**q, 0.0)))
        w = np.where(s > 0, q * sf ** (q - 1.0), 0.0)
    # d(s)/dx routed back through both forward differences
    g = np.zeros_like(x)
    gh = 2.0 * w * dh
    gv = 2.0 * w * dv
    g[:, :-1, :] -= gh[:, :-1, :]
    g[:, 1:, :] += gh[:, :-1, :]
    g[:-1, :, :] -= gv[:-1, :, :]
    g[1:, :, :] += gv[:-1, :, :]
    return value, g


def _class_head_grads(spec, acts, classifiers):
    """Per-layer activation gradients and total value for the class terms.

    Each head routes activation -> Gram -> normalize -> calibrated linear
    scores -> softmax NLL.  Returns (value, per_term dict, grads dict).
    """
    value = 0.0
    per_term = {}
    layer_grads = {}
    for layer in spec.class_layers:
        if layer not in classifiers:
            raise KeyError(f"no classifier head for layer {layer}")
    for target, beta in spec.class_terms:
        term_val = 0.0
        for layer in spec.class_layers:
            clf = classifiers[layer]
            F = acts.activations[layer]
            B = BL.bilinear_pool(F, source_layer=layer)
            nu = BL.normalize(B)
            logits = clf.weights @ nu + clf.biases
            lv, dlogits = class_loss(logits, target)
            term_val += lv
            dnu = clf.weights.T @ dlogits
            dB = BL.normalize_backward(B, dnu)
            dF = BL.bilinear_backward(F, dB)
            acc = layer_grads.setdefault(layer, np.zeros_like(dF))
            acc += beta * dF
        value += beta * term_val
        per_term[f"class:{target}"] = term_val
    return value, per_term, layer_grads


def total_objective(net, image, spec, classifiers=None):
    """Evaluate the full objective and its image-space gradient.

    With grad_normalize "l1" each texture term's image-space gradient is
    divided by its own l1 norm before weighting; in "target" mode the term
    gradient is divided by the squared l2 norm of its target descriptor;
    "off" returns the exact gradient of the reported total.  Content,
    class, and prior gradients always enter with their plain weights.
    """
    spec.validate()
    image = np.asarray(image, dtype=np.float64)
    needed = set()
    for name, _, _ in spec.texture_terms:
        needed.add(name)
    if spec.content_term is not None:
        needed.add(spec.content_term[0])
    needed.update(spec.class_layers if spec.class_terms else [])

    acts = (NET.forward_collect(net, image, needed) if needed
            else NET.ActivationSet(activations={}))

    total = 0.0
    per_term = {}
    image_grad = np.zeros_like(image)

    # texture terms: per-term backward so each gradient can be normalized
    tex_grads = {}  # layer -> unweighted dF
    for name, alpha, target in spec.texture_terms:
        B = BL.bilinear_pool(acts.activations[name], source_layer=name)
        val, dB = gram_loss(B, target)
        per_term[f"tex:{name}"] = val
        total += alpha * val
        dF = BL.bilinear_backward(acts.activations[name], dB)
        tex_grads[name] = (alpha, dF, target)

    if spec.grad_normalize == "off":
        inject = {}
        for name, (alpha, dF, _) in tex_grads.items():
            inject[name] = inject.get(name, 0.0) + alpha * dF
    else:
        inject = {}
        for name, (alpha, dF, target) in tex_grads.items():
            g = NET.backward_to_input(net, acts, {name: dF})
            if spec.grad_normalize == "l1":
                n = np.sum(np.abs(g))
                if n > 0:
                    g = g / n
            else:  # "target": scale each term by its target descriptor norm
                tm = target.matrix if isinstance(target, BL.GramFeature) else target
                n = float(np.sum(np.asarray(tm) ** 2))
                if n > 0:
                    g = g / n
            image_grad += alpha * g

    # content term
    if spec.content_term is not None:
        name, lam, F_target = spec.content_term
        val, dF = content_loss(acts.activations[name], F_target)
        per_term["content"] = val
        total += lam * val
        if spec.grad_normalize == "off":
            inject[name] = inject.get(name, 0.0) + lam * dF
        else:
            image_grad += lam * NET.backward_to_input(net, acts, {name: dF})

    # class terms
    if spec.class_terms:
        if classifiers is None:
            raise ValueError("class terms present but no classifiers supplied")
        cval, cterms, cgrads = _class_head_grads(spec, acts, classifiers)
        total += cval
        per_term.update(cterms)
        if spec.grad_normalize == "off":
            for name, g in cgrads.items():
                inject[name] = inject.get(name, 0.0) + g
        else:
            image_grad += NET.backward_to_input(net, acts, cgrads)

    if spec.grad_normalize == "off" and inject:
        image_grad += NET.backward_to_input(net, acts, inject)

    # smoothness prior
    if spec.prior_weight > 0:
        pv, pg = tv_prior(image, spec.tv_exponent)
        per_term["tv"] = pv
        total += spec.prior_weight * pv
        image_grad += spec.prior_weight * pg

    return LossReport(total=float(total), per_term=per_term, image_grad=image_grad)
