"""Linear classification on normalized Gram features, softmax heads for
inversion, and the from-scratch jittering experiment harness.

One-vs-all training uses a deterministic full-batch subgradient descent on
the hinge objective, followed by a per-class affine calibration that puts
the median positive training score at +1 and the median negative at -1.
"""

import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import bilinear as BL
from . import network as NET
from . import optimize as OPT
from . import rng as rng_mod
from .losses import class_loss
from .tensor_ops import ShapeError, relu, relu_backward

__all__ = [
    "LinearClassifier",
    "JitterConfig",
    "ScratchModel",
    "gram_feature",
    "train_one_vs_all",
    "predict",
    "softmax_head",
    "train_head_scratch",
    "jitter_sweep",
    "save_classifier",
    "load_classifier",
    "save_scratch_model",
    "load_scratch_model",
    "write_error_table",
]

CLASSIFIER_MAGIC = b"GMC1"


@dataclass
class LinearClassifier:
    weights: np.ndarray  # (K, D), calibrated
    biases: np.ndarray  # (K,)
    class_names: tuple
    layer: str = ""


def gram_feature(net, image, layer):
    """Normalized Gram descriptor of an image at one layer."""
    acts = NET.forward_collect(net, image, [layer])
    return BL.normalize(BL.bilinear_pool(acts.activations[layer], source_layer=layer))


def _train_binary_hinge(X, y, c_reg, iters=600, lr0=0.5):
    """Full-batch subgradient descent on 0.5*||w||^2 + C * sum hinge.

    Deterministic: fixed iteration count and 1/(1+t) step decay."""
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    for t in range(iters):
        eta = lr0 / (1.0 + 0.05 * t)
        margins = y * (X @ w + b)
        active = margins < 1.0
        gw = w - c_reg * (y[active, None] * X[active]).sum(axis=0)
        gb = -c_reg * y[active].sum()
        w -= eta / n * gw
        b -= eta / n * gb
    return w, b


def train_one_vs_all(features, labels, class_names=None, c_reg=1.0, layer=""):
    """One-vs-all hinge classifiers on normalized feature vectors, with
    median-score calibration: after training, the median calibrated score
    over positive training examples is +1 and over negatives is -1."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("need at least two classes")
    if class_names is None:
        class_names = tuple(str(c) for c in classes)
    K, D = classes.size, X.shape[1]
    W = np.zeros((K, D))
    b = np.zeros(K)
    for k, cls in enumerate(classes):
        yk = np.where(y == cls, 1.0, -1.0)
        wk, bk = _train_binary_hinge(X, yk, c_reg)
        scores = X @ wk + bk
        med_pos = float(np.median(scores[yk > 0]))
        med_neg = float(np.median(scores[yk < 0]))
        spread = med_pos - med_neg
        if abs(spread) < 1e-12:
            a, c = 1.0, -med_pos  # degenerate: center only
        else:
            a = 2.0 / spread
            c = 1.0 - a * med_pos
        W[k] = a * wk
        b[k] = a * bk + c
    return LinearClassifier(weights=W, biases=b, class_names=tuple(class_names),
                            layer=layer)


def predict(model, feature):
    """Calibrated scores and the argmax class (ties to the smallest index)."""
    x = np.asarray(feature, dtype=np.float64)
    if x.shape != (model.weights.shape[1],):
        raise ShapeError(
            f"feature dim {x.shape} != classifier dim ({model.weights.shape[1]},)"
        )
    scores = model.weights @ x + model.biases
    return scores, int(np.argmax(scores))


def softmax_head(model, feature, temperature=1.0):
    """Softmax over calibrated scores (numerically stable)."""
    scores, _ = predict(model, feature)
    z = scores / temperature
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


def _write_container(path, spec, arrays):
    """GMC1 container: magic, uint64-length-prefixed JSON spec block, then
    the named float64 arrays in spec["arrays"] order, then a uint64 byte
    count footer (same idiom as the network weight file)."""
    spec = dict(spec)
    spec["arrays"] = [{"name": k, "shape": list(v.shape)} for k, v in arrays]
    blob = json.dumps(spec, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CLASSIFIER_MAGIC)
    buf.write(np.uint64(len(blob)).tobytes())
    buf.write(blob)
    for _, arr in arrays:
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    payload = buf.getvalue()
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(np.uint64(len(payload)).tobytes())


def _read_container(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[:4] != CLASSIFIER_MAGIC:
        raise NET.BadMagicError(f"{path}: not a GMC1 classifier file")
    if len(raw) < 20:
        raise NET.TruncatedFileError(f"{path}: file too short")
    footer = int(np.frombuffer(raw[-8:], dtype="<u8")[0])
    if footer != len(raw) - 8:
        raise NET.TruncatedFileError(f"{path}: bad length footer")
    off = 4
    blob_len = int(np.frombuffer(raw[off : off + 8], dtype="<u8")[0])
    off += 8
    if off + blob_len > len(raw) - 8:
        raise NET.TruncatedFileError(f"{path}: spec block extends past end of file")
    spec = json.loads(raw[off : off + blob_len].decode("utf-8"))
    off += blob_len
    arrays = {}
    for entry in spec.get("arrays", []):
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        if off + n * 8 > len(raw) - 8:
            raise NET.SpecMismatchError(
                f"{path}: array {entry['name']} does not fit the file"
            )
        arrays[entry["name"]] = (
            np.frombuffer(raw[off : off + n * 8], dtype="<f8").reshape(shape).copy()
        )
        off += n * 8
    if off != len(raw) - 8:
        raise NET.SpecMismatchError(f"{path}: trailing bytes")
    return spec, arrays


def save_classifier(model, path):
    spec = {
        "kind": "linear",
        "class_names": list(model.class_names),
        "layer": model.layer,
    }
    _write_container(path, spec, [("weights", model.weights), ("biases", model.biases)])


def load_classifier(path):
    spec, arrays = _read_container(path)
    if spec.get("kind") != "linear":
        raise NET.SpecMismatchError(f"{path}: not a linear classifier file")
    return LinearClassifier(weights=arrays["weights"], biases=arrays["biases"],
                            class_names=tuple(spec["class_names"]),
                            layer=spec["layer"])


# ---------------------------------------------------------------------------
# From-scratch training with spatial jittering (desk-scale harness)

_JITTER_LEVELS = ("f1", "f5", "f25")


@dataclass
class JitterConfig:
    """f1 = flip only (center crop); f5 = flip x {center + 4 corners};
    f25 = flip x 5x5 offset grid."""

    level: str
    crop: int
    margin: int

    def offsets(self):
        m = self.margin
        ctr = (m // 2, m // 2)
        if self.level == "f1":
            return [ctr]
        if self.level == "f5":
            return [ctr, (0, 0), (0, m), (m, 0), (m, m)]
        if self.level == "f25":
            steps = np.linspace(0, m, 5).round().astype(int)
            return [(int(r), int(c)) for r in steps for c in steps]
        raise ValueError(f"unknown jitter level {self.level!r}")


@dataclass
class ScratchModel:
    net: "NET.Network"
    head: str  # "bilinear" | "fc"
    params: dict  # head parameters
    class_names: tuple
    crop: int
    last_layer: str


def _head_init(head, K, act_shape, rng, hidden=64):
    h, w, c = act_shape
    if head == "bilinear":
        d = c * c
        return {"W": rng.normal(0, np.sqrt(2.0 / d), size=(K, d)),
                "b": np.zeros(K)}
    if head == "fc":
        d = h * w * c
        return {
            "W1": rng.normal(0, np.sqrt(2.0 / d), size=(hidden, d)),
            "b1": np.zeros(hidden),
            "W2": rng.normal(0, np.sqrt(2.0 / hidden), size=(K, hidden)),
            "b2": np.zeros(K),
        }
    raise ValueError(f"unknown head {head!r}")


def _head_forward_backward(head, params, A, target):
    """Head loss + gradients; returns (loss, probs, head_grads, dA)."""
    if head == "bilinear":
        B = BL.bilinear_pool(A)
        nu = BL.normalize(B)
        logits = params["W"] @ nu + params["b"]
        loss, dlogits = class_loss(logits, target)
        grads = {"W": np.outer(dlogits, nu), "b": dlogits}
        dnu = params["W"].T @ dlogits
        dA = BL.bilinear_backward(A, BL.normalize_backward(B, dnu))
    else:
        flat = A.ravel()
        pre = params["W1"] @ flat + params["b1"]
        hid = relu(pre)
        logits = params["W2"] @ hid + params["b2"]
        loss, dlogits = class_loss(logits, target)
        dhid = relu_backward(pre, params["W2"].T @ dlogits)
        grads = {
            "W2": np.outer(dlogits, hid),
            "b2": dlogits,
            "W1": np.outer(dhid, flat),
            "b1": dhid,
        }
        dA = (params["W1"].T @ dhid).reshape(A.shape)
    zmax = logits.max()
    probs = np.exp(logits - zmax) / np.exp(logits - zmax).sum()
    return loss, probs, grads, dA


def _model_logits(model, image):
    acts = NET.forward_collect(model.net, image, [model.last_layer])
    A = acts.activations[model.last_layer]
    if model.head == "bilinear":
        nu = BL.normalize(BL.bilinear_pool(A))
        return model.params["W"] @ nu + model.params["b"]
    flat = A.ravel()
    hid = relu(model.params["W1"] @ flat + model.params["b1"])
    return model.params["W2"] @ hid + model.params["b2"]


def _center_crop(img, crop):
    h, w = img.shape[:2]
    r = (h - crop) // 2
    c = (w - crop) // 2
    return img[r : r + crop, c : c + crop]


def _validation_error(model, images, labels):
    wrong = 0
    for img, lab in zip(images, labels):
        logits = _model_logits(model, _center_crop(img, model.crop))
        if int(np.argmax(logits)) != lab:
            wrong += 1
    return wrong / len(images)


def _split(dataset, val_fraction=0.25):
    """Deterministic interleaved train/val split, stratified by order."""
    idx = np.arange(len(dataset))
    val = idx[:: int(round(1 / val_fraction))]
    val_set = set(val.tolist())
    train = np.array([i for i in idx if i not in val_set])
    return train, val


def _clip_grads(grads, max_norm=5.0):
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for k in grads:
            grads[k] = grads[k] * scale
    return grads


def train_head_scratch(dataset, head, jitter, epochs=15, seed=0, lr0=0.02,
                       momentum=0.9, weight_decay=1e-4):
    """Train tex-net-small plus the chosen head end-to-end with SGD
    momentum and the plateau schedule.  Per-example jitter (offset + flip)
    is drawn stochastically each epoch; validation error is measured on a
    single center crop without flipping.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    crop = dataset.crop
    margin = dataset.images[0].shape[0] - crop
    cfg = jitter if isinstance(jitter, JitterConfig) else JitterConfig(jitter, crop, margin)
    offsets = cfg.offsets()

    layers = NET.tex_net_small_spec()
    net = NET.init_random(layers, seed=seed, mean=np.full(3, 0.5))
    last_layer = "relu5_1"
    K = len(dataset.class_names)

    probe = NET.forward_collect(net, np.zeros((crop, crop, 3)), [last_layer])
    act_shape = probe.activations[last_layer].shape
    gen = rng_mod.stream(seed, f"scratch-{head}-{cfg.level}")
    params = _head_init(head, K, act_shape, gen)

    model = ScratchModel(net=net, head=head, params=params,
                         class_names=dataset.class_names, crop=crop,
                         last_layer=last_layer)

    train_idx, val_idx = _split(dataset)
    val_imgs = [dataset.images[i] for i in val_idx]
    val_labs = [int(dataset.labels[i]) for i in val_idx]

    sched = OPT.LrSchedule(lr=lr0)
    state = {}
    best_err = 1.0
    epoch = 0
    for _ in range(epochs):
        order = train_idx[gen.permutation(len(train_idx))]
        for i in order:
            img = dataset.images[i]
            lab = int(dataset.labels[i])
            r, c = offsets[gen.integers(len(offsets))]
            patch = img[r : r + crop, c : c + crop]
            if gen.integers(2):
                patch = patch[:, ::-1, :]
            acts = NET.forward_collect(net, patch, [last_layer])
            A = acts.activations[last_layer]
            _, _, hgrads, dA = _head_forward_backward(head, params, A, lab)
            _, wgrads = NET.backward_full(net, acts, {last_layer: dA})
            flat_params = dict(params)
            flat_grads = dict(hgrads)
            for name, (gw, gb) in wgrads.items():
                flat_params[f"{name}.w"] = net.weights[name][0]
                flat_params[f"{name}.b"] = net.weights[name][1]
                flat_grads[f"{name}.w"] = gw
                flat_grads[f"{name}.b"] = gb
            _clip_grads(flat_grads)
            OPT.sgd_momentum_step(flat_params, flat_grads, state, sched.lr,
                                  momentum=momentum, weight_decay=weight_decay)
        epoch += 1
        err = _validation_error(model, val_imgs, val_labs)
        best_err = min(best_err, err)
        # plateau schedule engages after a warmup third of the budget
        if epoch > max(epochs // 3, 2):
            sched.record(err)
            if sched.stopped:
                break
    return model, best_err


def jitter_sweep(dataset, seeds, heads=("bilinear", "fc"),
                 levels=_JITTER_LEVELS, epochs=15):
    """Full {head x jitter level x seed} grid of scratch-training runs.

    Returns a list of row dicts plus per-cell means keyed (head, level)."""
    rows = []
    for head in heads:
        for level in levels:
            for seed in seeds:
                _, err = train_head_scratch(dataset, head, level,
                                            epochs=epochs, seed=seed)
                rows.append({"head": head, "jitter": level, "seed": seed,
                             "val_error": err})
    means = {}
    for head in heads:
        for level in levels:
            errs = [r["val_error"] for r in rows
                    if r["head"] == head and r["jitter"] == level]
            means[(head, level)] = (float(np.mean(errs)), float(np.std(errs)))
    return rows, means


def save_scratch_model(model, net_path, head_path):
    """Persist a scratch-trained model as a GMW1 network file plus a GMC1
    head file holding the head parameter arrays."""
    NET.save_weights(model.net, net_path)
    spec = {
        "kind": "scratch-head",
        "head": model.head,
        "class_names": list(model.class_names),
        "layer": model.last_layer,
        "crop": model.crop,
    }
    arrays = sorted(model.params.items())
    _write_container(head_path, spec, arrays)


def load_scratch_model(net_path, head_path):
    net = NET.load_weights(net_path)
    spec, arrays = _read_container(head_path)
    if spec.get("kind") != "scratch-head":
        raise NET.SpecMismatchError(f"{head_path}: not a scratch-head file")
    return ScratchModel(net=net, head=spec["head"], params=arrays,
                        class_names=tuple(spec["class_names"]),
                        crop=int(spec["crop"]), last_layer=spec["layer"])


def write_error_table(rows, path):
    with open(path, "w") as fh:
        fh.write("head,jitter,seed,val_error\n")
        for r in rows:
            fh.write(f"{r['head']},{r['jitter']},{r['seed']},{r['val_error']!r}\n")
