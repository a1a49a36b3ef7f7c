"""Named-layer convolutional networks built from the tensor kernels.

A Network is an ordered list of layer specs (conv / relu / maxpool) with
per-conv weights and a per-channel preprocessing mean.  Forward passes
collect activations at requested layers; the backward pass propagates
arbitrary per-layer activation gradients down to the input image (and,
optionally, to the conv weights for training).
"""

import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import rng as rng_mod
from . import tensor_ops as T

__all__ = [
    "LayerSpec",
    "Network",
    "ActivationSet",
    "WeightFileError",
    "BadMagicError",
    "TruncatedFileError",
    "SpecMismatchError",
    "forward_collect",
    "backward_to_input",
    "backward_full",
    "init_random",
    "load_weights",
    "save_weights",
    "tex_net_small_spec",
]

MAGIC = b"GMW1"


@dataclass(frozen=True)
class LayerSpec:
    """One layer of the network.

    kind == "conv": params are out_channels, kernel, pad, stride.
    kind == "maxpool": params are window, stride.
    kind == "relu": no params.
    """

    name: str
    kind: str
    out_channels: int = 0
    kernel: int = 3
    pad: int = 1
    stride: int = 1
    window: int = 2

    def to_json(self):
        d = {"name": self.name, "kind": self.kind}
        if self.kind == "conv":
            d.update(
                out_channels=self.out_channels,
                kernel=self.kernel,
                pad=self.pad,
                stride=self.stride,
            )
        elif self.kind == "maxpool":
            d.update(window=self.window, stride=self.stride)
        return d

    @staticmethod
    def from_json(d):
        return LayerSpec(**d)


@dataclass
class Network:
    layers: list
    weights: dict  # conv layer name -> (w, b)
    mean: np.ndarray  # per-channel preprocessing offsets, shape (3,)
    in_channels: int = 3

    def conv_layers(self):
        return [l for l in self.layers if l.kind == "conv"]

    def layer_names(self):
        return [l.name for l in self.layers]

    def min_input_size(self):
        """Smallest square input for which every layer has >= 1 location."""
        size = 1
        for layer in reversed(self.layers):
            if layer.kind == "conv":
                size = (size - 1) * layer.stride + layer.kernel - 2 * layer.pad
                size = max(size, 1)
            elif layer.kind == "maxpool":
                size = (size - 1) * layer.stride + layer.window
        return size


@dataclass
class ActivationSet:
    """Requested activations plus the cached intermediates for backward."""

    activations: dict
    _inputs: list = field(default_factory=list, repr=False)  # per-layer inputs
    _pool_idx: dict = field(default_factory=dict, repr=False)
    _depth: int = 0  # number of layers executed


def _validate_layers(layers, in_channels):
    names = [l.name for l in layers]
    if len(names) != len(set(names)):
        raise ValueError("layer names must be unique")
    c = in_channels
    for layer in layers:
        if layer.kind == "conv":
            if layer.out_channels < 1:
                raise ValueError(f"conv layer {layer.name} has no output channels")
            c = layer.out_channels
        elif layer.kind not in ("relu", "maxpool"):
            raise ValueError(f"unknown layer kind {layer.kind!r}")
    return c


def _channels_before(net, index):
    c = net.in_channels
    for layer in net.layers[:index]:
        if layer.kind == "conv":
            c = layer.out_channels
    return c


def forward_collect(net, image, layer_names):
    """Run the network on an (H, W, C) image and collect activations at the
    requested layers.  Preprocessing (mean subtraction) is applied before
    layer 1.  Execution stops after the deepest requested layer.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != net.in_channels:
        raise T.ShapeError(
            f"image must be HxWx{net.in_channels}, got shape {image.shape}"
        )
    wanted = set(layer_names)
    known = set(net.layer_names())
    unknown = wanted - known
    if unknown:
        raise KeyError(f"unknown layer name(s): {sorted(unknown)}")

    acts = ActivationSet(activations={})
    if not wanted:
        return acts
    depth = max(i for i, l in enumerate(net.layers) if l.name in wanted) + 1

    x = image - net.mean
    for layer in net.layers[:depth]:
        acts._inputs.append(x)
        if layer.kind == "conv":
            w, b = net.weights[layer.name]
            x = T.conv2d(x, w, b, pad=layer.pad, stride=layer.stride)
        elif layer.kind == "relu":
            x = T.relu(x)
        else:
            x, idx = T.maxpool(x, layer.window, layer.stride)
            acts._pool_idx[layer.name] = idx
        if x.shape[0] < 1 or x.shape[1] < 1:
            raise T.ShapeError(f"image too small: layer {layer.name} has empty output")
        if layer.name in wanted:
            acts.activations[layer.name] = x
    acts._depth = depth
    return acts


def _backward(net, state, layer_grads, want_weight_grads):
    depth = state._depth
    if depth == 0:
        raise ValueError("forward state is empty; nothing to backpropagate")
    executed = {l.name for l in net.layers[:depth]}
    unknown = set(layer_grads) - executed
    if unknown:
        raise KeyError(f"gradients injected at layers not in forward state: {sorted(unknown)}")

    weight_grads = {}
    g = None
    for i in range(depth - 1, -1, -1):
        layer = net.layers[i]
        x_in = state._inputs[i]
        if layer.name in layer_grads:
            inj = np.asarray(layer_grads[layer.name], dtype=np.float64)
            if g is None:
                g = np.zeros(_layer_output_shape(net, state, i))
            if inj.shape != g.shape:
                raise T.ShapeError(
                    f"injected gradient at {layer.name} has shape {inj.shape}, "
                    f"expected {g.shape}"
                )
            g = g + inj
        if g is None:
            continue
        if layer.kind == "conv":
            w, _ = net.weights[layer.name]
            gx, gw, gb = T.conv2d_backward(x_in, w, g, pad=layer.pad, stride=layer.stride)
            if want_weight_grads:
                weight_grads[layer.name] = (gw, gb)
            g = gx
        elif layer.kind == "relu":
            g = T.relu_backward(x_in, g)
        else:
            g = T.maxpool_backward(state._pool_idx[layer.name], g)
    if g is None:
        g = np.zeros_like(state._inputs[0])
    return g, weight_grads


def _layer_output_shape(net, state, i):
    if i + 1 < state._depth:
        return state._inputs[i + 1].shape
    # deepest executed layer: output shape equals the cached activation
    name = net.layers[i].name
    if name in state.activations:
        return state.activations[name].shape
    raise ValueError(f"no cached output shape for layer {name}")


def backward_to_input(net, state, layer_grads):
    """Backpropagate injected per-layer activation gradients to the image.

    Returns d(sum_l <grad_l, act_l>)/d(image); injections at multiple
    layers accumulate additively.
    """
    g, _ = _backward(net, state, layer_grads, want_weight_grads=False)
    return g


def backward_full(net, state, layer_grads):
    """As backward_to_input, but also return per-conv-layer weight/bias
    gradients (for training)."""
    return _backward(net, state, layer_grads, want_weight_grads=True)


def init_random(layers, seed, in_channels=3, mean=None):
    """He-style fan-in initialization: conv weights are zero-mean Gaussian
    with std sqrt(2 / fan_in), biases zero.  Reproducible from the seed.
    """
    _validate_layers(layers, in_channels)
    gen = rng_mod.stream(seed, "network-init")
    weights = {}
    c = in_channels
    for layer in layers:
        if layer.kind != "conv":
            continue
        fan_in = layer.kernel * layer.kernel * c
        std = np.sqrt(2.0 / fan_in)
        w = gen.normal(0.0, std, size=(layer.kernel, layer.kernel, c, layer.out_channels))
        b = np.zeros(layer.out_channels)
        weights[layer.name] = (w, b)
        c = layer.out_channels
    m = np.zeros(in_channels) if mean is None else np.asarray(mean, dtype=np.float64)
    return Network(layers=list(layers), weights=weights, mean=m, in_channels=in_channels)


class WeightFileError(ValueError):
    """Base class for weight-file format problems."""


class BadMagicError(WeightFileError):
    pass


class TruncatedFileError(WeightFileError):
    pass


class SpecMismatchError(WeightFileError):
    pass


def save_weights(net, path):
    """Binary container: magic "GMW1", uint64-length-prefixed UTF-8 JSON
    spec block, per-conv-layer little-endian float64 weights then bias in
    declared layout, then a uint64 footer with the byte count of everything
    before it (truncation detection).  Round-trips bit-exactly.
    """
    if not net.layers:
        raise WeightFileError("refusing to save a network with no layers")
    spec = {
        "layers": [l.to_json() for l in net.layers],
        "in_channels": net.in_channels,
        "mean": list(map(float, net.mean)),
    }
    blob = json.dumps(spec, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(np.uint64(len(blob)).tobytes())
    buf.write(blob)
    for layer in net.conv_layers():
        w, b = net.weights[layer.name]
        buf.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    payload = buf.getvalue()
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(np.uint64(len(payload)).tobytes())


def load_weights(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a GMW1 weight file")
    if len(raw) < 20:
        raise TruncatedFileError(f"{path}: file too short")
    footer = int(np.frombuffer(raw[-8:], dtype="<u8")[0])
    if footer != len(raw) - 8:
        raise TruncatedFileError(
            f"{path}: footer says {footer} payload bytes, found {len(raw) - 8}"
        )
    off = 4
    blob_len = int(np.frombuffer(raw[off : off + 8], dtype="<u8")[0])
    off += 8
    if off + blob_len > len(raw) - 8:
        raise TruncatedFileError(f"{path}: spec block extends past end of file")
    try:
        spec = json.loads(raw[off : off + blob_len].decode("utf-8"))
        layers = [LayerSpec.from_json(d) for d in spec["layers"]]
        in_channels = int(spec["in_channels"])
        mean = np.asarray(spec["mean"], dtype=np.float64)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise SpecMismatchError(f"{path}: malformed spec block: {exc}") from exc
    if not layers:
        raise SpecMismatchError(f"{path}: empty layer list")
    _validate_layers(layers, in_channels)
    off += blob_len
    weights = {}
    c = in_channels
    for layer in layers:
        if layer.kind != "conv":
            continue
        nw = layer.kernel * layer.kernel * c * layer.out_channels
        nb = layer.out_channels
        need = (nw + nb) * 8
        if off + need > len(raw) - 8:
            raise SpecMismatchError(
                f"{path}: weight data for layer {layer.name} does not fit the file"
            )
        w = np.frombuffer(raw[off : off + nw * 8], dtype="<f8").reshape(
            layer.kernel, layer.kernel, c, layer.out_channels
        )
        off += nw * 8
        b = np.frombuffer(raw[off : off + nb * 8], dtype="<f8")
        off += nb * 8
        weights[layer.name] = (w.copy(), b.copy())
        c = layer.out_channels
    if off != len(raw) - 8:
        raise SpecMismatchError(f"{path}: {len(raw) - 8 - off} trailing bytes")
    return Network(layers=layers, weights=weights, mean=mean, in_channels=in_channels)


_TEX_NET_CHANNELS = (8, 16, 32, 64, 64)


def tex_net_small_spec():
    """The reference desk-scale network: 5 conv blocks (3x3 kernels, pad 1,
    channels 8/16/32/64/64) with 2x2 max pooling between blocks.  Layer
    names follow the reluN_1 scheme so experiment configs can name layers
    the usual way.
    """
    layers = []
    for i, ch in enumerate(_TEX_NET_CHANNELS, start=1):
        layers.append(LayerSpec(name=f"conv{i}_1", kind="conv", out_channels=ch))
        layers.append(LayerSpec(name=f"relu{i}_1", kind="relu"))
        if i < len(_TEX_NET_CHANNELS):
            layers.append(LayerSpec(name=f"pool{i}", kind="maxpool", window=2, stride=2))
    return layers
