"""Small fully-connected network with manual backprop and Adam.

Weights and optimizer state are treated as values: ``adam_step`` and
``hua_init`` return new objects rather than mutating their inputs.
"""

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .rng import PCG32

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class MLPConfig:
    input_dim: int
    hidden_widths: tuple
    output_dim: int
    hidden_activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(h) for h in self.hidden_widths))
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden_widths):
            raise ValueError("all layer dimensions must be >= 1")
        if self.hidden_activation not in ("relu", "tanh"):
            raise ValueError("hidden_activation must be 'relu' or 'tanh'")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def dims(self):
        return (self.input_dim,) + self.hidden_widths + (self.output_dim,)

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "hidden_widths": list(self.hidden_widths),
            "output_dim": self.output_dim,
            "hidden_activation": self.hidden_activation,
            "seed": int(self.seed),
        }


@dataclass(frozen=True)
class MLPWeights:
    config: MLPConfig
    layers: tuple  # of (W (out, in), b (out,))


@dataclass(frozen=True)
class AdamState:
    m: tuple
    v: tuple
    t: int = 0
    lr: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class ForwardCache:
    inputs: np.ndarray
    pre: list = field(default_factory=list)  # hidden pre-activations
    post: list = field(default_factory=list)  # hidden activations


def init(config):
    """He-scaled Gaussian weights from the seeded generator, zero biases."""
    rng = PCG32(config.seed)
    layers = []
    dims = config.dims
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        std = math.sqrt(2.0 / fan_in)
        w = rng.normal_array(fan_out * fan_in, 0.0, std).reshape(fan_out, fan_in)
        layers.append((w, np.zeros(fan_out)))
    return MLPWeights(config, tuple(layers))


def hua_init(weights, channel, bias_offset=-20.0):
    """Set one output-layer bias so training starts inside the HUA."""
    if not 0 <= channel < weights.config.output_dim:
        raise IndexError("channel %d out of range for output_dim %d" % (channel, weights.config.output_dim))
    w_out, b_out = weights.layers[-1]
    b_new = b_out.copy()
    b_new[channel] = bias_offset
    return replace(weights, layers=weights.layers[:-1] + ((w_out, b_new),))


def _act(z, kind):
    return np.maximum(z, 0.0) if kind == "relu" else np.tanh(z)


def _act_grad(z, a, kind):
    return (z > 0).astype(float) if kind == "relu" else 1.0 - a * a


def forward(weights, x):
    """Returns (raw outputs, cache). ``x`` is (d,) or (B, d)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[-1] != weights.config.input_dim:
        raise ValueError("input has %d features, network expects %d" % (h.shape[-1], weights.config.input_dim))
    cache = ForwardCache(inputs=h)
    kind = weights.config.hidden_activation
    for w, b in weights.layers[:-1]:
        z = h @ w.T + b
        h = _act(z, kind)
        cache.pre.append(z)
        cache.post.append(h)
    w, b = weights.layers[-1]
    out = h @ w.T + b
    return (out[0] if single else out), cache


def backward(weights, cache, d_raw):
    """Weight gradients given dLoss/d(raw outputs) for the cached batch."""
    d = np.asarray(d_raw, dtype=float)
    if d.ndim == 1:
        d = d[None, :]
    if d.shape != (cache.inputs.shape[0], weights.config.output_dim):
        raise ValueError("d_raw shape %s does not match forward output" % (d.shape,))
    kind = weights.config.hidden_activation
    grads = [None] * len(weights.layers)
    acts = [cache.inputs] + cache.post
    for i in range(len(weights.layers) - 1, -1, -1):
        w, _ = weights.layers[i]
        grads[i] = (d.T @ acts[i], d.sum(axis=0))
        if i > 0:
            d = (d @ w) * _act_grad(cache.pre[i - 1], cache.post[i - 1], kind)
    return tuple(grads)


def adam_init(weights, lr=5e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    zeros = tuple((np.zeros_like(w), np.zeros_like(b)) for w, b in weights.layers)
    return AdamState(zeros, zeros, 0, lr, beta1, beta2, eps)


def adam_step(weights, grads, state):
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_layers, new_m, new_v = [], [], []
    for (w, b), (gw, gb), (mw, mb), (vw, vb) in zip(weights.layers, grads, state.m, state.v):
        layer, ms, vs = [], [], []
        for p, g, m, v in ((w, gw, mw, vw), (b, gb, mb, vb)):
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * g * g
            p = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
            layer.append(p)
            ms.append(m)
            vs.append(v)
        new_layers.append(tuple(layer))
        new_m.append(tuple(ms))
        new_v.append(tuple(vs))
    return (
        replace(weights, layers=tuple(new_layers)),
        replace(state, m=tuple(new_m), v=tuple(new_v), t=t),
    )


def flatten_params(weights):
    return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in weights.layers])


def unflatten_params(weights, flat):
    layers, k = [], 0
    for w, b in weights.layers:
        nw = flat[k:k + w.size].reshape(w.shape)
        k += w.size
        nb = flat[k:k + b.size].copy()
        k += b.size
        layers.append((nw, nb))
    return replace(weights, layers=tuple(layers))


# --- checkpoint persistence ---------------------------------------------------


def _layers_to_json(layers):
    return [{"w": w.tolist(), "b": b.tolist()} for w, b in layers]


def checkpoint_dict(weights, state=None):
    doc = {
        "version": CHECKPOINT_VERSION,
        "config": weights.config.to_dict(),
        "seed": int(weights.config.seed),
        "layers": _layers_to_json(weights.layers),
    }
    if state is not None:
        doc["adam"] = {
            "m": _layers_to_json(state.m),
            "v": _layers_to_json(state.v),
            "t": state.t,
            "lr": state.lr,
            "beta1": state.beta1,
            "beta2": state.beta2,
            "eps": state.eps,
        }
    return doc


def save_checkpoint(weights, state, path):
    for w, b in weights.layers:
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise CheckpointError("refusing to save non-finite weights")
    path = Path(path)
    # repr-based float encoding in json is shortest round-trip, hence bit-exact
    path.write_text(json.dumps(checkpoint_dict(weights, state), indent=1))
    return path


def _array(value, shape, field_name):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise CheckpointError("malformed numerics in field %r" % field_name) from exc
    if arr.shape != shape:
        raise CheckpointError("shape mismatch in field %r: expected %s, got %s" % (field_name, shape, arr.shape))
    if not np.all(np.isfinite(arr)):
        raise CheckpointError("non-finite value in field %r" % field_name)
    return arr


def _layers_from_json(items, dims, prefix):
    if not isinstance(items, list) or len(items) != len(dims) - 1:
        raise CheckpointError("field %r must list %d layers" % (prefix, len(dims) - 1))
    out = []
    for i, (item, fan_in, fan_out) in enumerate(zip(items, dims[:-1], dims[1:])):
        if not isinstance(item, dict) or "w" not in item or "b" not in item:
            raise CheckpointError("field '%s[%d]' must have 'w' and 'b'" % (prefix, i))
        out.append((
            _array(item["w"], (fan_out, fan_in), "%s[%d].w" % (prefix, i)),
            _array(item["b"], (fan_out,), "%s[%d].b" % (prefix, i)),
        ))
    return tuple(out)


def checkpoint_from_dict(doc):
    if not isinstance(doc, dict):
        raise CheckpointError("checkpoint must be a JSON object")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError("unsupported version %r (expected %d)" % (doc.get("version"), CHECKPOINT_VERSION))
    try:
        cfg = doc["config"]
        config = MLPConfig(
            int(cfg["input_dim"]),
            tuple(cfg["hidden_widths"]),
            int(cfg["output_dim"]),
            cfg.get("hidden_activation", "relu"),
            int(cfg.get("seed", doc.get("seed", 0))),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError("field 'config' is malformed: %s" % exc) from exc
    if "layers" not in doc:
        raise CheckpointError("missing field 'layers'")
    weights = MLPWeights(config, _layers_from_json(doc["layers"], config.dims, "layers"))
    state = None
    if doc.get("adam") is not None:
        adam = doc["adam"]
        try:
            state = AdamState(
                _layers_from_json(adam["m"], config.dims, "adam.m"),
                _layers_from_json(adam["v"], config.dims, "adam.v"),
                int(adam["t"]),
                float(adam["lr"]),
                float(adam["beta1"]),
                float(adam["beta2"]),
                float(adam["eps"]),
            )
        except KeyError as exc:
            raise CheckpointError("missing field 'adam.%s'" % exc.args[0]) from exc
        except (TypeError, ValueError) as exc:
            if isinstance(exc, CheckpointError):
                raise
            raise CheckpointError("field 'adam' is malformed: %s" % exc) from exc
    return weights, state


def load_checkpoint(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError("checkpoint not found: %s" % path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError("checkpoint %s is not valid JSON: %s" % (path, exc)) from exc
    return checkpoint_from_dict(doc)
