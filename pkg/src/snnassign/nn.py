"""Minimal dense-network engine.

Float64 end to end, explicit forward tapes, reverse-mode gradients, plain
SGD, and a line-oriented text checkpoint format that round-trips values
exactly.  The last layer may delegate to the cascaded Sinkhorn activation,
which is how assignment networks produce doubly stochastic outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import sinkhorn as sk
from .opcount import OpCounter

ACTIVATIONS = ("relu", "sigmoid", "identity", "sinkhorn-output")

CHECKPOINT_MAGIC = "SNNCKPT v1"


@dataclass
class DenseLayer:
    weight: np.ndarray  # (k_out, k_in)
    bias: np.ndarray    # (k_out,)
    activation: str

    @property
    def k_out(self) -> int:
        return self.weight.shape[0]

    @property
    def k_in(self) -> int:
        return self.weight.shape[1]


@dataclass
class MlpParams:
    """An ordered stack of dense layers with validated chaining dims."""

    layers: list

    def __post_init__(self):
        if not self.layers:
            raise ValueError("need at least one layer")
        for idx, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"unknown activation {layer.activation!r}")
            w = np.asarray(layer.weight, dtype=float)
            b = np.asarray(layer.bias, dtype=float)
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {idx}: weight/bias shapes disagree")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {idx}: non-finite parameters")
            layer.weight, layer.bias = w, b
            if idx and w.shape[1] != self.layers[idx - 1].k_out:
                raise ValueError(
                    f"layer {idx}: input dim {w.shape[1]} does not chain with "
                    f"previous output dim {self.layers[idx - 1].k_out}")
            if layer.activation == "sinkhorn-output":
                if idx != len(self.layers) - 1:
                    raise ValueError("sinkhorn-output is only valid on the last layer")
                n = math.isqrt(w.shape[0])
                if n * n != w.shape[0]:
                    raise ValueError(
                        f"sinkhorn-output needs a square output dim, got {w.shape[0]}")

    @property
    def dims(self):
        return [self.layers[0].k_in] + [layer.k_out for layer in self.layers]

    def copy(self) -> "MlpParams":
        return MlpParams([DenseLayer(l.weight.copy(), l.bias.copy(), l.activation)
                          for l in self.layers])


@dataclass
class Gradients:
    """Per-layer (d_weight, d_bias) pairs, aligned with MlpParams.layers."""

    layers: list


@dataclass
class ForwardTape:
    inputs: list = field(default_factory=list)   # what each layer consumed
    pre: list = field(default_factory=list)      # affine outputs
    post: list = field(default_factory=list)     # activated outputs
    sinkhorn_tape: sk.SinkhornTape | None = None
    squeeze: bool = False


def _sigmoid(z):
    # split by sign so the exponential never overflows
    out = np.empty_like(z)
    pos = z >= 0
    neg = ~pos
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[neg])
    out[neg] = ez / (1.0 + ez)
    return out


def forward(params: MlpParams, x, record=False, sinkhorn=None, counter=None):
    """Evaluate the network on one vector or a (batch, dim) matrix.

    Returns (output, tape); the tape is None unless record=True.  A
    sinkhorn-output layer requires the SinkhornConfig via `sinkhorn`.
    OpCounter tallies are per instance regardless of batch size.
    """
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.ndim != 2 or h.shape[1] != params.layers[0].k_in:
        raise ValueError(
            f"input of shape {x.shape} does not match first-layer dim "
            f"{params.layers[0].k_in}")
    tape = ForwardTape(squeeze=squeeze) if record else None
    for layer in params.layers:
        if counter is not None:
            counter.add_dense(layer.k_out, layer.k_in)
        z = h @ layer.weight.T + layer.bias
        if record:
            tape.inputs.append(h)
            tape.pre.append(z)
        if layer.activation == "relu":
            h = np.maximum(z, 0.0)
        elif layer.activation == "sigmoid":
            h = _sigmoid(z)
        elif layer.activation == "identity":
            h = z
        else:  # sinkhorn-output
            if sinkhorn is None:
                raise RuntimeError("sinkhorn-output layer needs a SinkhornConfig")
            n = math.isqrt(layer.k_out)
            sk_tape = sk.SinkhornTape(sinkhorn.tau) if record else None
            soft = sk.cascaded_activation(z.reshape(-1, n, n), sinkhorn,
                                          tape=sk_tape, counter=counter)
            h = soft.reshape(z.shape)
            if record:
                tape.sinkhorn_tape = sk_tape
        if record:
            tape.post.append(h)
    out = h[0] if squeeze else h
    return out, tape


def backward(params: MlpParams, tape: ForwardTape, output_grad):
    """Chain-rule pass over a recorded forward run.

    Returns (Gradients, d(loss)/d(input)).  Gradients are summed over the
    batch dimension; divide upstream if a mean is wanted.
    """
    if tape is None or not tape.post:
        raise RuntimeError("backward needs the tape from forward(record=True)")
    g = np.asarray(output_grad, dtype=float)
    if tape.squeeze:
        g = g[None, :]
    if g.shape != tape.post[-1].shape:
        raise ValueError(
            f"output gradient shape {np.shape(output_grad)} does not match "
            f"forward output shape {tape.post[-1].shape}")
    layer_grads = [None] * len(params.layers)
    for idx in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[idx]
        act = layer.activation
        if act == "relu":
            dz = g * (tape.pre[idx] > 0.0)
        elif act == "sigmoid":
            s = tape.post[idx]
            dz = g * s * (1.0 - s)
        elif act == "identity":
            dz = g
        else:
            n = math.isqrt(layer.k_out)
            gm = sk.sinkhorn_backward(tape.sinkhorn_tape, g.reshape(-1, n, n))
            dz = gm.reshape(g.shape)
        layer_grads[idx] = (dz.T @ tape.inputs[idx], dz.sum(axis=0))
        g = dz @ layer.weight
    d_input = g[0] if tape.squeeze else g
    return Gradients(layer_grads), d_input


def sgd_step(params: MlpParams, batch_grads, eta: float) -> MlpParams:
    """One descent step theta <- theta - (eta / |B|) * sum of gradients."""
    if not batch_grads:
        raise ValueError("empty gradient batch")
    if eta < 0:
        raise ValueError("learning rate must be >= 0")
    scale = eta / len(batch_grads)
    new_layers = []
    for idx, layer in enumerate(params.layers):
        dw = sum(g.layers[idx][0] for g in batch_grads)
        db = sum(g.layers[idx][1] for g in batch_grads)
        if dw.shape != layer.weight.shape or db.shape != layer.bias.shape:
            raise ValueError(f"layer {idx}: gradient shapes disagree with parameters")
        w = layer.weight - scale * dw
        b = layer.bias - scale * db
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise FloatingPointError(f"layer {idx}: parameters overflowed in update")
        new_layers.append(DenseLayer(w, b, layer.activation))
    return MlpParams(new_layers)


def init_params(dims, activations, seed) -> MlpParams:
    """Fan-balanced uniform weight init, zero biases, reproducible via seed.

    Weights are drawn from U(-a, a) with a = sqrt(6 / (k_in + k_out)).
    """
    if len(dims) < 2:
        raise ValueError("need an input dim and at least one layer dim")
    if len(activations) != len(dims) - 1:
        raise ValueError("need exactly one activation per layer")
    rng = np.random.default_rng(seed)
    layers = []
    for k_in, k_out, act in zip(dims[:-1], dims[1:], activations):
        limit = math.sqrt(6.0 / (k_in + k_out))
        w = rng.uniform(-limit, limit, size=(k_out, k_in))
        layers.append(DenseLayer(w, np.zeros(k_out), act))
    return MlpParams(layers)


def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_params(fh, params: MlpParams) -> None:
    """Serialize one network as an SNNCKPT v1 block on an open text stream."""
    fh.write(CHECKPOINT_MAGIC + "\n")
    fh.write(f"{len(params.layers)}\n")
    for r, layer in enumerate(params.layers, start=1):
        fh.write(f"LAYER {r} {layer.k_out} {layer.k_in} {layer.activation}\n")
        for row in layer.weight:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")
        fh.write(" ".join(_fmt(v) for v in layer.bias) + "\n")


def read_params(fh) -> MlpParams:
    """Parse one SNNCKPT v1 block from an open text stream."""
    magic = fh.readline().strip()
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"not an {CHECKPOINT_MAGIC} stream (got {magic!r})")
    try:
        count = int(fh.readline())
    except ValueError as exc:
        raise ValueError("malformed layer count") from exc
    layers = []
    for r in range(1, count + 1):
        head = fh.readline().split()
        if len(head) != 5 or head[0] != "LAYER" or int(head[1]) != r:
            raise ValueError(f"malformed layer header {head!r}")
        k_out, k_in, act = int(head[2]), int(head[3]), head[4]
        w = np.array([[float(v) for v in fh.readline().split()]
                      for _ in range(k_out)], dtype=float)
        b = np.array([float(v) for v in fh.readline().split()], dtype=float)
        if w.shape != (k_out, k_in) or b.shape != (k_out,):
            raise ValueError(f"layer {r}: value block does not match header dims")
        layers.append(DenseLayer(w, b, act))
    return MlpParams(layers)


def save_params(path, params: MlpParams) -> None:
    with open(path, "w") as fh:
        write_params(fh, params)


def load_params(path) -> MlpParams:
    with open(path) as fh:
        return read_params(fh)


def count_forward_ops(params: MlpParams, sinkhorn=None) -> OpCounter:
    """Instrumented per-instance forward cost; see OpCounter for the rules."""
    counter = OpCounter()
    forward(params, np.zeros(params.layers[0].k_in), sinkhorn=sinkhorn,
            counter=counter)
    return counter
