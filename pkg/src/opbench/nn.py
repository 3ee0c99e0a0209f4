"""Small dense/conv network engine on numpy.

Layers carry their own forward and backward passes. A model is an ordered
stack of layers; running it forward records a tape that ``backward`` walks in
reverse to produce parameter gradients. Everything is float64.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import CheckpointError, NumericError, ShapeError


class Activation(str, Enum):
    RELU = "relu"
    TANH = "tanh"
    IDENTITY = "identity"


def _activate(kind: Activation, z: np.ndarray) -> np.ndarray:
    if kind is Activation.RELU:
        return np.maximum(z, 0.0)
    if kind is Activation.TANH:
        return np.tanh(z)
    return z


def _activation_grad(kind: Activation, z: np.ndarray, y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    # ReLU subgradient at 0 is 0
    if kind is Activation.RELU:
        return dy * (z > 0.0)
    if kind is Activation.TANH:
        return dy * (1.0 - y * y)
    return dy


def glorot_init(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform weight matrix of shape ``(fan_out, fan_in)``."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError("fan_in and fan_out must be >= 1")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


# --------------------------------------------------------------------------
# layers


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: Activation = Activation.RELU

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        self.activation = Activation(self.activation)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"dense layer weights {self.weights.shape} and bias {self.bias.shape} disagree"
            )

    @classmethod
    def glorot(cls, n_in: int, n_out: int, activation, rng: np.random.Generator) -> "DenseLayer":
        return cls(glorot_init(n_in, n_out, rng), np.zeros(n_out), Activation(activation))

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    def params(self) -> list[np.ndarray]:
        return [self.weights, self.bias]

    def forward(self, x, training=False, rng=None):
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"dense layer expects {self.n_in} inputs, got {x.shape[-1]}")
        z = x @ self.weights.T + self.bias
        y = _activate(self.activation, z)
        return y, (x, z, y)

    def backward(self, dy, cache):
        x, z, y = cache
        dz = _activation_grad(self.activation, z, y, dy)
        dw = dz.T @ x
        db = dz.sum(axis=0)
        dx = dz @ self.weights
        return dx, [dw, db]

    def spec(self) -> dict:
        return {"kind": "dense", "in": self.n_in, "out": self.n_out, "activation": self.activation.value}


@dataclass
class Conv1dLayer:
    """1-D cross-correlation over channel-major input ``(batch, channels, length)``."""

    kernels: np.ndarray  # (out_channels, in_channels, kernel_len)
    bias: np.ndarray  # (out_channels,)
    stride: int = 1

    def __post_init__(self):
        self.kernels = np.asarray(self.kernels, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.kernels.ndim != 3 or self.bias.shape != (self.kernels.shape[0],):
            raise ShapeError(f"conv kernels {self.kernels.shape} and bias {self.bias.shape} disagree")
        if self.stride < 1:
            raise ValueError("stride must be positive")

    @classmethod
    def glorot(cls, in_channels, out_channels, kernel_len, rng, stride=1) -> "Conv1dLayer":
        fan_in = in_channels * kernel_len
        fan_out = out_channels * kernel_len
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        k = rng.uniform(-limit, limit, size=(out_channels, in_channels, kernel_len))
        return cls(k, np.zeros(out_channels), stride)

    @property
    def in_channels(self) -> int:
        return self.kernels.shape[1]

    @property
    def out_channels(self) -> int:
        return self.kernels.shape[0]

    @property
    def kernel_len(self) -> int:
        return self.kernels.shape[2]

    def output_length(self, input_len: int) -> int:
        if self.kernel_len > input_len:
            raise ShapeError(f"kernel length {self.kernel_len} exceeds input length {input_len}")
        return (input_len - self.kernel_len) // self.stride + 1

    def params(self) -> list[np.ndarray]:
        return [self.kernels, self.bias]

    def _window_index(self, input_len):
        n_out = self.output_length(input_len)
        return np.arange(n_out)[:, None] * self.stride + np.arange(self.kernel_len)[None, :]

    def forward(self, x, training=False, rng=None):
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise ShapeError(
                f"conv layer expects (batch, {self.in_channels}, length), got {x.shape}"
            )
        idx = self._window_index(x.shape[2])
        windows = x[:, :, idx]  # (n, cin, lout, k)
        y = np.einsum("nclk,ock->nol", windows, self.kernels) + self.bias[None, :, None]
        return y, (x.shape, windows, idx)

    def backward(self, dy, cache):
        shape, windows, idx = cache
        dk = np.einsum("nol,nclk->ock", dy, windows)
        db = dy.sum(axis=(0, 2))
        dwin = np.einsum("nol,ock->nclk", dy, self.kernels)
        dx = np.zeros(shape)
        np.add.at(dx, (slice(None), slice(None), idx), dwin)
        return dx, [dk, db]

    def spec(self) -> dict:
        return {
            "kind": "conv1d",
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel_len": self.kernel_len,
            "stride": self.stride,
        }


@dataclass
class ActivationLayer:
    activation: Activation

    def __post_init__(self):
        self.activation = Activation(self.activation)

    def params(self):
        return []

    def forward(self, x, training=False, rng=None):
        y = _activate(self.activation, x)
        return y, (x, y)

    def backward(self, dy, cache):
        x, y = cache
        return _activation_grad(self.activation, x, y, dy), []

    def spec(self):
        return {"kind": "activation", "activation": self.activation.value}


class FlattenLayer:
    def params(self):
        return []

    def forward(self, x, training=False, rng=None):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, cache):
        return dy.reshape(cache), []

    def spec(self):
        return {"kind": "flatten"}

    def __eq__(self, other):
        return isinstance(other, FlattenLayer)


@dataclass
class DropoutLayer:
    """Inverted dropout; identity outside training."""

    p: float = 0.5

    def params(self):
        return []

    def forward(self, x, training=False, rng=None):
        if not training or self.p == 0.0:
            return x, None
        if rng is None:
            raise ValueError("dropout in training mode needs an rng")
        mask = (rng.random(x.shape) >= self.p) / (1.0 - self.p)
        return x * mask, mask

    def backward(self, dy, cache):
        return (dy if cache is None else dy * cache), []

    def spec(self):
        return {"kind": "dropout", "p": self.p}


# --------------------------------------------------------------------------
# models


@dataclass
class Sequential:
    layers: list = field(default_factory=list)

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def forward(self, x, training: bool = False, rng: np.random.Generator | None = None):
        """Run the stack; returns ``(output, tape)``."""
        tape = []
        h = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            h, cache = layer.forward(h, training, rng)
            tape.append(cache)
        if not np.all(np.isfinite(h)):
            self._locate_nonfinite(x, training, rng)
        return h, tape

    def _locate_nonfinite(self, x, training, rng):
        h = np.asarray(x, dtype=np.float64)
        for i, layer in enumerate(self.layers):
            if not np.all(np.isfinite(h)):
                break
            h, _ = layer.forward(h, False, None)
            if not np.all(np.isfinite(h)):
                raise NumericError(f"non-finite activations in layer {i}", layer=i)
        raise NumericError("non-finite model input", layer=-1)

    def backward(self, tape, dout):
        grads: list[list[np.ndarray]] = []
        g = dout
        for layer, cache in zip(reversed(self.layers), reversed(tape)):
            g, layer_grads = layer.backward(g, cache)
            grads.append(layer_grads)
        return g, [p for layer_grads in reversed(grads) for p in layer_grads]

    def __call__(self, x):
        return self.forward(x)[0]

    def copy(self) -> "Sequential":
        return type(self)(layers=_copy_layers(self.layers))

    def spec(self) -> list[dict]:
        return [layer.spec() for layer in self.layers]


@dataclass
class MlpParams(Sequential):
    """Fully connected stack of ``DenseLayer``."""

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.n_out != b.n_in:
                raise ShapeError(f"layer sizes disagree: {a.n_out} -> {b.n_in}")

    @classmethod
    def glorot(
        cls,
        layer_sizes: Sequence[int],
        rng: np.random.Generator,
        activation=Activation.RELU,
        output_activation=Activation.IDENTITY,
    ) -> "MlpParams":
        if len(layer_sizes) < 2 or any(n < 1 for n in layer_sizes):
            raise ValueError(f"bad layer sizes {layer_sizes}")
        layers = []
        n_layers = len(layer_sizes) - 1
        for i in range(n_layers):
            act = output_activation if i == n_layers - 1 else activation
            layers.append(DenseLayer.glorot(layer_sizes[i], layer_sizes[i + 1], act, rng))
        return cls(layers)

    @property
    def layer_sizes(self) -> list[int]:
        if not self.layers:
            return []
        return [self.layers[0].n_in] + [layer.n_out for layer in self.layers]


def _copy_layers(layers):
    out = []
    for layer in layers:
        if isinstance(layer, DenseLayer):
            out.append(DenseLayer(layer.weights.copy(), layer.bias.copy(), layer.activation))
        elif isinstance(layer, Conv1dLayer):
            out.append(Conv1dLayer(layer.kernels.copy(), layer.bias.copy(), layer.stride))
        elif isinstance(layer, ActivationLayer):
            out.append(ActivationLayer(layer.activation))
        elif isinstance(layer, DropoutLayer):
            out.append(DropoutLayer(layer.p))
        else:
            out.append(FlattenLayer())
    return out


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    """Evaluate an MLP on one vector or a batch of row vectors."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return params.forward(x[None, :])[0][0]
    return params.forward(x)[0]


def conv1d_forward(layer: Conv1dLayer, x) -> np.ndarray:
    """Cross-correlate a ``(channels, length)`` sequence, or a batch of them."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return layer.forward(x[None])[0][0]
    return layer.forward(x)[0]


LossFn = Callable[[np.ndarray, np.ndarray], tuple[float, np.ndarray]]


def gradients(model, loss: LossFn, inputs, targets, training=False, rng=None):
    """Loss value and d(loss)/d(param) for every entry of ``model.params()``.

    ``loss(outputs, targets)`` returns ``(value, d value / d outputs)``.
    """
    out, tape = model.forward(inputs, training, rng)
    value, dout = loss(out, targets)
    if not np.isfinite(value):
        raise NumericError("non-finite loss", layer=len(model.layers) - 1)
    _, grads = model.backward(tape, dout)
    return value, grads


# --------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        return cls(
            [np.zeros_like(p) for p in params],
            [np.zeros_like(p) for p in params],
            0,
            lr,
            beta1,
            beta2,
            epsilon,
        )


def adam_step(state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]):
    """Bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ShapeError("parameter, gradient and moment lists differ in length")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state


# --------------------------------------------------------------------------
# checkpoints

_MAGIC = b"OPBPARAM"


def _layer_from_spec(spec: dict, arrays: list[np.ndarray]):
    kind = spec["kind"]
    if kind == "dense":
        return DenseLayer(arrays[0], arrays[1], Activation(spec["activation"]))
    if kind == "conv1d":
        return Conv1dLayer(arrays[0], arrays[1], spec["stride"])
    if kind == "activation":
        return ActivationLayer(Activation(spec["activation"]))
    if kind == "flatten":
        return FlattenLayer()
    if kind == "dropout":
        return DropoutLayer(spec["p"])
    raise CheckpointError(f"unknown layer kind {kind!r}")


def _param_shapes(spec: dict) -> list[tuple[int, ...]]:
    kind = spec["kind"]
    if kind == "dense":
        return [(spec["out"], spec["in"]), (spec["out"],)]
    if kind == "conv1d":
        return [(spec["out_channels"], spec["in_channels"], spec["kernel_len"]), (spec["out_channels"],)]
    return []


def encode_checkpoint(groups: dict[str, Sequential], meta: dict) -> bytes:
    header = {
        "format": "opbench-params",
        "version": 1,
        "groups": {name: {"type": type(m).__name__, "layers": m.spec()} for name, m in groups.items()},
        "meta": meta,
    }
    blob = b"".join(
        np.ascontiguousarray(p, dtype="<f8").tobytes() for m in groups.values() for p in m.params()
    )
    header["blob_bytes"] = len(blob)
    raw = json.dumps(header, sort_keys=True).encode()
    return _MAGIC + struct.pack("<Q", len(raw)) + raw + blob


def decode_checkpoint(data: bytes) -> tuple[dict[str, Sequential], dict]:
    if data[:8] != _MAGIC or len(data) < 16:
        raise CheckpointError("not an opbench parameter file")
    (n,) = struct.unpack("<Q", data[8:16])
    try:
        header = json.loads(data[16 : 16 + n])
    except (ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"malformed checkpoint header: {exc}") from exc
    blob = data[16 + n :]
    if len(blob) != header["blob_bytes"]:
        raise CheckpointError(f"checkpoint blob is {len(blob)} bytes, header says {header['blob_bytes']}")
    flat = np.frombuffer(blob, dtype="<f8")
    pos = 0
    groups: dict[str, Sequential] = {}
    for name, g in header["groups"].items():
        layers = []
        for spec in g["layers"]:
            arrays = []
            for shape in _param_shapes(spec):
                size = int(np.prod(shape))
                arrays.append(flat[pos : pos + size].reshape(shape).astype(np.float64))
                pos += size
            layers.append(_layer_from_spec(spec, arrays))
        cls = MlpParams if g["type"] == "MlpParams" else Sequential
        groups[name] = cls(layers)
    return groups, header["meta"]


def save_checkpoint(path, groups: dict[str, Sequential], meta: dict) -> Path:
    from .io import atomic_write_bytes

    return atomic_write_bytes(Path(path), encode_checkpoint(groups, meta))


def load_checkpoint(path) -> tuple[dict[str, Sequential], dict]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(str(exc)) from exc
    return decode_checkpoint(data)
