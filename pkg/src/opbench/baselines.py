"""Per-function FCN and CNN regressors used as comparison baselines.

Each model learns ``P -> s(P)`` for a single input function from resampled
grid points, so unlike the operator network it has to be retrained for
every new input function.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import BaselineDataset
from .errors import DivergenceError, NumericError, ShapeError
from .nn import (
    Activation,
    ActivationLayer,
    AdamState,
    Conv1dLayer,
    DenseLayer,
    DropoutLayer,
    FlattenLayer,
    MlpParams,
    Sequential,
    adam_step,
    decode_checkpoint,
    encode_checkpoint,
    gradients,
)


@dataclass
class FcnArch:
    input_dim: int
    hidden: tuple[int, ...] = (30, 30)
    activation: Activation = Activation.RELU

    def build(self, rng: np.random.Generator) -> MlpParams:
        sizes = [self.input_dim, *self.hidden, 1]
        return MlpParams.glorot(sizes, rng, self.activation, Activation.IDENTITY)


@dataclass
class CnnArch:
    """conv(1 -> 32, k=1) -> tanh -> flatten -> dropout -> linear(2048) -> tanh -> linear(1).

    The input vector of ``input_dim`` features is read as a one-channel
    sequence, so the first linear layer sees ``32 * input_dim`` features.
    """

    input_dim: int
    channels: int = 32
    kernel_len: int = 1
    stride: int = 1
    hidden: int = 2048
    dropout: float = 0.5

    def build(self, rng: np.random.Generator) -> Sequential:
        conv = Conv1dLayer.glorot(1, self.channels, self.kernel_len, rng, self.stride)
        flat = self.channels * conv.output_length(self.input_dim)
        return Sequential(
            [
                conv,
                ActivationLayer(Activation.TANH),
                FlattenLayer(),
                DropoutLayer(self.dropout),
                DenseLayer.glorot(flat, self.hidden, Activation.TANH, rng),
                DenseLayer.glorot(self.hidden, 1, Activation.IDENTITY, rng),
            ]
        )


@dataclass
class BaselineModel:
    kind: str  # "fcn" | "cnn"
    net: Sequential
    input_dim: int

    def _shape(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        if p.ndim == 1:
            p = p[None, :]
        if p.shape[-1] != self.input_dim:
            raise ShapeError(f"{self.kind} expects {self.input_dim}-d points, got {p.shape[-1]}")
        return p[:, None, :] if self.kind == "cnn" else p

    def forward(self, points, training=False, rng=None):
        return self.net.forward(self._shape(points), training, rng)

    def params(self):
        return self.net.params()

    def backward(self, tape, dout):
        return self.net.backward(tape, dout)

    @property
    def layers(self):
        return self.net.layers

    def to_bytes(self, meta: dict | None = None) -> bytes:
        return encode_checkpoint({"net": self.net}, {"model": self.kind, "input_dim": self.input_dim, **(meta or {})})

    @classmethod
    def from_bytes(cls, data: bytes) -> tuple["BaselineModel", dict]:
        groups, meta = decode_checkpoint(data)
        return cls(meta["model"], groups["net"], meta["input_dim"]), meta


def predict(model: BaselineModel, points) -> np.ndarray:
    """Deterministic forward pass (dropout off); one value per point."""
    return model.forward(points)[0][:, 0]


def build_model(kind: str, input_dim: int, rng: np.random.Generator) -> BaselineModel:
    if kind == "fcn":
        return BaselineModel("fcn", FcnArch(input_dim).build(rng), input_dim)
    if kind == "cnn":
        return BaselineModel("cnn", CnnArch(input_dim).build(rng), input_dim)
    raise ValueError(f"unknown baseline {kind!r}")


@dataclass
class BaselineTrainConfig:
    epochs: int = 2000
    lr: float = 1e-3
    batch_size: int | None = None  # None: 10 for FCN, 20 for CNN
    seed: int = 0

    def batch_for(self, kind: str) -> int:
        return self.batch_size or {"fcn": 10, "cnn": 20}[kind]


@dataclass
class BaselineResult:
    model: BaselineModel
    history: list[float] = field(default_factory=list)  # mean batch loss per epoch
    source_function_id: int = -1


def _mse(out, target):
    r = out[:, 0] - target
    return float(np.mean(r * r)), (2.0 * r / r.size)[:, None]


def train_baseline(data: BaselineDataset, kind: str, cfg: BaselineTrainConfig = BaselineTrainConfig()) -> BaselineResult:
    """Mini-batch Adam on MSE; batches reshuffled every epoch from an epoch-derived seed."""
    x = np.asarray(data.train_points, dtype=np.float64)
    y = np.asarray(data.train_targets, dtype=np.float64)
    if x.shape[0] == 0:
        raise ValueError("no training points")
    model = build_model(kind, x.shape[1], np.random.default_rng(cfg.seed))
    state = AdamState.for_params(model.params(), cfg.lr)
    batch = cfg.batch_for(kind)
    history = []
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng([cfg.seed, epoch])
        order = rng.permutation(x.shape[0])
        total = 0.0
        for start in range(0, order.size, batch):
            idx = order[start : start + batch]
            try:
                value, grads = gradients(model, _mse, x[idx], y[idx], training=True, rng=rng)
            except NumericError as exc:
                raise DivergenceError(f"{kind} diverged in epoch {epoch}: {exc}", iteration=epoch) from exc
            adam_step(state, model.params(), grads)
            total += value * idx.size
        history.append(total / x.shape[0])
    return BaselineResult(model, history, data.source_function_id)


def train_fcn(data: BaselineDataset, cfg: BaselineTrainConfig = BaselineTrainConfig()) -> BaselineResult:
    return train_baseline(data, "fcn", cfg)


def train_cnn(data: BaselineDataset, cfg: BaselineTrainConfig = BaselineTrainConfig()) -> BaselineResult:
    return train_baseline(data, "cnn", cfg)
