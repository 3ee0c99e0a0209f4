"""Branch-trunk operator network, its losses and full-batch Adam training."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .dataset import OperatorDataset
from .errors import DegenerateError, DivergenceError, NumericError, ShapeError
from .nn import Activation, AdamState, MlpParams, adam_step, decode_checkpoint, encode_checkpoint


class LossKind(str, Enum):
    MSE = "mse"
    MEAN_L2_RELATIVE = "mean_l2_relative"


# --------------------------------------------------------------------------
# losses


def mse_with_grad(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    if pred.size == 0:
        raise DegenerateError("MSE of an empty vector")
    r = pred - target
    return float(np.mean(r * r)), 2.0 * r / r.size


def mean_l2_relative_with_grad(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Rows are groups (one per input function)."""
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    if pred.ndim != 2 or pred.shape[0] == 0 or pred.shape[1] == 0:
        raise DegenerateError("mean L2 relative error needs non-empty groups")
    r = pred - target
    rn = np.sqrt(np.sum(r * r, axis=1))
    tn = np.sqrt(np.sum(target * target, axis=1))
    if np.any(tn == 0.0):
        raise DegenerateError(f"zero-norm target in group {int(np.argmax(tn == 0.0))}")
    n = pred.shape[0]
    safe = np.where(rn > 0.0, rn, 1.0)
    grad = np.where(rn[:, None] > 0.0, r / (safe * tn)[:, None], 0.0) / n
    return float(np.mean(rn / tn)), grad


def loss_mse(pred, target) -> float:
    return mse_with_grad(np.asarray(pred, dtype=np.float64), np.asarray(target, dtype=np.float64))[0]


def loss_mean_l2_relative(preds, targets) -> float:
    """Mean over groups of ``||pred - target|| / ||target||``; groups may differ in length."""
    if len(preds) != len(targets) or len(preds) == 0:
        raise DegenerateError("need the same, non-zero number of prediction and target groups")
    ratios = []
    for i, (p, t) in enumerate(zip(preds, targets)):
        p = np.asarray(p, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        if p.shape != t.shape or p.size == 0:
            raise DegenerateError(f"group {i} is empty or mismatched")
        tn = np.linalg.norm(t)
        if tn == 0.0:
            raise DegenerateError(f"zero-norm target in group {i}")
        ratios.append(np.linalg.norm(p - t) / tn)
    return float(np.mean(ratios))


LOSSES: dict[LossKind, Callable] = {
    LossKind.MSE: mse_with_grad,
    LossKind.MEAN_L2_RELATIVE: mean_l2_relative_with_grad,
}


# --------------------------------------------------------------------------
# model


@dataclass
class DeepONetArch:
    branch: list[int] = field(default_factory=lambda: [100, 40, 40])
    trunk: list[int] = field(default_factory=lambda: [1, 40, 40])
    activation: Activation = Activation.RELU
    # the trunk's last layer keeps the nonlinearity; the branch's is linear
    trunk_output_activation: Activation = Activation.RELU
    stacked: bool = False
    output_bias: bool = False

    def __post_init__(self):
        self.activation = Activation(self.activation)
        self.trunk_output_activation = Activation(self.trunk_output_activation)
        if self.branch[-1] != self.trunk[-1]:
            raise ShapeError(f"branch output {self.branch[-1]} != trunk output {self.trunk[-1]}")

    def to_dict(self) -> dict:
        return {
            "branch": list(self.branch),
            "trunk": list(self.trunk),
            "activation": self.activation.value,
            "trunk_output_activation": self.trunk_output_activation.value,
            "stacked": self.stacked,
            "output_bias": self.output_bias,
        }


@dataclass
class DeepONetParams:
    branch: MlpParams | list[MlpParams]
    trunk: MlpParams
    stacked: bool = False
    output_bias: np.ndarray | None = None  # shape (1,) when enabled

    @classmethod
    def init(cls, arch: DeepONetArch, rng: np.random.Generator) -> "DeepONetParams":
        latent = arch.trunk[-1]
        if arch.stacked:
            sizes = list(arch.branch[:-1]) + [1]
            branch = [MlpParams.glorot(sizes, rng, arch.activation) for _ in range(latent)]
        else:
            branch = MlpParams.glorot(arch.branch, rng, arch.activation)
        trunk = MlpParams.glorot(arch.trunk, rng, arch.activation, arch.trunk_output_activation)
        bias = np.zeros(1) if arch.output_bias else None
        return cls(branch, trunk, arch.stacked, bias)

    @property
    def latent_dim(self) -> int:
        return self.trunk.layer_sizes[-1]

    @property
    def n_sensors(self) -> int:
        return (self.branch[0] if self.stacked else self.branch).layer_sizes[0]

    @property
    def query_dim(self) -> int:
        return self.trunk.layer_sizes[0]

    def branches(self) -> list[MlpParams]:
        return list(self.branch) if self.stacked else [self.branch]

    def params(self) -> list[np.ndarray]:
        out = [p for b in self.branches() for p in b.params()] + self.trunk.params()
        if self.output_bias is not None:
            out.append(self.output_bias)
        return out

    def copy(self) -> "DeepONetParams":
        branch = [b.copy() for b in self.branch] if self.stacked else self.branch.copy()
        bias = None if self.output_bias is None else self.output_bias.copy()
        return DeepONetParams(branch, self.trunk.copy(), self.stacked, bias)

    def to_bytes(self, meta: dict | None = None) -> bytes:
        groups = {f"branch{i}": b for i, b in enumerate(self.branches())}
        groups["trunk"] = self.trunk
        envelope = {
            "model": "deeponet",
            "stacked": self.stacked,
            "latent_dim": self.latent_dim,
            "output_bias": None if self.output_bias is None else float(self.output_bias[0]),
            **(meta or {}),
        }
        return encode_checkpoint(groups, envelope)

    @classmethod
    def from_bytes(cls, data: bytes) -> tuple["DeepONetParams", dict]:
        groups, meta = decode_checkpoint(data)
        n_branch = sum(1 for k in groups if k.startswith("branch"))
        branches = [groups[f"branch{i}"] for i in range(n_branch)]
        stacked = bool(meta.get("stacked"))
        bias = None if meta.get("output_bias") is None else np.array([meta["output_bias"]], dtype=np.float64)
        return cls(branches if stacked else branches[0], groups["trunk"], stacked, bias), meta


@dataclass(frozen=True)
class QueryNodes:
    """Per-function query points factored into distinct nodes plus an index.

    Unaligned queries drawn from a fixed grid repeat across functions, so
    the trunk only needs one pass per distinct node. Gradients are gathered
    through the sparse (node x function) matrix of output gradients.
    """

    nodes: np.ndarray  # (n_nodes, d)
    index: np.ndarray  # (n_f, n_q) rows of ``nodes``
    order: np.ndarray  # flat query ids sorted by node
    functions: np.ndarray  # function id of each query in ``order``
    indptr: np.ndarray  # CSR row pointers over ``order``

    @classmethod
    def from_points(cls, points) -> "QueryNodes":
        pts = np.asarray(points, dtype=np.float64)
        nodes, inverse = np.unique(pts.reshape(-1, pts.shape[-1]), axis=0, return_inverse=True)
        index = inverse.reshape(pts.shape[:-1])
        if any(np.unique(row).size != row.size for row in index):
            raise ShapeError("query points repeat within a function")
        flat = index.reshape(-1)
        order = np.argsort(flat, kind="stable")
        indptr = np.searchsorted(flat[order], np.arange(nodes.shape[0] + 1))
        return cls(nodes, index, order, order // index.shape[1], indptr)

    @property
    def shape(self):
        return (*self.index.shape, self.nodes.shape[1])

    @property
    def ndim(self) -> int:
        return 3

    def weights(self, dpred: np.ndarray):
        """Sparse ``W[n, f] = dL/dpred`` at the query of function f on node n."""
        from scipy.sparse import csr_array

        return csr_array(
            (dpred.reshape(-1)[self.order], self.functions, self.indptr),
            shape=(self.nodes.shape[0], self.index.shape[0]),
        )


def _forward(params: DeepONetParams, u: np.ndarray, points):
    """Predictions ``(n_f, n_q)`` plus the tape needed for backprop.

    ``points`` is ``(n_q, d)`` when every function shares its query points,
    ``(n_f, n_q, d)`` otherwise, or a ``QueryNodes`` factoring of the latter.
    """
    if u.ndim != 2 or u.shape[1] != params.n_sensors:
        raise ShapeError(f"branch expects (n, {params.n_sensors}) sensor values, got {u.shape}")
    if points.shape[-1] != params.query_dim:
        raise ShapeError(f"trunk expects {params.query_dim}-d points, got {points.shape[-1]}")
    outs, btapes = [], []
    for b in params.branches():
        o, tape = b.forward(u)
        outs.append(o)
        btapes.append(tape)
    bvec = np.concatenate(outs, axis=1) if params.stacked else outs[0]
    aligned = points.ndim == 2
    if aligned:
        tvec, ttape = params.trunk.forward(points)
        with np.errstate(over="ignore", invalid="ignore"):  # non-finite output is reported by the loss
            pred = bvec @ tvec.T
    else:
        if points.shape[0] != u.shape[0]:
            raise ShapeError("unaligned points need one query list per function")
        nf, nq, d = points.shape
        if isinstance(points, QueryNodes):
            tnodes, ttape = params.trunk.forward(points.nodes)
            with np.errstate(over="ignore", invalid="ignore"):
                pred = np.matmul(tnodes[points.index], bvec[:, :, None])[:, :, 0]
            tvec = tnodes  # the backward pass works per node
        else:
            tflat, ttape = params.trunk.forward(points.reshape(nf * nq, d))
            tvec = tflat.reshape(nf, nq, -1)
            with np.errstate(over="ignore", invalid="ignore"):
                pred = np.matmul(tvec, bvec[:, :, None])[:, :, 0]
    if params.output_bias is not None:
        pred = pred + params.output_bias[0]
    return pred, (bvec, tvec, btapes, ttape, aligned, points)


def _backward(params: DeepONetParams, cache, dpred: np.ndarray) -> list[np.ndarray]:
    bvec, tvec, btapes, ttape, aligned, points = cache
    if aligned:
        db = dpred @ tvec
        dt = dpred.T @ bvec
    elif isinstance(points, QueryNodes):
        w = points.weights(dpred)
        db = w.T @ tvec
        dt = w @ bvec
    else:
        db = np.matmul(dpred[:, None, :], tvec)[:, 0, :]
        dt = (dpred[:, :, None] * bvec[:, None, :]).reshape(-1, bvec.shape[1])
    grads: list[np.ndarray] = []
    for i, (b, tape) in enumerate(zip(params.branches(), btapes)):
        col = db[:, i : i + 1] if params.stacked else db
        grads.extend(b.backward(tape, col)[1])
    grads.extend(params.trunk.backward(ttape, dt)[1])
    if params.output_bias is not None:
        grads.append(np.array([dpred.sum()]))
    return grads


def predict(params: DeepONetParams, u, points) -> np.ndarray:
    """Batched prediction ``G(u_f)(P_fq)``; see ``_forward`` for shapes."""
    return _forward(params, np.asarray(u, dtype=np.float64), np.asarray(points, dtype=np.float64))[0]


def deeponet_forward(params: DeepONetParams, u, point) -> float:
    """``sum_k branch_k(u) * trunk_k(P)`` (+ output bias) for one function and one point."""
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    point = np.atleast_2d(np.asarray(point, dtype=np.float64))
    return float(predict(params, u, point)[0, 0])


def predict_dataset(params: DeepONetParams, dataset: OperatorDataset, chunk: int = 2000) -> np.ndarray:
    out = np.empty_like(dataset.targets)
    pts = dataset.trunk_points()
    for start in range(0, len(dataset), chunk):
        sl = slice(start, start + chunk)
        p = pts if pts.ndim == 2 else pts[sl]
        out[sl] = predict(params, dataset.inputs.values[sl], p)
    return out


def loss_and_gradients(params: DeepONetParams, u, points, targets, loss: LossKind = LossKind.MSE):
    if not isinstance(points, QueryNodes):
        points = np.asarray(points, dtype=np.float64)
    pred, cache = _forward(params, np.asarray(u, dtype=np.float64), points)
    value, dpred = LOSSES[LossKind(loss)](pred, targets)
    if not np.isfinite(value):
        raise NumericError("non-finite loss")
    return value, _backward(params, cache, dpred)


# --------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    iterations: int = 10_000
    lr: float = 1e-3
    loss: LossKind = LossKind.MSE
    seed: int = 0
    log_every: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        self.loss = LossKind(self.loss)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "lr": self.lr,
            "loss": self.loss.value,
            "seed": self.seed,
            "log_every": self.log_every,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
        }


@dataclass
class TrainResult:
    params: DeepONetParams
    history: list[dict]
    initial: dict  # losses before the first update
    snapshots: dict[int, DeepONetParams] = field(default_factory=dict)
    seconds: float = 0.0


def _eval_losses(params, data: OperatorDataset, loss: LossKind):
    pred = predict_dataset(params, data)
    value = LOSSES[loss](pred, data.targets)[0]
    metric = mean_l2_relative_with_grad(pred, data.targets)[0]
    return value, metric


def train_deeponet(
    train: OperatorDataset,
    arch: DeepONetArch,
    config: TrainConfig = TrainConfig(),
    test: OperatorDataset | None = None,
    snapshot_at: Sequence[int] = (),
    progress: Callable[[dict], None] | None = None,
    init: DeepONetParams | None = None,
) -> TrainResult:
    """Full-batch Adam on ``train``.

    Every ``log_every`` iterations the history gains a row with the training
    loss, and for a test split, the test loss and test mean L2 relative error.
    """
    if arch.branch[0] != train.inputs.n_sensors:
        raise ShapeError(f"branch input {arch.branch[0]} != {train.inputs.n_sensors} sensors")
    if arch.trunk[0] != train.query_dim:
        raise ShapeError(f"trunk input {arch.trunk[0]} != query dimension {train.query_dim}")
    rng = np.random.default_rng(config.seed)
    params = init.copy() if init is not None else DeepONetParams.init(arch, rng)
    state = AdamState.for_params(params.params(), config.lr, config.beta1, config.beta2, config.epsilon)
    u = train.inputs.values
    pts = train.trunk_points()
    if pts.ndim == 3:
        pts = QueryNodes.from_points(pts)
    y = train.targets
    loss = config.loss
    wanted = set(int(i) for i in snapshot_at)
    snapshots = {0: params.copy()} if 0 in wanted else {}

    def record(it, train_loss):
        row = {"iteration": it, "train_loss": train_loss}
        if test is not None and len(test):
            row["test_loss"], row["test_metric"] = _eval_losses(params, test, loss)
        return row

    start = time.perf_counter()
    value0, grads = loss_and_gradients(params, u, pts, y, loss)
    initial = record(0, value0)
    history: list[dict] = []
    for it in range(1, config.iterations + 1):
        adam_step(state, params.params(), grads)
        try:
            value, grads = loss_and_gradients(params, u, pts, y, loss)
        except NumericError as exc:
            raise DivergenceError(f"training diverged at iteration {it}: {exc}", iteration=it) from exc
        # ``value`` is the loss at the parameters reached after ``it`` updates
        if it % config.log_every == 0 or it == config.iterations:
            row = record(it, value)
            history.append(row)
            if progress is not None:
                progress(row)
        if it in wanted:
            snapshots[it] = params.copy()
    return TrainResult(params, history, initial, snapshots, time.perf_counter() - start)
