"""Per-function regression metrics, summary tables and the erosion post-analysis."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateError, ShapeError
from .solvers.grid import Grid2D

METRICS = ("r2", "mse", "rmse", "mae", "rmse_mae_ratio")


def _pair(pred, target):
    p = np.asarray(pred, dtype=np.float64).ravel()
    t = np.asarray(target, dtype=np.float64).ravel()
    if p.shape != t.shape:
        raise ShapeError(f"prediction {p.shape} and target {t.shape} differ")
    return p, t


def r2(pred, target) -> float:
    """Coefficient of determination ``1 - SS_res / SS_tot``."""
    p, t = _pair(pred, target)
    if p.size < 2:
        raise DegenerateError("R^2 needs at least two points")
    ss_tot = np.sum((t - t.mean()) ** 2)
    if ss_tot == 0.0:
        raise DegenerateError("R^2 undefined for a constant target")
    return float(1.0 - np.sum((t - p) ** 2) / ss_tot)


def mse(pred, target) -> float:
    p, t = _pair(pred, target)
    return float(np.mean((p - t) ** 2))


def mae(pred, target) -> float:
    p, t = _pair(pred, target)
    return float(np.mean(np.abs(p - t)))


def rmse_mae_ratio(pred, target) -> float:
    p, t = _pair(pred, target)
    m = mae(p, t)
    if m == 0.0:
        raise DegenerateError("RMSE/MAE undefined when MAE is zero")
    return math.sqrt(mse(p, t)) / m


@dataclass
class MetricRecord:
    function_id: int
    r2: float
    mse: float
    rmse: float
    mae: float
    rmse_mae_ratio: float
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def metric_record(function_id: int, pred, target) -> MetricRecord:
    """All five metrics; undefined ones become NaN and are named in ``note``."""
    p, t = _pair(pred, target)
    m = mse(p, t)
    notes = []
    try:
        r = r2(p, t)
    except DegenerateError:
        r, _ = math.nan, notes.append("r2 undefined")
    a = mae(p, t)
    ratio = math.sqrt(m) / a if a > 0 else math.nan
    if a == 0:
        notes.append("ratio undefined")
    return MetricRecord(int(function_id), r, m, math.sqrt(m), a, ratio, "; ".join(notes))


@dataclass
class SummaryStats:
    mean: dict[str, float]
    std: dict[str, float]
    min: dict[str, float]
    max: dict[str, float]
    argmax_id: int  # highest R^2
    argmin_id: int  # lowest R^2
    count: int

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SummaryStats":
        return cls(**d)


def summarize(records: list[MetricRecord]) -> SummaryStats:
    if not records:
        raise DegenerateError("no records to summarize")
    table = {k: np.array([getattr(r, k) for r in records], dtype=np.float64) for k in METRICS}
    # population std, NaNs (undefined metrics) ignored; an all-NaN column stays NaN
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        stats = {
            name: {k: float(fn(v)) for k, v in table.items()}
            for name, fn in (("mean", np.nanmean), ("std", np.nanstd), ("min", np.nanmin), ("max", np.nanmax))
        }
    r2s = table["r2"]
    defined = bool(np.any(np.isfinite(r2s)))  # -1 ids when every R^2 is undefined
    ids = [r.function_id for r in records]
    return SummaryStats(
        stats["mean"],
        stats["std"],
        stats["min"],
        stats["max"],
        ids[int(np.nanargmax(r2s))] if defined else -1,
        ids[int(np.nanargmin(r2s))] if defined else -1,
        len(records),
    )


def evaluate_predictions(preds: np.ndarray, targets: np.ndarray, ids=None):
    ids = range(len(targets)) if ids is None else ids
    records = [metric_record(i, p, t) for i, p, t in zip(ids, preds, targets)]
    return records, summarize(records)


def evaluate_model(predict_fn: Callable, dataset) -> tuple[list[MetricRecord], SummaryStats]:
    """Score ``predict_fn(u_values, points) -> (n_f, n_q)`` on every function of ``dataset``."""
    if len(dataset) == 0:
        raise DegenerateError("empty dataset")
    preds = np.asarray(predict_fn(dataset.inputs.values, dataset.trunk_points()), dtype=np.float64)
    return evaluate_predictions(preds, dataset.targets)


# --------------------------------------------------------------------------
# erosion


@dataclass
class ErosionAssessment:
    erosion_velocity: float  # m/s
    max_speed_true: float
    max_speed_pred: float
    worst_point: tuple[float, float]  # (x, t) of the largest squared residual
    speed_true_at_worst: float
    speed_pred_at_worst: float
    risk_ratio: float
    exceeds_true: bool
    exceeds_pred: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        d["worst_point"] = list(self.worst_point)
        return d


def erosion_velocity(c: float = 240.0, rho: float = 1000.0) -> float:
    """Threshold speed ``C / sqrt(rho)``."""
    return c / math.sqrt(rho)


def squared_residuals(sim: Grid2D, pred: Grid2D) -> np.ndarray:
    if sim.values.shape != pred.values.shape:
        raise ShapeError(f"grids differ: {sim.values.shape} vs {pred.values.shape}")
    return (pred.values - sim.values) ** 2


def erosion_assessment(sim: Grid2D, pred: Grid2D, c: float = 240.0, rho: float = 1000.0) -> ErosionAssessment:
    res = squared_residuals(sim, pred)
    i, j = np.unravel_index(int(np.argmax(res)), res.shape)
    true_speed = abs(float(sim.values[i, j]))
    pred_speed = abs(float(pred.values[i, j]))
    ve = erosion_velocity(c, rho)
    max_true = float(np.max(np.abs(sim.values)))
    max_pred = float(np.max(np.abs(pred.values)))
    ratio = pred_speed / true_speed if true_speed > 0 else (1.0 if pred_speed == 0 else math.inf)
    return ErosionAssessment(
        ve,
        max_true,
        max_pred,
        (float(sim.x[i]), float(sim.t[j])),
        true_speed,
        pred_speed,
        ratio,
        max_true > ve,
        max_pred > ve,
    )
