import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opbench.errors import DegenerateError, ShapeError
from opbench.metrics import (
    METRICS,
    erosion_assessment,
    erosion_velocity,
    evaluate_model,
    evaluate_predictions,
    mae,
    metric_record,
    mse,
    r2,
    rmse_mae_ratio,
    summarize,
)
from opbench.solvers import Grid2D


def test_r2_perfect_and_mean_predictor():
    t = np.array([0.3, -1.0, 2.5, 4.0])
    assert r2(t, t) == 1.0
    assert r2(np.full(4, t.mean()), t) == pytest.approx(0.0, abs=1e-15)


def test_r2_hand_example():
    assert r2([0, 1, 1], [0, 1, 2]) == 0.5


def test_r2_shift_invariant():
    rng = np.random.default_rng(0)
    t, p = rng.normal(size=50), rng.normal(size=50)
    assert r2(p + 7.0, t + 7.0) == pytest.approx(r2(p, t), abs=1e-12)


def test_r2_degenerate():
    with pytest.raises(DegenerateError):
        r2([1.0, 2.0], [3.0, 3.0])
    with pytest.raises(DegenerateError):
        r2([1.0], [2.0])


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        mse([1.0, 2.0], [1.0])


def test_ratio_uniform_residuals():
    t = np.zeros(8)
    p = np.array([1, -1, 1, -1, 1, 1, -1, -1], dtype=float) * 0.3
    assert rmse_mae_ratio(p, t) == pytest.approx(1.0, abs=1e-15)


def test_ratio_single_spike():
    # residuals [3, 0, ..., 0] with n = 9: rmse 1, mae 1/3
    p = np.zeros(9)
    p[0] = 3.0
    t = np.zeros(9)
    assert math.sqrt(mse(p, t)) == pytest.approx(1.0, abs=1e-15)
    assert mae(p, t) == pytest.approx(1 / 3, abs=1e-15)
    assert rmse_mae_ratio(p, t) == pytest.approx(3.0, abs=1e-14)


def test_ratio_zero_mae():
    with pytest.raises(DegenerateError):
        rmse_mae_ratio([1.0, 2.0], [1.0, 2.0])


def test_ratio_bounds_on_random_vectors():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        n = int(rng.integers(1, 200))
        res = rng.standard_cauchy(n) if rng.random() < 0.5 else rng.normal(size=n)
        ratio = rmse_mae_ratio(res, np.zeros(n))
        assert 1.0 - 1e-12 <= ratio <= math.sqrt(n) * (1 + 1e-12)


@settings(max_examples=200, deadline=None)
# tiny magnitudes underflow when squared, so they are snapped to zero
@given(
    st.lists(st.floats(-1e3, 1e3).map(lambda x: 0.0 if abs(x) < 1e-100 else x), min_size=1, max_size=50).filter(
        lambda v: any(x != 0 for x in v)
    )
)
def test_ratio_bounds_property(res):
    ratio = rmse_mae_ratio(res, np.zeros(len(res)))
    assert 1.0 - 1e-12 <= ratio <= math.sqrt(len(res)) * (1 + 1e-12)


def test_gaussian_ratio():
    res = np.random.default_rng(2).normal(size=100_000)
    ratio = rmse_mae_ratio(res, np.zeros_like(res))
    assert abs(ratio - 1.253) <= 0.02
    assert ratio == pytest.approx(math.sqrt(math.pi / 2), abs=0.02)


def test_record_invariants():
    rng = np.random.default_rng(3)
    for i in range(50):
        t, p = rng.normal(size=30), rng.normal(size=30)
        rec = metric_record(i, p, t)
        assert rec.rmse == pytest.approx(math.sqrt(rec.mse), abs=0)
        assert rec.rmse >= rec.mae >= 0
        assert rec.r2 <= 1
        assert rec.rmse_mae_ratio >= 1


def test_constant_target_flagged():
    rec = metric_record(4, [1.0, 2.0, 3.0], [2.0, 2.0, 2.0])
    assert math.isnan(rec.r2)
    assert "r2 undefined" in rec.note
    assert rec.mse == pytest.approx(2 / 3)
    exact = metric_record(5, [2.0, 2.0], [2.0, 2.0])
    assert exact.mse == 0 and math.isnan(exact.rmse_mae_ratio)


def test_summary_recomputed():
    rng = np.random.default_rng(4)
    targets = rng.normal(size=(40, 25))
    preds = targets + rng.normal(scale=0.3, size=targets.shape)
    records, stats = evaluate_predictions(preds, targets)
    for k in METRICS:
        vals = [getattr(r, k) for r in records]
        assert stats.mean[k] == pytest.approx(sum(vals) / len(vals), rel=1e-13)
        assert stats.min[k] <= stats.mean[k] <= stats.max[k]
        assert stats.min[k] == min(vals) and stats.max[k] == max(vals)
    r2s = [r.r2 for r in records]
    assert records[stats.argmax_id].r2 == max(r2s)
    assert records[stats.argmin_id].r2 == min(r2s)
    assert stats.count == 40


def test_summary_skips_undefined():
    recs = [metric_record(0, [0.0, 1.0], [0.0, 2.0]), metric_record(1, [1.0, 1.0], [2.0, 2.0])]
    s = summarize(recs)
    assert s.mean["r2"] == recs[0].r2
    assert s.argmax_id == s.argmin_id == 0


def test_summarize_empty():
    with pytest.raises(DegenerateError):
        summarize([])


class _Data:
    def __init__(self, targets):
        self.targets = targets
        self.inputs = type("I", (), {"values": np.zeros((len(targets), 3))})()

    def __len__(self):
        return len(self.targets)

    def trunk_points(self):
        return np.linspace(0, 1, self.targets.shape[1])[:, None]


def test_evaluate_exact_predictor():
    targets = np.random.default_rng(5).normal(size=(6, 10))
    records, stats = evaluate_model(lambda u, p: targets, _Data(targets))
    assert all(r.r2 == 1.0 and r.mse == 0.0 for r in records)
    assert stats.mean["r2"] == 1.0


def test_evaluate_empty():
    with pytest.raises(DegenerateError):
        evaluate_model(lambda u, p: None, _Data(np.zeros((0, 5))))


# -- erosion -------------------------------------------------------------------------


def test_erosion_velocity():
    ve = erosion_velocity(240, 1000)
    assert ve == pytest.approx(7.589, abs=1e-3)
    assert round(ve, 1) == 7.6


def _grid(values):
    return Grid2D(np.linspace(0, 10, values.shape[0]), np.linspace(0, 10, values.shape[1]), values)


def test_erosion_identical_grids():
    v = np.random.default_rng(6).normal(size=(5, 4))
    a = erosion_assessment(_grid(v), _grid(v.copy()))
    assert a.risk_ratio == 1.0
    assert a.erosion_velocity > 0


def test_erosion_worst_point():
    sim = np.full((4, 3), 1.0)
    pred = sim.copy()
    pred[2, 1] = 1.5
    pred[0, 0] = 1.1
    a = erosion_assessment(_grid(sim), _grid(pred))
    g = _grid(sim)
    assert a.worst_point == (g.x[2], g.t[1])
    assert a.speed_true_at_worst == 1.0 and a.speed_pred_at_worst == 1.5
    assert a.risk_ratio == 1.5
    assert not a.exceeds_true and not a.exceeds_pred


def test_erosion_grids_must_match():
    with pytest.raises(ShapeError):
        erosion_assessment(_grid(np.zeros((3, 3))), _grid(np.zeros((3, 4))))


def test_summary_all_undefined_r2():
    s = summarize([metric_record(3, [1.0, 1.0], [2.0, 2.0])])
    assert math.isnan(s.mean["r2"])
    assert s.argmax_id == s.argmin_id == -1
