import json
import math

import numpy as np

from opbench.metrics import METRICS, evaluate_predictions
from opbench.report import (
    HIST_BINS,
    emit_report,
    read_comparison,
    read_history,
    read_records,
    read_summary,
    write_comparison,
    write_history,
)


def _records(n=37, seed=0):
    rng = np.random.default_rng(seed)
    targets = rng.normal(size=(n, 20))
    return evaluate_predictions(targets + rng.normal(scale=0.5, size=targets.shape), targets)


def test_emit_report_files(tmp_path):
    records, stats = _records()
    paths = emit_report(tmp_path, records, stats, config_hash="h1")
    assert {p.name for p in paths.values()} >= {"metrics.csv", "summary.json", "histograms.json"}
    for m in METRICS:
        svg = (tmp_path / f"hist_{m}.svg").read_text()
        assert "config_hash=h1" in svg and "<svg" in svg
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert lines[0] == "# config_hash=h1"
    assert len(lines) == 2 + len(records)


def test_records_round_trip(tmp_path):
    records, stats = _records()
    emit_report(tmp_path, records, stats)
    assert read_records(tmp_path / "metrics.csv") == records


def test_summary_round_trip(tmp_path):
    records, stats = _records()
    emit_report(tmp_path, records, stats, config_hash="abc", extra={"problem": "ode"})
    assert read_summary(tmp_path / "summary.json") == stats
    doc = json.loads((tmp_path / "summary.json").read_text())
    assert doc["config_hash"] == "abc" and doc["problem"] == "ode"
    for row in ("mean", "std", "min", "max"):
        assert set(doc[row]) == set(METRICS)


def test_histogram_counts_sum(tmp_path):
    records, stats = _records(n=53)
    emit_report(tmp_path, records, stats)
    doc = json.loads((tmp_path / "histograms.json").read_text())
    for m in METRICS:
        assert sum(doc[m]["counts"]) == len(records)
        assert len(doc[m]["counts"]) == HIST_BINS


def test_histogram_skips_undefined(tmp_path):
    targets = np.ones((3, 4))
    targets[0] = [0, 1, 2, 3]
    records, stats = evaluate_predictions(targets + 0.1, targets)
    emit_report(tmp_path, records, stats)
    doc = json.loads((tmp_path / "histograms.json").read_text())
    assert sum(doc["r2"]["counts"]) == 1
    assert sum(doc["mse"]["counts"]) == 3


def test_report_is_deterministic(tmp_path):
    records, stats = _records()
    emit_report(tmp_path / "a", records, stats, config_hash="x")
    emit_report(tmp_path / "b", records, stats, config_hash="x")
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_comparison_round_trip(tmp_path):
    rows = [
        {"test_id": 4, "case": "highest", "model": m, **{k: float(i + j) for j, k in enumerate(METRICS)}}
        for i, m in enumerate(("deeponet", "fcn", "cnn"))
    ]
    path = write_comparison(tmp_path / "c.csv", rows, "hh")
    assert read_comparison(path) == rows
    records, stats = _records()
    emit_report(tmp_path / "r", records, stats, comparisons=rows)
    assert read_comparison(tmp_path / "r" / "comparison.csv") == rows


def test_history_round_trip(tmp_path):
    rows = [{"iteration": 0, "train_loss": 1.5, "test_loss": 2.0, "test_metric": 0.9}, {"iteration": 100, "train_loss": 0.5}]
    back = read_history(write_history(tmp_path / "h.csv", rows, "z"))
    assert back[0] == rows[0]
    assert back[1]["iteration"] == 100 and math.isnan(back[1]["test_metric"])
