"""Report files: per-function CSV, summary JSON, metric histograms, comparison tables."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .io import atomic_write_text
from .metrics import METRICS, MetricRecord, SummaryStats

HIST_BINS = 30

_LABELS = {"r2": "R²", "mse": "MSE", "rmse": "RMSE", "mae": "MAE", "rmse_mae_ratio": "RMSE/MAE"}


def _csv_text(header: list[str], rows: list[list], config_hash: str | None) -> str:
    buf = io.StringIO()
    if config_hash:
        buf.write(f"# config_hash={config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v: float) -> str:
    return repr(float(v))


def write_records(path, records: list[MetricRecord], config_hash: str | None = None) -> Path:
    rows = [[r.function_id, *(_fmt(getattr(r, k)) for k in METRICS), r.note] for r in records]
    return atomic_write_text(Path(path), _csv_text(["function_id", *METRICS, "note"], rows, config_hash))


def _read_csv(path) -> list[dict]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def read_records(path) -> list[MetricRecord]:
    return [
        MetricRecord(int(row["function_id"]), *(float(row[k]) for k in METRICS), row.get("note", ""))
        for row in _read_csv(path)
    ]


def write_summary(path, stats: SummaryStats, extra: dict | None = None) -> Path:
    doc = {**stats.to_dict(), **(extra or {})}
    return atomic_write_text(Path(path), json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_summary(path) -> SummaryStats:
    d = json.loads(Path(path).read_text())
    return SummaryStats.from_dict({k: d[k] for k in SummaryStats.__dataclass_fields__})


def histogram(values, bins: int = HIST_BINS):
    v = np.asarray(values, dtype=np.float64)
    v = v[np.isfinite(v)]
    if v.size and v.max() - v.min() <= 1e-9 * max(1.0, abs(v.max())):
        # (near-)constant values: centre one unit-wide range on them
        return np.histogram(v, bins=bins, range=(v.min() - 0.5, v.max() + 0.5))
    return np.histogram(v, bins=bins)


def _svg_histogram(path: Path, metric: str, counts, edges, config_hash: str | None):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with plt.rc_context({"svg.hashsalt": "opbench", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        ax.stairs(counts, edges, fill=True, alpha=0.8)
        ax.set_xlabel(_LABELS[metric])
        ax.set_ylabel("test functions")
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    text = buf.getvalue()
    if config_hash:
        text = text.replace("<svg ", f"<!-- config_hash={config_hash} -->\n<svg ", 1)
    atomic_write_text(path, text)


def write_comparison(path, rows: list[dict], config_hash: str | None = None) -> Path:
    header = ["test_id", "case", "model", *METRICS]
    body = [[r["test_id"], r["case"], r["model"], *(_fmt(r[k]) for k in METRICS)] for r in rows]
    return atomic_write_text(Path(path), _csv_text(header, body, config_hash))


def read_comparison(path) -> list[dict]:
    out = []
    for row in _read_csv(path):
        rec = {"test_id": int(row["test_id"]), "case": row["case"], "model": row["model"]}
        rec.update({k: float(row[k]) for k in METRICS})
        out.append(rec)
    return out


def emit_report(
    out_dir,
    records: list[MetricRecord],
    stats: SummaryStats,
    comparisons: list[dict] | None = None,
    config_hash: str | None = None,
    extra: dict | None = None,
) -> dict[str, Path]:
    """Write ``metrics.csv``, ``summary.json``, ``hist_<metric>.svg``,
    ``histograms.json`` and, given comparison rows, ``comparison.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "metrics": write_records(out / "metrics.csv", records, config_hash),
        "summary": write_summary(out / "summary.json", stats, {"config_hash": config_hash, **(extra or {})}),
    }
    hist_doc = {"config_hash": config_hash} if config_hash else {}
    for metric in METRICS:
        counts, edges = histogram([getattr(r, metric) for r in records])
        p = out / f"hist_{metric}.svg"
        _svg_histogram(p, metric, counts, edges, config_hash)
        paths[f"hist_{metric}"] = p
        hist_doc[metric] = {"counts": counts.tolist(), "edges": edges.tolist()}
    paths["histograms"] = atomic_write_text(out / "histograms.json", json.dumps(hist_doc, indent=1) + "\n")
    if comparisons:
        paths["comparison"] = write_comparison(out / "comparison.csv", comparisons, config_hash)
    return paths


def write_history(path, rows: list[dict], config_hash: str | None = None) -> Path:
    keys = ["iteration", "train_loss", "test_loss", "test_metric"]
    body = [[r.get(k, math.nan) if k == "iteration" else _fmt(r.get(k, math.nan)) for k in keys] for r in rows]
    return atomic_write_text(Path(path), _csv_text(keys, body, config_hash))


def read_history(path) -> list[dict]:
    return [{k: (int(v) if k == "iteration" else float(v)) for k, v in row.items()} for row in _read_csv(path)]


def write_table(path, header: list[str], rows: list[list], config_hash: str | None = None) -> Path:
    return atomic_write_text(Path(path), _csv_text(header, rows, config_hash))


def read_table(path) -> list[dict]:
    return _read_csv(path)


def residual_map_svg(path, grid_x, grid_t, residuals, worst, config_hash: str | None = None) -> Path:
    """Squared-residual heat map over (x, t) with the worst point marked."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with plt.rc_context({"svg.hashsalt": "opbench", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 3.6))
        mesh = ax.pcolormesh(grid_x, grid_t, residuals.T, shading="auto")
        fig.colorbar(mesh, ax=ax, label="squared residual")
        ax.plot([worst[0]], [worst[1]], "rx")
        ax.set_xlabel("x")
        ax.set_ylabel("t")
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    text = buf.getvalue()
    if config_hash:
        text = text.replace("<svg ", f"<!-- config_hash={config_hash} -->\n<svg ", 1)
    return atomic_write_text(Path(path), text)
