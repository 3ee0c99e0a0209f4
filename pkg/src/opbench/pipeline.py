"""The experiment steps behind the CLI subcommands.

Every step reads and writes files under one output directory:

    data/train.opds, data/test.opds
    model/deeponet.ckpt, model/history.csv
    eval/metrics.csv, eval/summary.json, eval/hist_<metric>.svg, eval/histograms.json
    sweep/trunk_width.csv, sweep/iterations.csv
    compare/comparison.csv, compare/<model>_<id>.ckpt
    report/...  (eval files re-emitted with the comparison; erosion analysis for burgers)
"""

from __future__ import annotations

import json
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import baselines
from .config import ExperimentConfig
from .dataset import (
    BASELINE_TRAIN_POINTS,
    OperatorDataset,
    build_dataset,
    function_grid,
    load_dataset,
    read_manifest,
    resample_for_baseline,
    save_dataset,
)
from .deeponet import (
    DeepONetArch,
    DeepONetParams,
    TrainResult,
    loss_mean_l2_relative,
    predict,
    predict_dataset,
    train_deeponet,
)
from .errors import DivergenceError
from .io import atomic_write_bytes, atomic_write_text
from .metrics import METRICS, erosion_assessment, evaluate_predictions, metric_record, squared_residuals
from .report import (
    emit_report,
    read_comparison,
    read_records,
    read_summary,
    residual_map_svg,
    write_comparison,
    write_history,
    write_table,
)
from .solvers.grid import Grid2D

log = logging.getLogger("opbench")


def paths(out) -> dict[str, Path]:
    out = Path(out)
    return {
        "train": out / "data" / "train.opds",
        "test": out / "data" / "test.opds",
        "checkpoint": out / "model" / "deeponet.ckpt",
        "history": out / "model" / "history.csv",
        "eval": out / "eval",
        "sweep": out / "sweep",
        "compare": out / "compare",
        "report": out / "report",
        "baselines": out / "baselines",
    }


# --------------------------------------------------------------------------
# generate


def generate(cfg: ExperimentConfig, out, force: bool = False) -> tuple[Path, Path]:
    p = paths(out)
    h = cfg.data_hash()
    if not force and p["train"].exists() and p["test"].exists():
        if all(read_manifest(p[k]).get("config_hash") == h for k in ("train", "test")):
            log.info("datasets for %s already present (config %s)", cfg.problem, h)
            return p["train"], p["test"]
    log.info("generating %s data: %d train / %d test functions", cfg.problem, cfg.n_train, cfg.data.n_test)
    train, test = build_dataset(
        cfg.problem, cfg.n_train, cfg.data.n_test, cfg.data.n_queries, cfg.seed, grf=cfg.data.grf, solver=cfg.solver
    )
    extra = {"config_hash": h}
    save_dataset(train, p["train"], extra)
    save_dataset(test, p["test"], extra)
    return p["train"], p["test"]


def load_splits(out) -> tuple[OperatorDataset, OperatorDataset]:
    p = paths(out)
    return load_dataset(p["train"]), load_dataset(p["test"])


# --------------------------------------------------------------------------
# train / evaluate


def _checkpoint_meta(cfg: ExperimentConfig, arch: DeepONetArch, iterations: int) -> dict:
    return {
        "config_hash": cfg.hash(),
        "problem": cfg.problem,
        "seed": cfg.seed,
        "step_count": iterations,
        "arch": arch.to_dict(),
    }


def train(cfg: ExperimentConfig, out, arch: DeepONetArch | None = None, snapshot_at=()) -> TrainResult:
    """Train the operator network; writes the checkpoint and the history CSV."""
    p = paths(out)
    arch = arch or cfg.arch
    train_set, test_set = load_splits(out)
    rows: list[dict] = []
    tcfg = cfg.train_config()
    log.info("training deeponet on %s for %d iterations", cfg.problem, tcfg.iterations)
    try:
        result = train_deeponet(train_set, arch, tcfg, test_set, snapshot_at=snapshot_at, progress=rows.append)
    except DivergenceError:
        write_history(p["history"], rows, cfg.hash())
        raise
    atomic_write_bytes(p["checkpoint"], result.params.to_bytes(_checkpoint_meta(cfg, arch, tcfg.iterations)))
    write_history(p["history"], result.history, cfg.hash())
    return result


def load_model(out) -> tuple[DeepONetParams, dict]:
    return DeepONetParams.from_bytes(paths(out)["checkpoint"].read_bytes())


def score(params: DeepONetParams, test_set: OperatorDataset):
    return evaluate_predictions(predict_dataset(params, test_set), test_set.targets)


def evaluate(cfg: ExperimentConfig, out, params: DeepONetParams | None = None) -> dict[str, Path]:
    p = paths(out)
    if params is None:
        params, meta = load_model(out)
        model_hash = meta.get("config_hash")
    else:
        model_hash = cfg.hash()
    test_set = load_dataset(p["test"])
    records, stats = score(params, test_set)
    log.info("mean R2 %.4f over %d test functions", stats.mean["r2"], stats.count)
    extra = {"problem": cfg.problem, "model_config_hash": model_hash}
    return emit_report(p["eval"], records, stats, config_hash=cfg.hash(), extra=extra)


# --------------------------------------------------------------------------
# sweeps


def sweep_widths(cfg: ExperimentConfig, out) -> Path:
    """Train one model per trunk hidden width and tabulate mean test metrics."""
    p = paths(out)
    train_set, test_set = load_splits(out)
    rows = []
    for width in cfg.sweep_widths:
        trunk = [cfg.arch.trunk[0], width, *cfg.arch.trunk[2:]]
        arch = replace(cfg.arch, trunk=trunk)
        log.info("trunk width %d", width)
        result = train_deeponet(train_set, arch, cfg.train_config(), test_set)
        _, stats = score(result.params, test_set)
        rows.append([width, *(repr(stats.mean[k]) for k in METRICS), repr(result.history[-1].get("test_metric", np.nan))])
    header = ["trunk_width", *METRICS, "test_metric"]
    return write_table(p["sweep"] / "trunk_width.csv", header, rows, cfg.hash())


def sweep_iterations(cfg: ExperimentConfig, out, iterations=None) -> Path:
    """Train once to the largest count, scoring snapshots at every listed iteration."""
    p = paths(out)
    iterations = sorted(iterations or cfg.sweep_iterations)
    if not iterations:
        raise ValueError("no iteration counts to sweep")
    train_set, test_set = load_splits(out)
    tcfg = cfg.train_config(iterations[-1])
    result = train_deeponet(train_set, cfg.arch, tcfg, test_set, snapshot_at=iterations)
    rows = []
    for it in iterations:
        params = result.params if it == iterations[-1] else result.snapshots[it]
        pred = predict_dataset(params, test_set)
        _, stats = evaluate_predictions(pred, test_set.targets)
        metric = loss_mean_l2_relative(pred, test_set.targets)
        rows.append([it, repr(metric), *(repr(stats.mean[k]) for k in METRICS)])
    write_history(p["sweep"] / "iterations_history.csv", result.history, cfg.hash())
    return write_table(p["sweep"] / "iterations.csv", ["iteration", "test_metric", *METRICS], rows, cfg.hash())


# --------------------------------------------------------------------------
# baselines and comparison


def baseline_config(cfg: ExperimentConfig, kind: str) -> baselines.BaselineTrainConfig:
    b = cfg.baseline
    return baselines.BaselineTrainConfig(
        epochs=b.epochs, lr=b.lr, batch_size=b.fcn_batch if kind == "fcn" else b.cnn_batch, seed=cfg.seed
    )


def train_baseline(cfg: ExperimentConfig, out, kind: str, function_id: int, dest: Path | None = None):
    """Fit one baseline to one test function; returns the result, its data and the checkpoint path."""
    test_set = load_dataset(paths(out)["test"])
    data = resample_for_baseline(test_set, function_id, BASELINE_TRAIN_POINTS[cfg.problem], cfg.seed)
    result = baselines.train_baseline(data, kind, baseline_config(cfg, kind))
    dest = dest or paths(out)["baselines"]
    ckpt = dest / f"{kind}_{function_id}.ckpt"
    meta = {"config_hash": cfg.hash(), "problem": cfg.problem, "function_id": function_id, "seed": cfg.seed,
            "step_count": cfg.baseline.epochs}
    atomic_write_bytes(ckpt, result.model.to_bytes(meta))
    hist = "\n".join(["epoch,train_loss", *(f"{i + 1},{v!r}" for i, v in enumerate(result.history))]) + "\n"
    atomic_write_text(dest / f"{kind}_{function_id}_history.csv", f"# config_hash={cfg.hash()}\n" + hist)
    return result, data, ckpt


def compare(cfg: ExperimentConfig, out) -> Path:
    """DeepONet vs FCN vs CNN on the test functions with the highest and lowest R^2."""
    p = paths(out)
    records = {r.function_id: r for r in read_records(p["eval"] / "metrics.csv")}
    stats = read_summary(p["eval"] / "summary.json")
    rows = []
    for case, fid in (("highest", stats.argmax_id), ("lowest", stats.argmin_id)):
        rec = records[fid]
        rows.append({"test_id": fid, "case": case, "model": "deeponet", **{k: getattr(rec, k) for k in METRICS}})
        for kind in ("fcn", "cnn"):
            log.info("training %s on test function %d", kind, fid)
            result, data, _ = train_baseline(cfg, out, kind, fid, p["compare"])
            pred = baselines.predict(result.model, data.test_points)
            brec = metric_record(fid, pred, data.test_targets)
            rows.append({"test_id": fid, "case": case, "model": kind, **{k: getattr(brec, k) for k in METRICS}})
    return write_comparison(p["compare"] / "comparison.csv", rows, cfg.hash())


# --------------------------------------------------------------------------
# report


def prediction_grid(params: DeepONetParams, test_set: OperatorDataset, function_id: int):
    """Simulated and predicted fields of one test function on the full solver grid."""
    nodes, values = function_grid(test_set, function_id)
    pred = predict(params, test_set.inputs.values[function_id : function_id + 1], nodes)[0]
    xs = np.unique(nodes[:, 0])
    ts = np.unique(nodes[:, 1])
    shape = (xs.size, ts.size)
    return Grid2D(xs, ts, values[0].reshape(shape)), Grid2D(xs, ts, pred.reshape(shape))


def report(cfg: ExperimentConfig, out) -> dict[str, Path]:
    p = paths(out)
    records = read_records(p["eval"] / "metrics.csv")
    stats = read_summary(p["eval"] / "summary.json")
    comp_path = p["compare"] / "comparison.csv"
    comparisons = read_comparison(comp_path) if comp_path.exists() else None
    written = emit_report(p["report"], records, stats, comparisons, cfg.hash(), {"problem": cfg.problem})
    if cfg.problem == "burgers" and p["checkpoint"].exists():
        params, _ = load_model(out)
        test_set = load_dataset(p["test"])
        sim, pred = prediction_grid(params, test_set, stats.argmin_id)
        ero = erosion_assessment(sim, pred)
        doc = {"function_id": stats.argmin_id, "config_hash": cfg.hash(), **ero.to_dict()}
        written["erosion"] = atomic_write_text(p["report"] / "erosion.json", json.dumps(doc, indent=2) + "\n")
        written["residual_map"] = residual_map_svg(
            p["report"] / "residual_map.svg", sim.x, sim.t, squared_residuals(sim, pred), ero.worst_point, cfg.hash()
        )
    return written
