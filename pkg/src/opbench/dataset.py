"""Operator-learning datasets: builders, baseline resampling and the ``.opds`` format.

An ``.opds`` container is a directory holding ``manifest.json`` and three
little-endian float64 blobs (``u.f64`` sensor values, ``p.f64`` query
coordinates, ``s.f64`` targets). See ``docs/formats.md``.
"""

from __future__ import annotations

import hashlib
import json
import shutil
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import CapacityError, ChecksumError, DatasetFormatError, NumericError, TruncatedFileError
from .grf import GrfConfig, InputFunctionSet, Kernel, sample_functions
from .io import atomic_replace_dir, sha256_bytes
from .solvers.burgers import BurgersConfig, solve_burgers
from .solvers.diffusion import DiffusionConfig, solve_diffusion_reaction
from .solvers.ode import solve_antiderivative

FORMAT_VERSION = 1


class Layout(str, Enum):
    ALIGNED = "aligned"
    UNALIGNED = "unaligned"


@dataclass
class OperatorDataset:
    inputs: InputFunctionSet
    queries: np.ndarray  # (n_functions, n_queries, query_dim)
    targets: np.ndarray  # (n_functions, n_queries)
    layout: Layout
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.layout = Layout(self.layout)
        if self.queries.ndim != 3 or self.targets.shape != self.queries.shape[:2]:
            raise DatasetFormatError(
                f"queries {self.queries.shape} and targets {self.targets.shape} disagree"
            )
        if self.queries.shape[0] != len(self.inputs):
            raise DatasetFormatError("one query list per input function is required")

    def __len__(self):
        return self.queries.shape[0]

    @property
    def n_queries(self) -> int:
        return self.queries.shape[1]

    @property
    def query_dim(self) -> int:
        return self.queries.shape[2]

    @property
    def problem(self) -> str:
        return self.provenance.get("problem", "")

    def shares_queries(self) -> bool:
        """True when every function is queried at the same points (aligned data)."""
        return bool(len(self) == 0 or np.array_equal(self.queries, np.broadcast_to(self.queries[0], self.queries.shape)))

    def trunk_points(self) -> np.ndarray:
        """``(n_q, d)`` for aligned data, ``(n_f, n_q, d)`` otherwise."""
        if self.layout is Layout.ALIGNED:
            return self.queries[0] if len(self) else self.queries.reshape(-1, self.query_dim)
        return self.queries

    def subset(self, ids) -> "OperatorDataset":
        ids = np.asarray(ids)
        inputs = InputFunctionSet(self.inputs.values[ids], self.inputs.sensors, self.inputs.config, self.inputs.seed)
        return OperatorDataset(inputs, self.queries[ids], self.targets[ids], self.layout, dict(self.provenance))


@dataclass
class BaselineDataset:
    """Point data for one input function, used by the per-function baselines."""

    train_points: np.ndarray  # (n_train, d)
    train_targets: np.ndarray
    test_points: np.ndarray  # (n_test, d)
    test_targets: np.ndarray
    source_function_id: int
    provenance: dict = field(default_factory=dict)

    @property
    def train_pairs(self):
        return list(zip(map(tuple, self.train_points), self.train_targets))

    @property
    def test_pairs(self):
        return list(zip(map(tuple, self.test_points), self.test_targets))


# --------------------------------------------------------------------------
# problems


def derive_seed(seed: int, label: str) -> int:
    """Independent integer seed for one named random stream."""
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


PROBLEMS = ("ode", "diffusion", "burgers")


def default_grf(problem: str) -> GrfConfig:
    if problem == "burgers":
        return GrfConfig(n_sensors=100, domain=(0.0, 10.0), length_scale=1.0, kernel=Kernel.PERIODIC_RBF, amplitude=0.3)
    return GrfConfig(n_sensors=100, domain=(0.0, 1.0), length_scale=0.2, kernel=Kernel.RBF)


def default_solver(problem: str) -> dict:
    if problem == "ode":
        return {"n_steps": 1000, "x_range": [0.0, 1.0]}
    if problem == "diffusion":
        return DiffusionConfig().to_dict()
    if problem == "burgers":
        return BurgersConfig().to_dict()
    raise ValueError(f"unknown problem {problem!r}")


def solve_on_grid(problem: str, values: np.ndarray, sensors: np.ndarray, solver: dict):
    """Run a problem's solver; returns grid nodes ``(n_nodes, d)`` and ``(batch, n_nodes)`` values."""
    values = np.atleast_2d(values)
    if problem == "ode":
        sol = solve_antiderivative(values, solver["n_steps"], sensors, tuple(solver["x_range"]))
        return sol.xs[:, None], sol.s
    if problem == "diffusion":
        grid = solve_diffusion_reaction(values, sensors, DiffusionConfig.from_dict(solver))
    elif problem == "burgers":
        grid = solve_burgers(values, BurgersConfig.from_dict(solver))
    else:
        raise ValueError(f"unknown problem {problem!r}")
    return grid.points(), grid.values.reshape(values.shape[0], -1)


def _build(problem, layout, n_functions, n_queries, grf, solver, fn_seed, query_seed, split, seed):
    inputs = sample_functions(grf, n_functions, fn_seed)
    nodes, field_values = solve_on_grid(problem, inputs.values, inputs.sensors, solver)
    if not np.all(np.isfinite(field_values)):
        raise NumericError(f"{problem} solver produced non-finite values")
    n_nodes = nodes.shape[0]
    if n_queries > n_nodes:
        raise CapacityError(f"{n_queries} queries requested but the grid has {n_nodes} nodes")
    rng = np.random.default_rng(query_seed)
    if layout is Layout.ALIGNED:
        shared = np.sort(rng.choice(n_nodes, n_queries, replace=False))
        idx = np.broadcast_to(shared, (n_functions, n_queries))
    else:
        idx = np.stack([np.sort(rng.choice(n_nodes, n_queries, replace=False)) for _ in range(n_functions)]) \
            if n_functions else np.zeros((0, n_queries), dtype=int)
    queries = nodes[idx]
    targets = np.take_along_axis(field_values, idx, axis=1)
    provenance = {
        "problem": problem,
        "split": split,
        "seed": seed,
        "function_seed": fn_seed,
        "query_seed": query_seed,
        "solver": solver,
    }
    return OperatorDataset(inputs, queries, targets, layout, provenance)


def build_dataset(
    problem: str,
    n_train: int,
    n_test: int,
    n_queries: int = 100,
    seed: int = 0,
    grf: GrfConfig | None = None,
    solver: dict | None = None,
):
    """Train and test splits for one problem.

    Aligned problems (ode, burgers) draw one query set and use it for both
    splits; the diffusion problem draws queries independently per function.
    """
    grf = grf or default_grf(problem)
    solver = {**default_solver(problem), **(solver or {})}
    layout = Layout.UNALIGNED if problem == "diffusion" else Layout.ALIGNED
    query_seed = derive_seed(seed, "queries")
    test_query_seed = query_seed if layout is Layout.ALIGNED else derive_seed(seed, "test-queries")
    train = _build(problem, layout, n_train, n_queries, grf, solver, derive_seed(seed, "train"), query_seed, "train", seed)
    test = _build(problem, layout, n_test, n_queries, grf, solver, derive_seed(seed, "test"), test_query_seed, "test", seed)
    return train, test


def build_ode_dataset(n_train=150, n_test=1000, n_queries=100, seed=0, **kw):
    return build_dataset("ode", n_train, n_test, n_queries, seed, **kw)


def build_diffusion_dataset(n_train=1000, n_test=1000, n_queries=100, seed=0, **kw):
    return build_dataset("diffusion", n_train, n_test, n_queries, seed, **kw)


def build_burgers_dataset(n_train=150, n_test=1000, n_queries=100, seed=0, **kw):
    return build_dataset("burgers", n_train, n_test, n_queries, seed, **kw)


BASELINE_TRAIN_POINTS = {"ode": 50, "diffusion": 100, "burgers": 100}


def function_grid(dataset: OperatorDataset, function_id: int):
    """Re-solve one function of ``dataset`` on the full solver grid."""
    row = dataset.inputs.values[function_id]
    return solve_on_grid(dataset.problem, row, dataset.inputs.sensors, dataset.provenance["solver"])


def resample_for_baseline(dataset: OperatorDataset, function_id: int, n_train_points: int | None = None, seed: int = 0):
    """Training pairs for one function drawn from its solver grid minus its query points."""
    if not 0 <= function_id < len(dataset):
        raise IndexError(f"function {function_id} not in dataset of {len(dataset)}")
    if n_train_points is None:
        n_train_points = BASELINE_TRAIN_POINTS[dataset.problem]
    nodes, values = function_grid(dataset, function_id)
    values = values[0]
    test_points = dataset.queries[function_id]
    taken = np.zeros(nodes.shape[0], dtype=bool)
    taken[_node_index(nodes, test_points)] = True
    free = np.flatnonzero(~taken)
    if n_train_points > free.size:
        raise CapacityError(f"only {free.size} grid points remain after excluding test points")
    rng = np.random.default_rng(derive_seed(seed, f"baseline:{function_id}"))
    pick = np.sort(rng.choice(free, n_train_points, replace=False))
    return BaselineDataset(
        nodes[pick],
        values[pick],
        test_points.copy(),
        dataset.targets[function_id].copy(),
        int(function_id),
        {"problem": dataset.problem, "split": dataset.provenance.get("split"), "seed": seed},
    )


def _node_index(nodes: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Row index in ``nodes`` of every point (points must be grid nodes)."""
    lookup = {tuple(row): i for i, row in enumerate(nodes.tolist())}
    try:
        return np.array([lookup[tuple(p)] for p in points.tolist()], dtype=int)
    except KeyError as exc:
        raise DatasetFormatError(f"query point {exc} is not a solver grid node") from exc


# --------------------------------------------------------------------------
# storage

_BLOBS = ("u", "p", "s")


def _manifest(d: OperatorDataset, blobs: dict[str, bytes], extra: dict | None) -> dict:
    return {
        "format": "opds",
        "version": FORMAT_VERSION,
        "problem": d.problem,
        "layout": d.layout.value,
        "n_functions": len(d),
        "n_sensors": d.inputs.n_sensors,
        "n_queries": d.n_queries,
        "query_dim": d.query_dim,
        "sensors": d.inputs.sensors.tolist(),
        "grf": d.inputs.config.to_dict(),
        "grf_seed": d.inputs.seed,
        "provenance": d.provenance,
        "blobs": {
            name: {"file": f"{name}.f64", "bytes": len(data), "sha256": sha256_bytes(data)}
            for name, data in blobs.items()
        },
        **(extra or {}),
    }


def save_dataset(d: OperatorDataset, path, extra: dict | None = None) -> Path:
    """Write ``d`` as an ``.opds`` directory (temp dir + rename)."""
    path = Path(path)
    blobs = {
        "u": np.ascontiguousarray(d.inputs.values, dtype="<f8").tobytes(),
        "p": np.ascontiguousarray(d.queries, dtype="<f8").tobytes(),
        "s": np.ascontiguousarray(d.targets, dtype="<f8").tobytes(),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(dir=path.parent, prefix=f".{path.name}."))
    try:
        for name, data in blobs.items():
            (tmp / f"{name}.f64").write_bytes(data)
        manifest = _manifest(d, blobs, extra)
        (tmp / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
        return atomic_replace_dir(tmp, path)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def read_manifest(path) -> dict:
    try:
        return json.loads((Path(path) / "manifest.json").read_text())
    except FileNotFoundError as exc:
        raise DatasetFormatError(f"{path} has no manifest.json") from exc
    except ValueError as exc:
        raise DatasetFormatError(f"malformed manifest in {path}: {exc}") from exc


def load_dataset(path) -> OperatorDataset:
    path = Path(path)
    m = read_manifest(path)
    try:
        if m.get("format") != "opds":
            raise DatasetFormatError(f"{path} is not an opds container")
        n_f, n_m, n_q, dim = m["n_functions"], m["n_sensors"], m["n_queries"], m["query_dim"]
        shapes = {"u": (n_f, n_m), "p": (n_f, n_q, dim), "s": (n_f, n_q)}
        arrays = {}
        for name in _BLOBS:
            info = m["blobs"][name]
            data = (path / info["file"]).read_bytes()
            expected = int(np.prod(shapes[name])) * 8
            if len(data) < expected or len(data) < info["bytes"]:
                raise TruncatedFileError(f"{info['file']} truncated: {len(data)} of {expected} bytes")
            if len(data) != expected or info["bytes"] != expected:
                raise DatasetFormatError(f"{info['file']} holds {len(data)} bytes, manifest implies {expected}")
            if sha256_bytes(data) != info["sha256"]:
                raise ChecksumError(f"{info['file']} checksum mismatch")
            arrays[name] = np.frombuffer(data, dtype="<f8").reshape(shapes[name]).astype(np.float64)
        grf = GrfConfig.from_dict(m["grf"])
        inputs = InputFunctionSet(arrays["u"], np.asarray(m["sensors"], dtype=np.float64), grf, m["grf_seed"])
        return OperatorDataset(inputs, arrays["p"], arrays["s"], Layout(m["layout"]), m["provenance"])
    except (KeyError, TypeError) as exc:
        raise DatasetFormatError(f"malformed manifest in {path}: missing {exc}") from exc
    except FileNotFoundError as exc:
        raise DatasetFormatError(f"missing blob in {path}: {exc}") from exc
