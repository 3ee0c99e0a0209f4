"""Experiment configuration: INI files with nested sections, plus per-problem defaults."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .dataset import PROBLEMS, default_grf
from .deeponet import DeepONetArch, LossKind, TrainConfig
from .grf import GrfConfig
from .io import config_hash

_ITERATIONS = {"ode": 10_000, "diffusion": 10_000, "burgers": 50_000}
_N_TRAIN = {"ode": 150, "diffusion": 1_000, "burgers": 150}
_FULL_N_TRAIN = {"ode": 150, "diffusion": 10_000, "burgers": 150}


@dataclass
class DataConfig:
    n_train: int = 150
    n_test: int = 1000
    n_queries: int = 100
    full_n_train: int = 150
    grf: GrfConfig = field(default_factory=GrfConfig)


@dataclass
class BaselineConfig:
    epochs: int = 2000
    lr: float = 1e-3
    fcn_batch: int = 10
    cnn_batch: int = 20


@dataclass
class ExperimentConfig:
    problem: str = "ode"
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    solver: dict = field(default_factory=dict)  # overrides of the problem's solver defaults
    arch: DeepONetArch = field(default_factory=DeepONetArch)
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep_widths: list[int] = field(default_factory=lambda: [20, 40, 60, 80])
    sweep_iterations: list[int] = field(default_factory=list)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    full: bool = False

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")

    @property
    def n_train(self) -> int:
        return self.data.full_n_train if self.full else self.data.n_train

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "seed": self.seed,
            "full": self.full,
            "data": {
                "n_train": self.n_train,
                "n_test": self.data.n_test,
                "n_queries": self.data.n_queries,
                "grf": self.data.grf.to_dict(),
            },
            "solver": dict(sorted(self.solver.items())),
            "arch": self.arch.to_dict(),
            "train": {**self.train.to_dict(), "seed": self.seed},
            "sweep": {"trunk_widths": self.sweep_widths, "iterations": self.sweep_iterations},
            "baseline": vars(self.baseline).copy(),
        }

    def data_dict(self) -> dict:
        d = self.to_dict()
        return {k: d[k] for k in ("problem", "seed", "full", "data", "solver")}

    def hash(self) -> str:
        return config_hash(self.to_dict())

    def data_hash(self) -> str:
        return config_hash(self.data_dict())

    def train_config(self, iterations: int | None = None) -> TrainConfig:
        return replace(self.train, seed=self.seed, iterations=self.train.iterations if iterations is None else iterations)


def default_config(problem: str) -> ExperimentConfig:
    if problem not in PROBLEMS:
        raise ValueError(f"problem must be one of {PROBLEMS}, got {problem!r}")
    query_dim = 1 if problem == "ode" else 2
    return ExperimentConfig(
        problem=problem,
        data=DataConfig(
            n_train=_N_TRAIN[problem],
            full_n_train=_FULL_N_TRAIN[problem],
            grf=default_grf(problem),
        ),
        arch=DeepONetArch(branch=[100, 40, 40], trunk=[query_dim, 40, 40]),
        train=TrainConfig(iterations=_ITERATIONS[problem]),
    )


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def _scalar(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    return text


def parse_config(text: str, problem: str | None = None) -> ExperimentConfig:
    """Parse INI text; ``problem`` is used when the file does not name one."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read_string(text)
    problem = cp.get("experiment", "problem", fallback=problem or "ode")
    cfg = default_config(problem)
    cfg.seed = cp.getint("experiment", "seed", fallback=cfg.seed)
    if cp.has_section("data"):
        s = cp["data"]
        grf = cfg.data.grf
        grf = GrfConfig(
            n_sensors=s.getint("n_sensors", grf.n_sensors),
            domain=tuple(float(v) for v in s.get("domain", f"{grf.domain[0]} {grf.domain[1]}").replace(",", " ").split()),
            length_scale=s.getfloat("length_scale", grf.length_scale),
            kernel=s.get("kernel", grf.kernel.value),
            jitter=s.getfloat("jitter", grf.jitter),
            amplitude=s.getfloat("amplitude", grf.amplitude),
        )
        cfg.data = DataConfig(
            n_train=s.getint("n_train", cfg.data.n_train),
            n_test=s.getint("n_test", cfg.data.n_test),
            n_queries=s.getint("n_queries", cfg.data.n_queries),
            full_n_train=s.getint("full_n_train", cfg.data.full_n_train),
            grf=grf,
        )
    if cp.has_section("solver"):
        cfg.solver = {k: _scalar(v) for k, v in cp["solver"].items()}
    if cp.has_section("model"):
        s = cp["model"]
        a = cfg.arch
        cfg.arch = DeepONetArch(
            branch=_ints(s.get("branch", " ".join(map(str, a.branch)))),
            trunk=_ints(s.get("trunk", " ".join(map(str, a.trunk)))),
            activation=s.get("activation", a.activation.value),
            trunk_output_activation=s.get("trunk_output_activation", a.trunk_output_activation.value),
            stacked=s.getboolean("stacked", a.stacked),
            output_bias=s.getboolean("output_bias", a.output_bias),
        )
    if cp.has_section("train"):
        s = cp["train"]
        t = cfg.train
        cfg.train = TrainConfig(
            iterations=s.getint("iterations", t.iterations),
            lr=s.getfloat("lr", t.lr),
            loss=LossKind(s.get("loss", t.loss.value)),
            log_every=s.getint("log_every", t.log_every),
        )
    if cp.has_section("sweep"):
        s = cp["sweep"]
        cfg.sweep_widths = _ints(s.get("trunk_widths", " ".join(map(str, cfg.sweep_widths))))
        cfg.sweep_iterations = _ints(s.get("iterations", " ".join(map(str, cfg.sweep_iterations))))
    if cp.has_section("baseline"):
        s = cp["baseline"]
        b = cfg.baseline
        cfg.baseline = BaselineConfig(
            epochs=s.getint("epochs", b.epochs),
            lr=s.getfloat("lr", b.lr),
            fcn_batch=s.getint("fcn_batch", b.fcn_batch),
            cnn_batch=s.getint("cnn_batch", b.cnn_batch),
        )
    return cfg


def load_config(path, problem: str | None = None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), problem)
