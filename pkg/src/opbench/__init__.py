"""Operator-learning benchmark: branch/trunk networks trained on ODE,
diffusion-reaction and Burgers solution operators, with per-function
FCN/CNN baselines, evaluation metrics and report files."""

from .dataset import BaselineDataset, OperatorDataset, build_dataset, load_dataset, save_dataset
from .deeponet import DeepONetArch, DeepONetParams, LossKind, TrainConfig, predict, train_deeponet
from .errors import NumericError, OpbenchError, StorageError
from .grf import GrfConfig, Kernel, sample_functions
from .metrics import MetricRecord, SummaryStats, evaluate_model, summarize

__version__ = "0.1.0"

__all__ = [
    "BaselineDataset",
    "DeepONetArch",
    "DeepONetParams",
    "GrfConfig",
    "Kernel",
    "LossKind",
    "MetricRecord",
    "NumericError",
    "OperatorDataset",
    "OpbenchError",
    "StorageError",
    "SummaryStats",
    "TrainConfig",
    "build_dataset",
    "evaluate_model",
    "load_dataset",
    "predict",
    "sample_functions",
    "save_dataset",
    "summarize",
    "train_deeponet",
]
