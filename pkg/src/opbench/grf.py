"""Zero-mean Gaussian random fields on a fixed 1-D sensor grid."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from .errors import FactorizationError, RangeError


class Kernel(str, Enum):
    RBF = "rbf"
    PERIODIC_RBF = "periodic_rbf"


@dataclass(frozen=True)
class GrfConfig:
    n_sensors: int = 100
    domain: tuple[float, float] = (0.0, 1.0)
    length_scale: float = 0.2
    kernel: Kernel = Kernel.RBF
    jitter: float = 1e-10
    amplitude: float = 1.0  # pointwise standard deviation of the field

    def __post_init__(self):
        object.__setattr__(self, "kernel", Kernel(self.kernel))
        object.__setattr__(self, "domain", tuple(float(v) for v in self.domain))
        if self.n_sensors < 1:
            raise ValueError("n_sensors must be positive")
        if self.length_scale <= 0:
            raise ValueError("length_scale must be positive")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")
        if not self.domain[1] > self.domain[0]:
            raise ValueError(f"empty domain {self.domain}")

    @property
    def sensors(self) -> np.ndarray:
        a, b = self.domain
        # a periodic field repeats at b, so b itself is not a sensor
        endpoint = self.kernel is Kernel.RBF
        return np.linspace(a, b, self.n_sensors, endpoint=endpoint)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernel"] = self.kernel.value
        d["domain"] = list(self.domain)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GrfConfig":
        return cls(**{**d, "domain": tuple(d["domain"])})


@dataclass
class InputFunctionSet:
    values: np.ndarray  # (n_functions, n_sensors)
    sensors: np.ndarray
    config: GrfConfig
    seed: int | None = None

    def __len__(self):
        return self.values.shape[0]

    @property
    def n_sensors(self) -> int:
        return self.sensors.shape[0]


def kernel_matrix(sensors, length_scale: float, kernel=Kernel.RBF, jitter: float = 0.0, period=None):
    """Squared-exponential covariance between sensor locations.

    ``PERIODIC_RBF`` wraps the kernel onto a circle of length ``period``
    (default: the sensor span plus one spacing) by summing over periodic
    images. Wrapping only the distance would not be positive definite.
    """
    x = np.asarray(sensors, dtype=np.float64)
    if length_scale <= 0:
        raise ValueError("length_scale must be positive")
    d = x[:, None] - x[None, :]
    if Kernel(kernel) is Kernel.PERIODIC_RBF:
        if period is None:
            period = (x[-1] - x[0]) * len(x) / (len(x) - 1) if len(x) > 1 else 1.0
        d = np.abs(d) % period
        d = np.minimum(d, period - d)
        n_img = int(np.ceil(10.0 * length_scale / period)) + 1
        k = sum(np.exp(-0.5 * ((d + j * period) / length_scale) ** 2) for j in range(-n_img, n_img + 1))
    else:
        k = np.exp(-0.5 * (d / length_scale) ** 2)
    k[np.diag_indices_from(k)] += jitter
    return k


def config_kernel(config: GrfConfig) -> np.ndarray:
    a, b = config.domain
    return kernel_matrix(config.sensors, config.length_scale, config.kernel, config.jitter, period=b - a)


def cholesky_factor(k: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(k)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"kernel matrix is not positive definite: {exc}") from exc


def sample_functions(config: GrfConfig, n_functions: int, seed: int) -> InputFunctionSet:
    """Draw ``n_functions`` rows ``amplitude * L @ z`` with ``L`` the Cholesky factor of the kernel."""
    if n_functions < 0:
        raise ValueError("n_functions must be non-negative")
    chol = cholesky_factor(config_kernel(config))
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_functions, config.n_sensors))
    return InputFunctionSet(config.amplitude * (z @ chol.T), config.sensors, config, seed)


def evaluate_function(fn_values, x, sensors) -> np.ndarray | float:
    """Piecewise-linear interpolation of sensor values; exact at the sensors."""
    fn_values = np.asarray(fn_values, dtype=np.float64)
    sensors = np.asarray(sensors, dtype=np.float64)
    xq = np.asarray(x, dtype=np.float64)
    lo, hi = sensors[0], sensors[-1]
    if np.any(xq < lo) or np.any(xq > hi):
        raise RangeError(f"query outside sensor range [{lo}, {hi}]")
    out = np.interp(xq, sensors, fn_values)
    return float(out) if np.ndim(out) == 0 else out
