"""Antiderivative problem ``ds/dx = u(x)``, ``s(0) = 0`` by classical RK4."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass
class OdeSolution:
    xs: np.ndarray  # (n_steps + 1,)
    s: np.ndarray  # (n_steps + 1,) or (batch, n_steps + 1)
    u_ref: np.ndarray | None = None


def rk4(f: Callable, y0, x0: float, x1: float, n_steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-step RK4; returns the node coordinates and the trajectory (last axis = node)."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    h = (x1 - x0) / n_steps
    xs = x0 + h * np.arange(n_steps + 1)
    y = np.asarray(y0, dtype=np.float64)
    out = np.empty(y.shape + (n_steps + 1,))
    out[..., 0] = y
    for i in range(n_steps):
        x = xs[i]
        k1 = f(x, y)
        k2 = f(x + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(x + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(x + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[..., i + 1] = y
    return xs, out


def _linear_sampler(values: np.ndarray, sensors: np.ndarray):
    """Vectorized piecewise-linear evaluation of every row at one scalar x."""
    n = sensors.shape[0]

    def at(x):
        j = int(np.clip(np.searchsorted(sensors, x, side="right") - 1, 0, n - 2))
        w = (x - sensors[j]) / (sensors[j + 1] - sensors[j])
        return values[..., j] * (1.0 - w) + values[..., j + 1] * w

    return at


def solve_antiderivative(u, n_steps: int = 1000, sensors=None, x_range=(0.0, 1.0)) -> OdeSolution:
    """Integrate ``ds/dx = u`` from ``s(x_range[0]) = 0``.

    ``u`` is a callable, one row of sensor values, or a ``(batch, m)`` matrix
    of rows; rows are interpolated linearly between ``sensors`` (default: a
    uniform grid over ``x_range``).
    """
    a, b = x_range
    if callable(u):
        f = lambda x, s: np.broadcast_to(np.asarray(u(x), dtype=np.float64), np.shape(s))
        xs, s = rk4(f, 0.0, a, b, n_steps)
        return OdeSolution(xs, s, None)
    values = np.asarray(u, dtype=np.float64)
    if sensors is None:
        sensors = np.linspace(a, b, values.shape[-1])
    sensors = np.asarray(sensors, dtype=np.float64)
    sample = _linear_sampler(values, sensors)
    xs, s = rk4(lambda x, s: sample(x), np.zeros(values.shape[:-1]), a, b, n_steps)
    return OdeSolution(xs, s, values)
