from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Grid2D:
    """Field sampled on a uniform (x, t) grid.

    ``values`` is ``(nx, nt)`` for one solve or ``(batch, nx, nt)`` for many.
    """

    x: np.ndarray
    t: np.ndarray
    values: np.ndarray

    @property
    def nx(self) -> int:
        return self.x.shape[0]

    @property
    def nt(self) -> int:
        return self.t.shape[0]

    @property
    def x_range(self) -> tuple[float, float]:
        return float(self.x[0]), float(self.x[-1])

    @property
    def t_range(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    def __getitem__(self, i) -> "Grid2D":
        """Select one member of a batched grid."""
        return Grid2D(self.x, self.t, self.values[i])

    def points(self) -> np.ndarray:
        """All grid nodes as ``(nx * nt, 2)`` rows of (x, t), x-major."""
        xx, tt = np.meshgrid(self.x, self.t, indexing="ij")
        return np.stack([xx.ravel(), tt.ravel()], axis=1)
