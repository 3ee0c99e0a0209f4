"""Ground-truth generators for the three test problems."""

from .burgers import BurgersConfig, solve_burgers
from .diffusion import DiffusionConfig, solve_diffusion_reaction
from .fft import fft, ifft
from .grid import Grid2D
from .ode import OdeSolution, rk4, solve_antiderivative

__all__ = [
    "BurgersConfig",
    "DiffusionConfig",
    "Grid2D",
    "OdeSolution",
    "fft",
    "ifft",
    "rk4",
    "solve_antiderivative",
    "solve_burgers",
    "solve_diffusion_reaction",
]
