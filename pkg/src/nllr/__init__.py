"""Nonlocal low-rank restoration of grayscale images.

Recovers an image from a blurred, partially observed, or block-compressed
observation by alternating a data-consistency update with a low-rank
shrinkage of groups of mutually similar patches.
"""

from .config import SolverConfig, default_config, load_config, save_config
from .errors import ConfigError, DataError, NllrError, NumericalError
from .metrics import EvalRow, mse, psnr, write_report
from .operators import (
    BlockProjectionOperator,
    BlurOperator,
    MaskOperator,
    gaussian_kernel,
    random_mask,
    uniform_kernel,
)
from .pgm import read_pgm, write_pgm
from .solver import AdmmState, TraceRecord, initialize, solve, step, write_trace

__version__ = "0.1.0"

__all__ = [
    "AdmmState",
    "BlockProjectionOperator",
    "BlurOperator",
    "ConfigError",
    "DataError",
    "EvalRow",
    "MaskOperator",
    "NllrError",
    "NumericalError",
    "SolverConfig",
    "TraceRecord",
    "default_config",
    "gaussian_kernel",
    "initialize",
    "load_config",
    "mse",
    "psnr",
    "random_mask",
    "read_pgm",
    "save_config",
    "solve",
    "step",
    "uniform_kernel",
    "write_pgm",
    "write_report",
    "write_trace",
]
