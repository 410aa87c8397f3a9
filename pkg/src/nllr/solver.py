"""Alternating restoration driver.

Each outer iteration performs three updates:

  1. X: pull the estimate toward the observation, either by the exact
     regularized solve (blur, mask) or by gradient steps (block
     projection), with a rho-weighted proximity term to Z + C.
  2. Z: group similar patches of R = X - C, shrink every group's singular
     values, and aggregate the groups back into an image by averaging.
  3. C: accumulate the running X - Z mismatch, C <- C - (X - Z).

The trace records, per iteration, the X/Z residual, a surrogate objective
(data fidelity plus the summed group penalties), and PSNR against a
reference when one is supplied. PSNR is computed on the real-valued
estimate, before any quantization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import SolverConfig
from .errors import ConfigError
from .grouping import MatchConfig, PatchBank, match_members
from .metrics import psnr
from .operators import (
    BlockProjectionOperator,
    BlurOperator,
    MaskOperator,
    solve_x_structured,
)
from .patches import aggregate_flat, check_image, exemplar_grid
from .prox import ProxParams, shrink_groups

_TASK_OPERATORS = {
    "deblur": BlurOperator,
    "inpaint": MaskOperator,
    "cs": BlockProjectionOperator,
}


@dataclass
class TraceRecord:
    """Per-iteration diagnostics; iteration 0 describes the initialization."""

    iteration: int
    residual: float
    objective: float
    psnr: float | None = None


@dataclass
class AdmmState:
    """Mutable solver state threaded through ``step``."""

    x: np.ndarray
    z: np.ndarray
    c: np.ndarray
    iteration: int = 0
    trace: list[TraceRecord] = field(default_factory=list)
    prox_failures: int = 0
    members: np.ndarray | None = None  # cached group membership, patch-grid indices
    hty: np.ndarray | None = None  # cs only: adjoint of the (fixed) observation


def _check_pair(op, cfg: SolverConfig) -> None:
    expected = _TASK_OPERATORS[cfg.task]
    if not isinstance(op, expected):
        raise ConfigError(
            f"task {cfg.task!r} needs a {expected.__name__}, got {type(op).__name__}"
        )


def _fidelity(y, op, x) -> float:
    r = np.asarray(y, dtype=float) - op.apply(x)
    return 0.5 * float(np.sum(r * r))


def initialize(y, op, cfg: SolverConfig, reference=None) -> AdmmState:
    """Task-specific starting point with Z = X and zero multiplier.

    Deblurring starts from the observation itself, inpainting fills the
    missing pixels with the observed mean, and compressive sensing starts
    from the adjoint back-projection of the measurements.
    """
    cfg.validate()
    _check_pair(op, cfg)
    if cfg.task == "deblur":
        x0 = check_image(y).copy()
    elif cfg.task == "inpaint":
        y = check_image(y)
        if y.shape != op.mask.shape:
            raise ConfigError(f"observation {y.shape} does not match mask {op.mask.shape}")
        fill = float(y[op.mask].mean())
        x0 = np.where(op.mask, y, fill)
    else:
        x0 = op.adjoint(np.asarray(y, dtype=float))
    height, width = x0.shape
    if height < cfg.patch_size or width < cfg.patch_size:
        raise ConfigError(f"image {x0.shape} is smaller than the configured patch")
    state = AdmmState(x=x0, z=x0.copy(), c=np.zeros_like(x0))
    if cfg.task == "cs":
        state.hty = x0.copy()
    state.trace.append(
        TraceRecord(
            iteration=0,
            residual=0.0,
            objective=_fidelity(y, op, x0),
            psnr=None if reference is None else psnr(x0, reference),
        )
    )
    return state


def step(state: AdmmState, y, op, cfg: SolverConfig, reference=None) -> AdmmState:
    """Advance the solver by one outer iteration, mutating ``state``."""
    rho = cfg.rho
    if cfg.task == "cs":
        x = state.x
        mu = 1.0 / (1.0 + rho)  # rows of Phi are orthonormal, so the Lipschitz constant is 1 + rho
        for _ in range(cfg.cs_grad_steps):
            x = op.grad_step(x, y, state.z, state.c, rho, mu, state.hty)
    else:
        x = solve_x_structured(op, y, state.z, state.c, rho)
    r = x - state.c

    bank = PatchBank(r, cfg.patch_size)
    if state.members is None or state.iteration % cfg.group_refresh == 0:
        exemplars = exemplar_grid(r, cfg.patch_size**2, cfg.stride)
        state.members = match_members(bank, exemplars, MatchConfig(cfg.group_size, cfg.window, cfg.patch_size))
    members = state.members
    stack = bank.vectors[members].transpose(0, 2, 1)
    params = ProxParams(
        p=cfg.p,
        rho=rho,
        delta=cfg.delta,
        epsilon=cfg.epsilon,
        varsigma=cfg.varsigma,
        iters=cfg.gst_iters,
        total_elems=members.size * bank.patch_area,
        pixels=r.size,
        theta_estimator=cfg.theta_estimator,
    )
    shrunk, reg, failures = shrink_groups(stack, params, uniform_weights=(cfg.method == "nnm"))
    state.prox_failures += failures
    height, width = r.shape
    z = aggregate_flat(
        bank.grid_to_pixel(members),
        shrunk.transpose(0, 2, 1),
        cfg.patch_size,
        height,
        width,
        fallback=r,
    )
    c = state.c - (x - z)

    state.x, state.z, state.c = x, z, c
    state.iteration += 1
    state.trace.append(
        TraceRecord(
            iteration=state.iteration,
            residual=float(np.linalg.norm(x - z)),
            objective=_fidelity(y, op, x) + float(np.sum(reg)),
            psnr=None if reference is None else psnr(x, reference),
        )
    )
    return state


def solve(y, op, cfg: SolverConfig, reference=None):
    """Run ``cfg.iterations`` outer iterations and return (estimate, trace)."""
    state = initialize(y, op, cfg, reference)
    for _ in range(cfg.iterations):
        step(state, y, op, cfg, reference)
    return state.x.copy(), state.trace


def write_trace(trace, path) -> None:
    """Write trace records as CSV; the PSNR column is empty without a reference."""
    lines = ["iteration,psnr_db,residual,objective"]
    for rec in trace:
        if rec.psnr is None:
            psnr_txt = ""
        elif math.isinf(rec.psnr):
            psnr_txt = "inf"
        else:
            psnr_txt = f"{rec.psnr:.6f}"
        lines.append(f"{rec.iteration},{psnr_txt},{rec.residual:.10g},{rec.objective:.10g}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
