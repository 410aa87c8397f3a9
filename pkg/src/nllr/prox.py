"""Low-rank shrinkage of patch groups.

A d x m group matrix is decomposed by SVD and its singular values are
shrunk by generalized soft-thresholding. The weighted variant assigns
each singular value the weight 1 / (sigma + epsilon), so small (mostly
noise) components are suppressed hard while dominant structure is nearly
preserved; the overall strength per group adapts to the spread of its
singular values through

    lambda = 2 * sqrt(2) * delta**2 / (theta + varsigma)

with theta the spread estimate of the group's singular values. Because
the weights are non-decreasing across the (sorted) singular values, the
diagonal shrinkage is the exact minimizer of the weighted problem, not
just a heuristic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .gst import gst_solve
from .patches import PatchGroup, check_image, patch_side

THETA_ESTIMATORS = ("variance", "mean-square")


@dataclass(frozen=True)
class ProxParams:
    """Parameters of the weighted low-rank shrinkage.

    p, rho: penalty exponent and coupling weight; delta: noise scale;
    epsilon: weight regularizer; varsigma: spread regularizer; iters:
    fixed-point iterations of the scalar shrinkage; total_elems (K) and
    pixels (N) scale the per-group threshold tau = lambda * K / (rho * N).
    """

    p: float
    rho: float
    delta: float
    epsilon: float
    varsigma: float
    iters: int = 2
    total_elems: int = 1
    pixels: int = 1
    theta_estimator: str = "variance"

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"p must lie in (0, 1], got {self.p}")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        for name in ("delta", "epsilon", "varsigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.iters < 1 or self.total_elems < 1 or self.pixels < 1:
            raise ValueError("iters, total_elems and pixels must be positive")
        if self.theta_estimator not in THETA_ESTIMATORS:
            raise ValueError(f"unknown theta estimator {self.theta_estimator!r}")


def compute_weights(sv, epsilon: float):
    """Inverse-magnitude weights 1 / (sigma + epsilon), elementwise."""
    sv = np.asarray(sv, dtype=float)
    if np.any(sv < 0):
        raise ValueError("singular values must be non-negative")
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    return 1.0 / (sv + epsilon)


def compute_lambda(sv, delta: float, varsigma: float, estimator: str = "variance"):
    """Adaptive shrinkage strength from the spread of the singular values.

    Works on the last axis, so a batch of singular-value vectors yields a
    vector of lambdas. ``estimator`` picks the spread statistic: population
    variance (default) or mean of squares.
    """
    sv = np.asarray(sv, dtype=float)
    if estimator == "variance":
        theta = sv.var(axis=-1)
    elif estimator == "mean-square":
        theta = np.mean(sv * sv, axis=-1)
    else:
        raise ValueError(f"unknown theta estimator {estimator!r}")
    lam = 2.0 * np.sqrt(2.0) * float(delta) ** 2 / (theta + float(varsigma))
    if sv.ndim == 1:
        return float(lam)
    return lam


def _shrink_values(sv, w_eff, p: float, iters: int):
    # Shared scalar-shrinkage path for both the weighted and plain variants.
    return gst_solve(sv, w_eff, p, iters)


def _shrink_batch(stack: np.ndarray, params: ProxParams, uniform_weights: bool):
    u, sv, vt = np.linalg.svd(stack, full_matrices=False)
    lam = np.atleast_1d(compute_lambda(sv, params.delta, params.varsigma, params.theta_estimator))
    tau = lam * (params.total_elems / (params.rho * params.pixels))
    if uniform_weights:
        p = 1.0
        w_eff = np.broadcast_to(tau[..., None], sv.shape)
    else:
        p = params.p
        w_eff = tau[..., None] * compute_weights(sv, params.epsilon)
    s_new = _shrink_values(sv, w_eff, p, params.iters)
    out = u @ (s_new[..., None] * vt)
    reg = np.sum(w_eff * s_new**p, axis=-1)
    return out, reg


def shrink_groups(stack: np.ndarray, params: ProxParams, uniform_weights: bool = False):
    """Shrink a batch of group matrices, shape (n_groups, d, m).

    Returns (shrunk stack, per-group penalty value at the solution,
    number of groups passed through unchanged because their SVD failed).
    """
    stack = np.asarray(stack, dtype=float)
    if stack.ndim != 3:
        raise ValueError("expected a (n_groups, d, m) stack")
    try:
        out, reg = _shrink_batch(stack, params, uniform_weights)
        return out, reg, 0
    except np.linalg.LinAlgError:
        pass
    # Rare: batched SVD failed to converge. Retry group by group so one bad
    # matrix does not poison the rest; failures pass through unchanged.
    out = np.empty_like(stack)
    reg = np.zeros(stack.shape[0])
    failures = 0
    for i in range(stack.shape[0]):
        try:
            shrunk, r = _shrink_batch(stack[i][None], params, uniform_weights)
            out[i] = shrunk[0]
            reg[i] = r[0]
        except np.linalg.LinAlgError:
            out[i] = stack[i]
            failures += 1
    return out, reg, failures


def group_prox(mat: np.ndarray, params: ProxParams) -> np.ndarray:
    """Weighted low-rank shrinkage of a single d x m group matrix.

    SVD non-convergence propagates as numpy.linalg.LinAlgError; the batch
    driver (shrink_groups) instead passes such groups through and counts
    them.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2:
        raise ValueError("expected a 2-D group matrix")
    out, _ = _shrink_batch(mat[None], params, uniform_weights=False)
    return out[0]


def nnm_prox(mat: np.ndarray, tau: float) -> np.ndarray:
    """Plain nuclear-norm shrinkage: soft-threshold all singular values by tau."""
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2:
        raise ValueError("expected a 2-D group matrix")
    if tau < 0:
        raise ValueError("tau must be non-negative")
    u, sv, vt = np.linalg.svd(mat, full_matrices=False)
    s_new = _shrink_values(sv, np.full_like(sv, float(tau)), 1.0, 1)
    return u @ (s_new[:, None] * vt)


def check_theorem1(z: np.ndarray, r: np.ndarray, groups: Sequence[PatchGroup]) -> float:
    """Relative gap between image-domain and group-domain mean squared error.

    Compares (1/N) * ||Z - R||^2 over pixels against (1/K) * sum of
    ||Z_i - R_i||^2 over all group entries, where the groups' members are
    re-extracted from both images. The two agree when every pixel is
    sampled about equally often; the returned value is |difference| over
    the image-domain term.
    """
    z = check_image(z)
    r = check_image(r)
    if z.shape != r.shape:
        raise ValueError("images must share a shape")
    diff = z - r
    image_term = float(np.mean(diff * diff))
    total = 0.0
    count = 0
    for group in groups:
        side = patch_side(np.asarray(group.matrix).shape[0])
        for row, col in group.members:
            block = diff[row : row + side, col : col + side]
            if block.shape != (side, side):
                raise IndexError(f"group member at ({row}, {col}) exceeds image bounds")
            total += float(np.sum(block * block))
            count += side * side
    if count == 0:
        raise ValueError("no group members given")
    group_term = total / count
    return abs(image_term - group_term) / max(image_term, np.finfo(float).tiny)
