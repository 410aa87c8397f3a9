"""Patch geometry: extraction, exemplar lattices, overlap-averaged aggregation.

Patches are square blocks vectorized column-major: all rows of the first
column, then the second column, and so on. The order is a pure convention,
but it is fixed here so group matrices, scatter indices, and tests agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


class PatchIndex(NamedTuple):
    """Top-left corner of a patch, in pixel coordinates."""

    row: int
    col: int


@dataclass
class PatchGroup:
    """A stack of similar patches: one d x m matrix plus source positions.

    Column j of ``matrix`` is the vectorized patch at ``members[j]``.
    ``members[0]`` is the exemplar the group was built around.
    """

    matrix: np.ndarray
    members: list[PatchIndex]


def check_image(img) -> np.ndarray:
    """Validate and return a finite 2-D float64 image."""
    arr = np.asarray(img, dtype=float)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError("expected a non-empty 2-D image")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    return arr


def patch_side(d: int) -> int:
    """Side length of a square patch with d pixels; d must be a perfect square."""
    side = math.isqrt(int(d))
    if side < 1 or side * side != d:
        raise ValueError(f"patch area {d} is not a perfect square")
    return side


def extract_patch(img: np.ndarray, idx: PatchIndex, d: int) -> np.ndarray:
    """Vectorize the d-pixel patch whose top-left corner is ``idx``."""
    img = check_image(img)
    side = patch_side(d)
    row, col = int(idx[0]), int(idx[1])
    height, width = img.shape
    if not (0 <= row <= height - side and 0 <= col <= width - side):
        raise IndexError(f"patch at ({row}, {col}) exceeds image bounds {img.shape}")
    return img[row : row + side, col : col + side].ravel(order="F")


def _axis_positions(extent: int, side: int, stride: int) -> list[int]:
    # Stride lattice, with the final position forced so the last patch is
    # flush with the border and every pixel is covered.
    positions = list(range(0, extent - side + 1, stride))
    if positions[-1] != extent - side:
        positions.append(extent - side)
    return positions


def exemplar_grid(img: np.ndarray, d: int, stride: int) -> list[PatchIndex]:
    """Top-left corners of exemplar patches on a stride lattice.

    The lattice starts at (0, 0) and advances by ``stride``; the last row
    and column of positions are clamped to keep the patch inside the image,
    so the union of exemplar patches always covers the whole image.
    """
    img = check_image(img)
    side = patch_side(d)
    if stride < 1:
        raise ValueError("stride must be at least 1")
    height, width = img.shape
    if height < side or width < side:
        raise ValueError(f"image {img.shape} is smaller than the {side}x{side} patch")
    rows = _axis_positions(height, side, stride)
    cols = _axis_positions(width, side, stride)
    return [PatchIndex(r, c) for r in rows for c in cols]


def flat_offsets(side: int, width: int) -> np.ndarray:
    """Flat-pixel offsets of a vectorized patch relative to its top-left corner."""
    j = np.arange(side * side)
    return (j % side) * width + (j // side)


def aggregate_flat(
    members: np.ndarray,
    values: np.ndarray,
    side: int,
    height: int,
    width: int,
    fallback: np.ndarray | None = None,
) -> np.ndarray:
    """Scatter patch stacks back to an image, averaging overlaps uniformly.

    ``members`` holds flat top-left pixel indices (row * width + col), one
    row per group; ``values`` has shape ``members.shape + (side * side,)``
    with the patch vectors. Pixels covered by no patch take the value of
    ``fallback``; without a fallback they are an error.
    """
    members = np.asarray(members, dtype=np.intp)
    values = np.asarray(values, dtype=float)
    if values.shape != members.shape + (side * side,):
        raise ValueError("values shape does not match members")
    idx = (members[..., None] + flat_offsets(side, width)).ravel()
    total = np.bincount(idx, weights=values.ravel(), minlength=height * width)
    count = np.bincount(idx, minlength=height * width)
    uncovered = count == 0
    if np.any(uncovered):
        if fallback is None:
            raise ValueError(f"{int(uncovered.sum())} pixels covered by no patch and no fallback given")
        total = np.where(uncovered, np.asarray(fallback, dtype=float).ravel(), total)
        count = np.where(uncovered, 1, count)
    return (total / count).reshape(height, width)


def aggregate_groups(
    groups: Sequence[PatchGroup],
    height: int,
    width: int,
    fallback: np.ndarray | None = None,
) -> np.ndarray:
    """Aggregate patch groups into a height x width image by uniform averaging.

    Every pixel becomes the plain average of all patch entries that cover
    it, across all groups; the result does not depend on group order.
    """
    if fallback is not None:
        fallback = check_image(fallback)
        if fallback.shape != (height, width):
            raise ValueError("fallback shape does not match the output image")
    idx_chunks = []
    val_chunks = []
    for group in groups:
        matrix = np.asarray(group.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[1] != len(group.members):
            raise ValueError("group matrix does not match its member list")
        side = patch_side(matrix.shape[0])
        offsets = flat_offsets(side, width)
        for j, (row, col) in enumerate(group.members):
            if not (0 <= row <= height - side and 0 <= col <= width - side):
                raise IndexError(f"group member at ({row}, {col}) exceeds image bounds")
            idx_chunks.append(row * width + col + offsets)
            val_chunks.append(matrix[:, j])
    if not idx_chunks:
        raise ValueError("no groups to aggregate")
    idx = np.concatenate(idx_chunks)
    vals = np.concatenate(val_chunks)
    total = np.bincount(idx, weights=vals, minlength=height * width)
    count = np.bincount(idx, minlength=height * width)
    uncovered = count == 0
    if np.any(uncovered):
        if fallback is None:
            raise ValueError(f"{int(uncovered.sum())} pixels covered by no patch and no fallback given")
        total = np.where(uncovered, fallback.ravel(), total)
        count = np.where(uncovered, 1, count)
    return (total / count).reshape(height, width)
