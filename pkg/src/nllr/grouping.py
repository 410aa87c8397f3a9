"""Similar-patch search.

For each exemplar patch the m nearest patches, by squared Euclidean
distance on raw intensities, are collected from the candidates whose
top-left corners lie in an L x L window centred on the exemplar (clipped
at image borders). Ties are broken lexicographically by (row, col), and
the exemplar itself is always placed first in the group.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .patches import PatchGroup, PatchIndex, check_image, patch_side


@dataclass(frozen=True)
class MatchConfig:
    """Block-matching parameters: group size m, window side L, patch side."""

    group_size: int
    window: int
    patch_size: int

    def __post_init__(self):
        if self.group_size < 1:
            raise ValueError("group_size must be at least 1")
        if self.patch_size < 1:
            raise ValueError("patch_size must be at least 1")
        if self.window < self.patch_size:
            raise ValueError("search window must be at least as wide as the patch")


class PatchBank:
    """All stride-1 patches of one image, vectorized once for repeated queries.

    ``vectors[k]`` is the column-major vectorization of the patch whose
    top-left corner is ``(k // n_cols, k % n_cols)``.
    """

    def __init__(self, img: np.ndarray, patch_size: int):
        img = check_image(img)
        side = int(patch_size)
        height, width = img.shape
        if height < side or width < side:
            raise ValueError(f"image {img.shape} is smaller than the {side}x{side} patch")
        win = sliding_window_view(img, (side, side))
        self.n_rows, self.n_cols = win.shape[:2]
        # transpose the window dims so a C-order reshape yields column-major patches
        self.vectors = np.ascontiguousarray(
            win.transpose(0, 1, 3, 2).reshape(self.n_rows * self.n_cols, side * side)
        )
        self.patch_size = side
        self.image_shape = (height, width)

    @property
    def patch_area(self) -> int:
        return self.patch_size * self.patch_size

    def flat(self, row: int, col: int) -> int:
        if not (0 <= row < self.n_rows and 0 <= col < self.n_cols):
            raise IndexError(f"patch position ({row}, {col}) outside the valid grid")
        return row * self.n_cols + col

    def position(self, flat: int) -> PatchIndex:
        return PatchIndex(int(flat) // self.n_cols, int(flat) % self.n_cols)

    def grid_to_pixel(self, flat: np.ndarray) -> np.ndarray:
        """Convert patch-grid indices to flat top-left pixel indices."""
        flat = np.asarray(flat, dtype=np.intp)
        return (flat // self.n_cols) * self.image_shape[1] + flat % self.n_cols

    def match(self, exemplar: PatchIndex, cfg: MatchConfig) -> np.ndarray:
        """Member patch-grid indices for one exemplar, exemplar first.

        Candidates are scored by exact squared Euclidean distance; the
        stable sort keeps lexicographic (row, col) order among exact ties.
        Returns min(m, number of candidates) members.
        """
        if cfg.patch_size != self.patch_size:
            raise ValueError("patch size of config and bank disagree")
        er, ec = int(exemplar[0]), int(exemplar[1])
        half = cfg.window // 2
        r0 = max(er - half, 0)
        r1 = min(er + (cfg.window - 1) // 2, self.n_rows - 1)
        c0 = max(ec - half, 0)
        c1 = min(ec + (cfg.window - 1) // 2, self.n_cols - 1)
        rows = np.arange(r0, r1 + 1)
        cols = np.arange(c0, c1 + 1)
        cand = (rows[:, None] * self.n_cols + cols[None, :]).ravel()
        e = self.flat(er, ec)
        diffs = self.vectors[cand] - self.vectors[e]
        dist = np.einsum("ij,ij->i", diffs, diffs)
        order = np.argsort(dist, kind="stable")
        sel = cand[order[: min(cfg.group_size, cand.size)]]
        where = np.nonzero(sel == e)[0]
        if where.size == 0:
            sel = np.concatenate(([e], sel[:-1]))
        elif where[0] != 0:
            sel = np.concatenate(([e], np.delete(sel, where[0])))
        return sel


def find_group(img: np.ndarray, exemplar: PatchIndex, cfg: MatchConfig) -> PatchGroup:
    """Build the similar-patch group around one exemplar.

    Returns a PatchGroup whose matrix stacks the vectorized members as
    columns, exemplar in column 0.
    """
    bank = PatchBank(img, cfg.patch_size)
    sel = bank.match(exemplar, cfg)
    members = [bank.position(k) for k in sel]
    return PatchGroup(matrix=bank.vectors[sel].T.copy(), members=members)


def match_members(bank: PatchBank, exemplars, cfg: MatchConfig) -> np.ndarray:
    """Group membership for many exemplars as one (n_groups, m) index array.

    Entries are patch-grid indices into ``bank.vectors``. Raises if any
    exemplar has fewer than ``cfg.group_size`` candidates, since the
    callers rely on a rectangular array.
    """
    out = np.empty((len(exemplars), cfg.group_size), dtype=np.intp)
    for i, exemplar in enumerate(exemplars):
        sel = bank.match(exemplar, cfg)
        if sel.size != cfg.group_size:
            raise ValueError(
                f"exemplar {tuple(exemplar)} has only {sel.size} candidates; "
                f"shrink group_size or enlarge the window"
            )
        out[i] = sel
    return out
