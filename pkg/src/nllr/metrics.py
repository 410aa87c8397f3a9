"""Restoration quality metrics on [0, 255] grayscale images."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared error between two images of identical shape."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("empty images")
    diff = a - b
    return float(np.mean(diff * diff))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for a 255 peak; inf for equal images."""
    err = mse(a, b)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / err)


@dataclass(frozen=True)
class EvalRow:
    """One line of an evaluation report."""

    image: str
    role: str
    method: str
    psnr: float
    mse: float


def write_report(rows: Sequence[EvalRow], path) -> None:
    """Write evaluation rows as CSV; an infinite PSNR is reported as 'exact'."""
    lines = ["image,role,method,psnr_db,mse"]
    for row in rows:
        psnr_txt = "exact" if math.isinf(row.psnr) else f"{row.psnr:.4f}"
        lines.append(f"{row.image},{row.role},{row.method},{psnr_txt},{row.mse:.6g}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
