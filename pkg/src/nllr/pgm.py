"""Binary 8-bit PGM (P5) reading and writing.

Inside the package images are float64 arrays with nominal range [0, 255].
Quantization (round half up, then clamp) happens only when an image is
written out, so intermediate results keep full precision.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError


def quantize(img: np.ndarray) -> np.ndarray:
    """Map real intensities to uint8: round half up, then clamp to [0, 255]."""
    return np.clip(np.floor(np.asarray(img, dtype=float) + 0.5), 0, 255).astype(np.uint8)


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    # Skip whitespace and '#' comment lines, then take the next run of
    # non-whitespace bytes.
    n = len(data)
    while pos < n:
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise DataError("truncated PGM header")
    return data[start:pos], pos


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) 8-bit PGM file into a float64 image."""
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        magic, pos = _next_token(data, 0)
        if magic != b"P5":
            raise DataError("not a binary PGM (P5) file")
        fields = []
        for name in ("width", "height", "maxval"):
            tok, pos = _next_token(data, pos)
            try:
                fields.append(int(tok))
            except ValueError:
                raise DataError(f"bad PGM {name}: {tok!r}") from None
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise DataError(f"{path}: bad PGM dimensions {width}x{height}")
    if not 0 < maxval < 256:
        raise DataError(f"{path}: only 8-bit PGM supported, got maxval {maxval}")
    pos += 1  # exactly one whitespace byte separates the header from the raster
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise DataError(f"{path}: truncated PGM raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).astype(float)


def write_pgm(path, img: np.ndarray) -> None:
    """Write a float image as binary 8-bit PGM, quantizing on the way out."""
    img = np.asarray(img)
    if img.ndim != 2 or img.size == 0:
        raise ValueError("expected a non-empty 2-D grayscale image")
    height, width = img.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(quantize(img).tobytes())
