"""Degradation operators and their structured inverses.

Three forward maps cover the supported tasks: circular convolution with a
normalized blur kernel, pixel masking, and per-block compressive Gaussian
projection. Each operator exposes the exact adjoint and either a closed
form for the regularized data-consistency solve

    argmin_x  0.5 * ||y - H x||^2 + 0.5 * rho * ||x - v||^2

(blur diagonalizes in frequency space, masking decouples per pixel) or a
gradient step toward it (block projection). Operator settings round-trip
through a plain ``key = value`` spec file, so a degraded observation plus
its sidecar is enough to run a restoration later.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .config import KeyValueFile, write_kv
from .errors import ConfigError
from .patches import check_image
from .pgm import read_pgm, write_pgm


def uniform_kernel(size: int) -> np.ndarray:
    """Flat size x size averaging kernel."""
    if size < 1:
        raise ValueError("kernel size must be positive")
    return np.full((size, size), 1.0 / (size * size))


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Truncated, renormalized size x size Gaussian kernel."""
    if size < 1:
        raise ValueError("kernel size must be positive")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    half = (size - 1) / 2.0
    ax = np.arange(size) - half
    sq = ax[:, None] ** 2 + ax[None, :] ** 2
    kernel = np.exp(-sq / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


class BlurOperator:
    """Circular 2-D convolution with a kernel that sums to one."""

    def __init__(self, kernel: np.ndarray):
        kernel = np.asarray(kernel, dtype=float)
        if kernel.ndim != 2 or kernel.size == 0:
            raise ValueError("kernel must be a non-empty 2-D array")
        if not np.all(np.isfinite(kernel)):
            raise ValueError("kernel contains non-finite values")
        if abs(kernel.sum() - 1.0) > 1e-12:
            raise ValueError("kernel must sum to 1")
        self.kernel = kernel
        self._otf_cache: dict[tuple[int, int], np.ndarray] = {}

    def _otf(self, shape) -> np.ndarray:
        # kernel centre at (kh//2, kw//2) maps to the origin of the padded grid
        if shape not in self._otf_cache:
            kh, kw = self.kernel.shape
            if kh > shape[0] or kw > shape[1]:
                raise ValueError(f"kernel {self.kernel.shape} larger than image {shape}")
            pad = np.zeros(shape)
            pad[:kh, :kw] = self.kernel
            pad = np.roll(pad, (-(kh // 2), -(kw // 2)), axis=(0, 1))
            self._otf_cache[shape] = np.fft.fft2(pad)
        return self._otf_cache[shape]

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = check_image(x)
        return np.real(np.fft.ifft2(np.fft.fft2(x) * self._otf(x.shape)))

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        y = check_image(y)
        return np.real(np.fft.ifft2(np.fft.fft2(y) * np.conj(self._otf(y.shape))))

    def solve(self, y: np.ndarray, v: np.ndarray, rho: float) -> np.ndarray:
        """Exact minimizer of the blur data term plus rho-proximity to v."""
        y = check_image(y)
        v = check_image(v)
        if y.shape != v.shape:
            raise ValueError("observation and prior image must share a shape")
        otf = self._otf(y.shape)
        numer = np.conj(otf) * np.fft.fft2(y) + rho * np.fft.fft2(v)
        denom = np.abs(otf) ** 2 + rho
        return np.real(np.fft.ifft2(numer / denom))


class MaskOperator:
    """Keep observed pixels, zero the rest."""

    def __init__(self, mask: np.ndarray):
        mask = np.asarray(mask)
        if mask.ndim != 2 or mask.size == 0:
            raise ValueError("mask must be a non-empty 2-D array")
        mask = mask.astype(bool)
        if not mask.any():
            raise ValueError("mask observes no pixels")
        self.mask = mask

    @property
    def observed_fraction(self) -> float:
        return float(self.mask.mean())

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = check_image(x)
        if x.shape != self.mask.shape:
            raise ValueError(f"image {x.shape} does not match mask {self.mask.shape}")
        return np.where(self.mask, x, 0.0)

    # Masking is a diagonal 0/1 operator, hence self-adjoint.
    adjoint = apply

    def solve(self, y: np.ndarray, v: np.ndarray, rho: float) -> np.ndarray:
        """Pixelwise minimizer: blend with y where observed, copy v elsewhere."""
        y = check_image(y)
        v = check_image(v)
        if y.shape != self.mask.shape or v.shape != self.mask.shape:
            raise ValueError("observation and prior image must match the mask shape")
        return np.where(self.mask, (y + rho * v) / (1.0 + rho), v)


class BlockProjectionOperator:
    """Compressive measurements y_b = Phi @ vec(block) per image block.

    Phi starts from i.i.d. standard Gaussian entries drawn with the given
    seed and its rows are orthonormalized (QR of the transpose, signs fixed
    by the R diagonal), so Phi @ Phi.T = I and the same seed reproduces the
    same matrix bit for bit. Blocks are traversed row-major and vectorized
    column-major like patches.
    """

    def __init__(self, n_measurements: int, image_shape, seed: int, block_size: int = 32):
        block_size = int(block_size)
        if block_size < 1:
            raise ValueError("block size must be positive")
        n = block_size * block_size
        n_measurements = int(n_measurements)
        if not 1 <= n_measurements <= n:
            raise ValueError(f"measurements per block must lie in [1, {n}]")
        height, width = (int(image_shape[0]), int(image_shape[1]))
        if height % block_size or width % block_size:
            raise ValueError(f"image {image_shape} not divisible into {block_size}x{block_size} blocks")
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((n_measurements, n))
        q, r = np.linalg.qr(a.T)
        signs = np.where(np.diagonal(r) < 0, -1.0, 1.0)
        self.phi = np.ascontiguousarray((q * signs).T)
        self.block_size = block_size
        self.image_shape = (height, width)
        self.seed = int(seed)
        self._gram: Optional[np.ndarray] = None

    @property
    def n_measurements(self) -> int:
        return self.phi.shape[0]

    @property
    def n_blocks(self) -> int:
        b = self.block_size
        return (self.image_shape[0] // b) * (self.image_shape[1] // b)

    @property
    def gram(self) -> np.ndarray:
        """Phi^T Phi, cached; an orthogonal projector of rank n_measurements."""
        if self._gram is None:
            self._gram = self.phi.T @ self.phi
        return self._gram

    def _blocks(self, x: np.ndarray) -> np.ndarray:
        b = self.block_size
        nbr, nbc = self.image_shape[0] // b, self.image_shape[1] // b
        # (row-block, col-block, block-col, block-row): C-order reshape then
        # yields column-major vectorization per block
        return x.reshape(nbr, b, nbc, b).transpose(0, 2, 3, 1).reshape(nbr * nbc, b * b)

    def _unblocks(self, vecs: np.ndarray) -> np.ndarray:
        b = self.block_size
        nbr, nbc = self.image_shape[0] // b, self.image_shape[1] // b
        return vecs.reshape(nbr, nbc, b, b).transpose(0, 3, 1, 2).reshape(self.image_shape)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = check_image(x)
        if x.shape != self.image_shape:
            raise ValueError(f"image {x.shape} does not match operator shape {self.image_shape}")
        return (self._blocks(x) @ self.phi.T).ravel()

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        expected = self.n_blocks * self.n_measurements
        if y.shape != (expected,):
            raise ValueError(f"measurement vector must have shape ({expected},)")
        return self._unblocks(y.reshape(self.n_blocks, self.n_measurements) @ self.phi)

    def grad_step(
        self,
        x: np.ndarray,
        y: np.ndarray,
        z: np.ndarray,
        c: np.ndarray,
        rho: float,
        mu: float,
        hty: np.ndarray | None = None,
    ) -> np.ndarray:
        """One gradient step on the block data term plus rho-coupling to z + c.

        ``hty`` may carry a precomputed adjoint(y); the observation is fixed
        across solver iterations, so callers compute it once.
        """
        if hty is None:
            hty = self.adjoint(y)
        hthx = self._unblocks(self._blocks(x) @ self.gram)
        grad = hthx - hty + rho * (x - z - c)
        return x - mu * grad


def solve_x_structured(op, y, z, c, rho: float) -> np.ndarray:
    """Closed-form data-consistency update, dispatching on operator type."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    if isinstance(op, (BlurOperator, MaskOperator)):
        return op.solve(y, np.asarray(z, dtype=float) + np.asarray(c, dtype=float), rho)
    raise TypeError("structured solve supports blur and mask operators only")


def grad_step_x(op, x, y, z, c, rho: float, mu: float, hty=None) -> np.ndarray:
    """Gradient data-consistency step, for operators with no cheap closed form."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    if mu < 0:
        raise ValueError("mu must be non-negative")
    if isinstance(op, BlockProjectionOperator):
        return op.grad_step(x, y, z, c, rho, mu, hty)
    raise TypeError("gradient step supports the block projection operator only")


def random_mask(shape, density: float, seed: int) -> np.ndarray:
    """Boolean mask observing round(density * N) pixels chosen uniformly."""
    height, width = (int(shape[0]), int(shape[1]))
    if height < 1 or width < 1:
        raise ValueError("mask shape must be positive")
    if not 0.0 < density <= 1.0:
        raise ValueError(f"mask density must lie in (0, 1], got {density}")
    n = height * width
    observed = int(round(density * n))
    if observed < 1:
        raise ValueError("mask density keeps no pixels")
    rng = np.random.default_rng(seed)
    flat = np.zeros(n, dtype=bool)
    flat[rng.permutation(n)[:observed]] = True
    return flat.reshape(height, width)


def write_mask_pgm(mask: np.ndarray, path) -> None:
    """Export a mask as PGM: 255 marks observed pixels, 0 missing ones."""
    write_pgm(path, np.where(np.asarray(mask, dtype=bool), 255.0, 0.0))


def read_mask_pgm(path) -> np.ndarray:
    """Read a mask PGM; any value >= 128 counts as observed."""
    return read_pgm(path) >= 128


@dataclass(frozen=True)
class OperatorSpec:
    """Plain description of a degradation, as stored in spec/sidecar files.

    ``kind`` selects the operator; the remaining fields apply per kind and
    stay None when unused. ``height``/``width`` make mask and cs sidecars
    self-contained; for a fresh spec they may be left unset and taken from
    the image at build time.
    """

    kind: str
    kernel: str | None = None
    kernel_size: int | None = None
    sigma: float | None = None
    density: float | None = None
    mask_pgm: str | None = None
    subrate: float | None = None
    n_measurements: int | None = None
    block_size: int = 32
    height: int | None = None
    width: int | None = None
    seed: int = 0
    noise_std: float = 0.0


_SPEC_KEYS = {
    "type", "kernel", "kernel_size", "sigma", "density", "mask_pgm",
    "subrate", "n_measurements", "block_size", "height", "width",
    "seed", "noise_std",
}


def read_operator_spec(path) -> OperatorSpec:
    """Parse an operator spec file, validating per-kind key requirements."""
    kv = KeyValueFile(path)
    kv.reject_unknown(_SPEC_KEYS)
    kind = kv.get("type")
    spec = OperatorSpec(
        kind=kind,
        kernel=kv.get("kernel", str, None),
        kernel_size=kv.get("kernel_size", int, None),
        sigma=kv.get("sigma", float, None),
        density=kv.get("density", float, None),
        mask_pgm=kv.get("mask_pgm", str, None),
        subrate=kv.get("subrate", float, None),
        n_measurements=kv.get("n_measurements", int, None),
        block_size=kv.get("block_size", int, 32),
        height=kv.get("height", int, None),
        width=kv.get("width", int, None),
        seed=kv.get("seed", int, 0),
        noise_std=kv.get("noise_std", float, 0.0),
    )
    try:
        _validate_spec(spec)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return spec


def _validate_spec(spec: OperatorSpec) -> None:
    if spec.kind == "blur":
        if spec.kernel not in ("uniform", "gaussian"):
            raise ValueError(f"blur kernel must be 'uniform' or 'gaussian', got {spec.kernel!r}")
        if spec.kernel_size is None or spec.kernel_size < 1:
            raise ValueError("blur spec needs a positive kernel_size")
        if spec.kernel == "gaussian" and (spec.sigma is None or spec.sigma <= 0):
            raise ValueError("gaussian blur spec needs a positive sigma")
    elif spec.kind == "mask":
        if (spec.density is None) == (spec.mask_pgm is None):
            raise ValueError("mask spec needs exactly one of density or mask_pgm")
        if spec.density is not None and not 0.0 < spec.density <= 1.0:
            raise ValueError(f"mask density must lie in (0, 1], got {spec.density}")
    elif spec.kind == "cs":
        if (spec.subrate is None) == (spec.n_measurements is None):
            raise ValueError("cs spec needs exactly one of subrate or n_measurements")
        if spec.subrate is not None and not 0.0 < spec.subrate <= 1.0:
            raise ValueError(f"cs subrate must lie in (0, 1], got {spec.subrate}")
        if spec.block_size < 1:
            raise ValueError("cs block_size must be positive")
    else:
        raise ValueError(f"unknown operator type {spec.kind!r}")
    if spec.noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    for name in ("height", "width"):
        value = getattr(spec, name)
        if value is not None and value < 1:
            raise ValueError(f"{name} must be positive")


def write_operator_spec(spec: OperatorSpec, path) -> None:
    """Write a spec (or sidecar) file that ``read_operator_spec`` round-trips."""
    _validate_spec(spec)
    pairs = {
        "type": spec.kind,
        "kernel": spec.kernel,
        "kernel_size": spec.kernel_size,
        "sigma": spec.sigma,
        "density": spec.density,
        "mask_pgm": spec.mask_pgm,
        "subrate": spec.subrate,
        "n_measurements": spec.n_measurements,
        "block_size": spec.block_size if spec.kind == "cs" else None,
        "height": spec.height,
        "width": spec.width,
        "seed": spec.seed,
        "noise_std": spec.noise_std,
    }
    write_kv(path, pairs, header="degradation operator")


def spec_measurements(spec: OperatorSpec) -> int:
    """Measurements per block implied by a cs spec."""
    if spec.n_measurements is not None:
        return spec.n_measurements
    return int(round(spec.subrate * spec.block_size * spec.block_size))


def _spec_shape(spec: OperatorSpec, image_shape) -> tuple[int, int]:
    if spec.height is not None and spec.width is not None:
        if image_shape is not None and tuple(image_shape) != (spec.height, spec.width):
            raise ConfigError(
                f"spec is for a {spec.height}x{spec.width} image, got {tuple(image_shape)}"
            )
        return (spec.height, spec.width)
    if image_shape is None:
        raise ConfigError(f"{spec.kind} spec needs height/width keys or an image to size from")
    return (int(image_shape[0]), int(image_shape[1]))


def build_operator(spec: OperatorSpec, image_shape=None):
    """Instantiate the operator a spec describes.

    ``image_shape`` sizes shape-dependent operators when the spec does not
    carry height/width keys (a fresh spec rather than a sidecar).
    """
    if spec.kind == "blur":
        if spec.kernel == "uniform":
            kernel = uniform_kernel(spec.kernel_size)
        else:
            kernel = gaussian_kernel(spec.kernel_size, spec.sigma)
        return BlurOperator(kernel)
    if spec.kind == "mask":
        if spec.mask_pgm is not None:
            mask = read_mask_pgm(spec.mask_pgm)
            if spec.height is not None and mask.shape != (spec.height, spec.width):
                raise ConfigError(f"mask file {spec.mask_pgm} does not match spec height/width")
            return MaskOperator(mask)
        shape = _spec_shape(spec, image_shape)
        return MaskOperator(random_mask(shape, spec.density, spec.seed))
    if spec.kind == "cs":
        shape = _spec_shape(spec, image_shape)
        try:
            return BlockProjectionOperator(spec_measurements(spec), shape, spec.seed, spec.block_size)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown operator type {spec.kind!r}")


def sidecar_spec(spec: OperatorSpec, image_shape) -> OperatorSpec:
    """Pin the image shape into a spec so the sidecar is self-contained."""
    if spec.kind == "blur":
        return spec
    return replace(spec, height=int(image_shape[0]), width=int(image_shape[1]))
