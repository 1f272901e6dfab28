"""Parallel-MRI measurement operator ``A = P F S``, its adjoint, masks and noise."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import (
    DimensionError,
    MultiCoilKSpace,
    SamplingMask,
    SensitivityMaps,
    acs_columns,
    as_image,
)
from .rng import as_generator, complex_normal

log = logging.getLogger(__name__)


def fft2c(x: np.ndarray) -> np.ndarray:
    """Centred unitary 2-D FFT over the last two axes (DC at ``[H//2, W//2]``)."""
    x = np.fft.ifftshift(x, axes=(-2, -1))
    k = np.fft.fft2(x, axes=(-2, -1), norm="ortho")
    return np.fft.fftshift(k, axes=(-2, -1))


def ifft2c(k: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft2c`."""
    k = np.fft.ifftshift(k, axes=(-2, -1))
    x = np.fft.ifft2(k, axes=(-2, -1), norm="ortho")
    return np.fft.fftshift(x, axes=(-2, -1))


@dataclass(frozen=True)
class ForwardOperator:
    """``A x = [P F (S_i * x)]_i`` with a unitary FFT."""

    maps: SensitivityMaps
    mask: SamplingMask

    def __post_init__(self):
        if self.maps.shape != self.mask.shape:
            raise DimensionError(f"maps {self.maps.shape} and mask {self.mask.shape} differ")

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    @property
    def n_coils(self) -> int:
        return self.maps.n_coils

    # Array-level versions broadcast over leading batch axes of x: (..., H, W).
    def forward_array(self, x: np.ndarray) -> np.ndarray:
        coil_images = self.maps.maps * np.asarray(x)[..., None, :, :]
        return self.mask.apply(fft2c(coil_images))

    def adjoint_array(self, k: np.ndarray) -> np.ndarray:
        coil_images = ifft2c(self.mask.apply(k))
        # Explicit coil loop keeps the reduction order fixed.
        out = np.conj(self.maps.maps[0]) * coil_images[..., 0, :, :]
        for i in range(1, self.n_coils):
            out = out + np.conj(self.maps.maps[i]) * coil_images[..., i, :, :]
        return out

    def normal_array(self, x: np.ndarray) -> np.ndarray:
        return self.adjoint_array(self.forward_array(x))


def apply_forward(op: ForwardOperator, x) -> MultiCoilKSpace:
    x = as_image(x)
    if x.shape != op.shape:
        raise DimensionError(f"image {x.shape} does not match operator {op.shape}")
    return MultiCoilKSpace(op.forward_array(x), op.mask)


def apply_adjoint(op: ForwardOperator, y: MultiCoilKSpace) -> np.ndarray:
    if y.n_coils != op.n_coils:
        raise DimensionError(f"k-space has {y.n_coils} coils, operator expects {op.n_coils}")
    if y.shape != op.shape:
        raise DimensionError(f"k-space {y.shape} does not match operator {op.shape}")
    return op.adjoint_array(y.planes)


def data_residual(op: ForwardOperator, x, y: MultiCoilKSpace) -> float:
    """``||y - A x||_2``."""
    return float(np.linalg.norm(y.planes - op.forward_array(x)))


def operator_norm(op: ForwardOperator, iters: int = 100, seed: int = 0) -> float:
    """Power-iteration estimate of ``||A||`` (square root of the top eigenvalue of A^H A)."""
    rng = as_generator(seed, "power-iteration")
    x = complex_normal(rng, op.shape)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        z = op.normal_array(x)
        lam = float(np.real(np.vdot(x, z)))
        nz = np.linalg.norm(z)
        if nz == 0:
            return 0.0
        x = z / nz
    return float(np.sqrt(max(lam, 0.0)))


def make_cartesian_mask(
    height: int,
    width: int,
    acceleration: int,
    acs_width: int = 24,
    seed: int = 0,
    style: str = "random",
) -> SamplingMask:
    """Column undersampling mask with a centred, fully sampled ACS block.

    ``style="random"`` keeps exactly ``round(width / acceleration)`` columns:
    the ACS block plus uniformly drawn non-ACS columns. ``style="equispaced"``
    keeps every ``acceleration``-th column (lattice anchored on the centre
    column) plus the ACS block, so its count can exceed ``width / acceleration``.
    """
    if acceleration < 1:
        raise ValueError("acceleration must be >= 1")
    if acceleration > width:
        raise ValueError(f"acceleration {acceleration} exceeds width {width}")
    if acceleration == 1:
        return SamplingMask.full(height, width)
    acs_width = min(acs_width, width)
    kept = np.zeros(width, dtype=bool)
    kept[acs_columns(width, acs_width)] = True
    if style == "random":
        target = int(round(width / acceleration))
        if target < acs_width:
            log.warning("ACS block (%d) exceeds round(width/R) = %d; keeping ACS only", acs_width, target)
        n_extra = max(target - acs_width, 0)
        rng = as_generator(seed, "mask")
        candidates = np.flatnonzero(~kept)
        kept[rng.choice(candidates, size=n_extra, replace=False)] = True
    elif style == "equispaced":
        kept[(np.arange(width) - width // 2) % acceleration == 0] = True
    else:
        raise ValueError(f"unknown mask style {style!r}")
    return SamplingMask(height, width, kept, acs_width)


def add_measurement_noise(y: MultiCoilKSpace, level: float, seed: int = 0) -> MultiCoilKSpace:
    """Add complex Gaussian noise on the kept columns with ``||e|| = level * ||y||``."""
    if level < 0:
        raise ValueError("noise level must be non-negative")
    if level == 0:
        return y
    rng = as_generator(seed, "measurement-noise")
    e = y.mask.apply(complex_normal(rng, y.planes.shape))
    ne = np.linalg.norm(e)
    if ne == 0:
        return y
    e *= level * y.norm() / ne
    return y.with_planes(y.planes + e)
