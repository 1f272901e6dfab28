"""Synthetic ground truth: ellipse phantoms, coil maps and Gaussian-pair toy data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SensitivityMaps
from .forward import fft2c, ifft2c
from .rng import as_generator, complex_normal, stream

SUPERSAMPLE = 4


@dataclass(frozen=True)
class PhantomSpec:
    """Random ellipse phantom.

    ``ellipses`` overrides the random draw with explicit
    ``(cx, cy, a, b, angle, intensity)`` tuples in normalized [-1, 1] coordinates.
    """

    size: int = 64
    n_ellipses: int = 8
    intensity_range: tuple[float, float] = (0.1, 0.5)
    phase_ramp: float = 1.0
    seed: int = 0
    ellipses: tuple | None = None

    def __post_init__(self):
        if self.size < 16:
            raise ValueError("phantom size must be >= 16")
        if self.n_ellipses < 1:
            raise ValueError("need at least one ellipse")


@dataclass(frozen=True)
class CoilModelSpec:
    """Coil array model.

    ``profile="gaussian"`` places Gaussian magnitude bumps on a ring with a
    smooth linear phase per coil. ``profile="ramp"`` gives equal-magnitude
    coils whose phase is an integer-frequency ramp along the columns; coil
    ``i`` then sees k-space shifted by ``i`` columns, which makes missing
    columns exact linear combinations of acquired ones (GRAPPA-representable).
    """

    n_coils: int = 8
    ring_radius: float = 1.1
    bump_width: float = 0.7
    phase_amplitude: float = 0.8
    normalize: bool = True
    perturbation: float = 0.1
    perturbation_bandwidth: int = 3
    profile: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        if self.n_coils < 1:
            raise ValueError("n_coils must be >= 1")
        if self.bump_width <= 0:
            raise ValueError("bump_width must be positive")
        if self.profile not in ("gaussian", "ramp"):
            raise ValueError(f"unknown coil profile {self.profile!r}")


def pixel_grid(height: int, width: int, supersample: int = 1):
    """Normalized (x, y) coordinates of pixel (sub)centres, symmetric about 0."""
    def axis(n):
        sub = (np.arange(n * supersample) + 0.5) / (n * supersample)
        return 2.0 * sub - 1.0
    yy, xx = np.meshgrid(axis(height), axis(width), indexing="ij")
    return xx, yy


def random_ellipses(spec: PhantomSpec) -> list[tuple]:
    rng = as_generator(spec.seed, "phantom")
    lo, hi = spec.intensity_range
    ellipses = [(
        rng.uniform(-0.05, 0.05),
        rng.uniform(-0.05, 0.05),
        rng.uniform(0.65, 0.85),
        rng.uniform(0.75, 0.92),
        rng.uniform(-0.3, 0.3),
        1.0,
    )]
    for _ in range(spec.n_ellipses - 1):
        r = 0.5 * np.sqrt(rng.uniform())
        phi = rng.uniform(0, 2 * np.pi)
        sign = 1.0 if rng.uniform() < 0.6 else -1.0
        ellipses.append((
            r * np.cos(phi),
            r * np.sin(phi),
            rng.uniform(0.05, 0.3),
            rng.uniform(0.05, 0.3),
            rng.uniform(0, np.pi),
            sign * rng.uniform(lo, hi),
        ))
    return ellipses


def make_phantom(spec: PhantomSpec) -> np.ndarray:
    """Anti-aliased sum of ellipse indicators with a linear phase ramp, max |x| = 1."""
    n = spec.size
    ellipses = spec.ellipses if spec.ellipses is not None else random_ellipses(spec)
    xx, yy = pixel_grid(n, n, SUPERSAMPLE)
    fine = np.zeros_like(xx)
    for cx, cy, a, b, angle, intensity in ellipses:
        c, s = np.cos(angle), np.sin(angle)
        u = (xx - cx) * c + (yy - cy) * s
        v = -(xx - cx) * s + (yy - cy) * c
        fine += intensity * ((u / a) ** 2 + (v / b) ** 2 <= 1.0)
    mag = fine.reshape(n, SUPERSAMPLE, n, SUPERSAMPLE).mean(axis=(1, 3))
    mag = np.abs(mag)
    peak = mag.max()
    if peak > 0:
        mag = mag / peak
    theta = as_generator(spec.seed, "phantom-phase").uniform(0, 2 * np.pi)
    px, py = pixel_grid(n, n)
    phase = spec.phase_ramp * (np.cos(theta) * px + np.sin(theta) * py)
    return mag * np.exp(1j * phase)


def smooth_complex_field(rng, n_fields: int, height: int, width: int, bandwidth: int) -> np.ndarray:
    """Unit-RMS complex fields band-limited to +-``bandwidth`` centred frequencies."""
    k = np.zeros((n_fields, height, width), dtype=np.complex128)
    r0, c0 = height // 2, width // 2
    b = bandwidth
    k[:, r0 - b:r0 + b + 1, c0 - b:c0 + b + 1] = complex_normal(rng, (n_fields, 2 * b + 1, 2 * b + 1))
    f = ifft2c(k)
    rms = np.sqrt(np.mean(np.abs(f) ** 2, axis=(1, 2), keepdims=True))
    return f / rms


def _gaussian_maps(spec: CoilModelSpec, height: int, width: int) -> np.ndarray:
    rng = as_generator(spec.seed, "coils")
    xx, yy = pixel_grid(height, width)
    offset = rng.uniform(0, 2 * np.pi)
    maps = np.empty((spec.n_coils, height, width), dtype=np.complex128)
    for i in range(spec.n_coils):
        ang = offset + 2 * np.pi * i / spec.n_coils
        cx, cy = spec.ring_radius * np.cos(ang), spec.ring_radius * np.sin(ang)
        mag = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * spec.bump_width ** 2))
        p0, px, py = spec.phase_amplitude * rng.uniform(-1, 1, size=3)
        maps[i] = mag * np.exp(1j * (np.pi * p0 + px * xx + py * yy))
    return maps


def _ramp_maps(spec: CoilModelSpec, height: int, width: int) -> np.ndarray:
    cols = np.arange(width)
    maps = np.empty((spec.n_coils, height, width), dtype=np.complex128)
    for i in range(spec.n_coils):
        maps[i] = np.exp(2j * np.pi * i * cols / width)[None, :] * np.ones((height, 1))
    return maps


def perturb_maps(
    maps: SensitivityMaps, perturbation: float, seed: int, bandwidth: int = 3, normalize: bool = True
) -> SensitivityMaps:
    """``S * (1 + perturbation * smooth random field)``, one field per coil, then re-normalized."""
    if perturbation == 0:
        return maps
    rng = stream(seed, "coil-perturbation")
    field = smooth_complex_field(rng, maps.n_coils, *maps.shape, bandwidth)
    out = SensitivityMaps(maps.maps * (1.0 + perturbation * field))
    return out.normalize() if normalize else out


def make_coils(spec: CoilModelSpec, height: int, width: int) -> tuple[SensitivityMaps, SensitivityMaps]:
    """True coil maps and a smoothly perturbed initial estimate of them."""
    raw = _gaussian_maps(spec, height, width) if spec.profile == "gaussian" else _ramp_maps(spec, height, width)
    true = SensitivityMaps(raw)
    if spec.normalize:
        true = true.normalize()
    initial = perturb_maps(true, spec.perturbation, spec.seed, spec.perturbation_bandwidth, spec.normalize)
    return true, initial


def make_gaussian_pair_model(
    size: int = 32,
    corr_length: float = 3.0,
    blur_width: float = 6.0,
    noise_var: float = 0.05,
    mean_amplitude: float = 0.5,
    seed: int = 0,
):
    """Smooth-spectrum Gaussian toy: ``z`` is a blurred, noisy copy of ``x0``.

    Per centred frequency ``k``: ``var0 ~ 1 / (1 + |k|^2 / corr_length^2)^2``,
    ``Z = h X0 + N`` with Gaussian ``h``. Means are a smooth deterministic image.
    """
    from .denoisers import GaussianPairModel

    r = np.arange(size) - size // 2
    ky, kx = np.meshgrid(r, r, indexing="ij")
    k2 = kx ** 2 + ky ** 2
    var0 = 1.0 / (1.0 + k2 / corr_length ** 2) ** 2
    var0 *= size * size / var0.sum()
    h = np.exp(-k2 / (2 * blur_width ** 2))
    rng = as_generator(seed, "gaussian-pair-mean")
    mean_img = mean_amplitude * smooth_complex_field(rng, 1, size, size, 2)[0]
    mean0 = fft2c(mean_img)
    return GaussianPairModel(
        mean0=mean0,
        mean_z=h * mean0,
        var0=var0,
        var_z=h ** 2 * var0 + noise_var,
        cov0z=h * var0,
    )


def sample_gaussian_pairs(model, n: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` image-domain pairs ``(x0, z)`` from a :class:`GaussianPairModel`."""
    rng = as_generator(seed, "gaussian-pair-samples")
    shape = (n, *model.shape)
    a = complex_normal(rng, shape)
    b = complex_normal(rng, shape)
    l00 = np.sqrt(model.var0)
    l10 = np.divide(np.conj(model.cov0z), l00, out=np.zeros_like(model.cov0z), where=l00 > 0)
    l11 = np.sqrt(np.maximum(model.var_z - np.abs(l10) ** 2, 0.0))
    x0k = model.mean0 + l00 * a
    zk = model.mean_z + l10 * a + l11 * b
    return ifft2c(x0k), ifft2c(zk)
