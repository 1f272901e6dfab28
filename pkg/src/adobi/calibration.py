"""Bridge source images and initial coil maps from undersampled k-space.

Three pieces: the zero-filled image ``A^H y``, GRAPPA interpolation of
missing columns (kernels fitted on the ACS block), and low-resolution coil
map estimation from the apodized ACS data.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import CalibrationError, DimensionError, MultiCoilKSpace, SamplingMask, SensitivityMaps
from .forward import ForwardOperator, apply_adjoint, ifft2c

log = logging.getLogger(__name__)

RSS_FLOOR = 1e-8


def zero_filled_init(y: MultiCoilKSpace, maps: SensitivityMaps) -> np.ndarray:
    """``A^H y`` with the given maps."""
    if maps.shape != y.shape:
        raise DimensionError(f"maps {maps.shape} do not match k-space {y.shape}")
    return apply_adjoint(ForwardOperator(maps, y.mask), y)


# GRAPPA --------------------------------------------------------------------

Pattern = tuple[int, ...]


@dataclass
class GrappaKernel:
    """Per-pattern GRAPPA weights.

    A pattern is the tuple of column offsets (relative to a missing column)
    of its source columns: the ``kernel_cols // 2`` nearest acquired columns
    on the left and the rest on the right. ``weights[pattern]`` has shape
    ``(n_coils, n_coils * kernel_rows * len(pattern))`` and maps the stacked
    source samples (coil-major, then row tap, then column offset) to the
    target column of every coil. Row taps wrap circularly, as do column
    offsets, since DFT k-space is periodic.
    """

    kernel_rows: int
    kernel_cols: int
    n_coils: int
    lamda: float
    weights: dict[Pattern, np.ndarray] = field(default_factory=dict)
    residuals: dict[Pattern, float] = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)


def _row_taps(kernel_rows: int) -> np.ndarray:
    return np.arange(kernel_rows) - kernel_rows // 2


def source_pattern(kept: np.ndarray, col: int, kernel_cols: int) -> Pattern:
    """Offsets of the nearest acquired columns around ``col`` (circular)."""
    width = kept.size
    n_left = kernel_cols // 2
    n_right = kernel_cols - n_left
    if kept.sum() < kernel_cols:
        raise CalibrationError(f"need at least {kernel_cols} acquired columns, have {int(kept.sum())}")
    left, right = [], []
    d = 1
    while len(left) < n_left and d < width:
        if kept[(col - d) % width]:
            left.append(-d)
        d += 1
    d = 1
    while len(right) < n_right and d < width:
        if kept[(col + d) % width]:
            right.append(d)
        d += 1
    return tuple(sorted(left) + right)


def missing_patterns(mask: SamplingMask, kernel_cols: int) -> dict[Pattern, list[int]]:
    """Group the missing columns of ``mask`` by source pattern."""
    groups: dict[Pattern, list[int]] = {}
    for c in np.flatnonzero(~mask.kept):
        groups.setdefault(source_pattern(mask.kept, int(c), kernel_cols), []).append(int(c))
    return groups


def _gather(planes: np.ndarray, targets: np.ndarray, offsets, kernel_rows: int) -> np.ndarray:
    """Source matrix with one row per (k-space row, target column)."""
    n_c, height, width = planes.shape
    rolled = np.stack([np.roll(planes, -dr, axis=1) for dr in _row_taps(kernel_rows)])
    cols = (targets[:, None] + np.asarray(offsets)[None, :]) % width
    src = rolled[:, :, :, cols]  # (taps, coils, H, n_targets, n_offsets)
    src = src.transpose(2, 3, 1, 0, 4)
    return src.reshape(height * targets.size, -1)


def _solve(a: np.ndarray, t: np.ndarray, lamda: float) -> np.ndarray:
    if lamda == 0:
        w, *_ = np.linalg.lstsq(a, t, rcond=None)
        return w
    aha = a.conj().T @ a
    lam0 = lamda * np.real(np.trace(aha)) / aha.shape[0]
    return np.linalg.solve(aha + lam0 * np.eye(aha.shape[0]), a.conj().T @ t)


def grappa_calibrate(
    y: MultiCoilKSpace,
    kernel_rows: int = 5,
    kernel_cols: int = 4,
    lamda: float = 1e-4,
) -> GrappaKernel:
    """Fit one kernel per missing-column pattern by Tikhonov least squares on the ACS block.

    ``lamda`` is relative to the mean eigenvalue of the normal matrix;
    ``lamda=0`` uses a minimum-norm least-squares solve.
    """
    if kernel_rows < 1 or kernel_rows % 2 == 0:
        raise ValueError("kernel_rows must be a positive odd integer")
    if kernel_cols < 1:
        raise ValueError("kernel_cols must be positive")
    mask = y.mask
    kernel = GrappaKernel(kernel_rows, kernel_cols, y.n_coils, lamda)
    groups = missing_patterns(mask, kernel_cols)
    if not groups:
        return kernel
    acs = mask.acs
    if acs.size == 0:
        raise CalibrationError("mask has no ACS block")
    acs_set = set(int(c) for c in acs)
    n_unknowns = y.n_coils * kernel_rows * kernel_cols
    for pattern in groups:
        targets = np.array([t for t in acs if all(int(t + o) in acs_set for o in pattern)], dtype=int)
        n_eq = targets.size * y.shape[0]
        if n_eq < n_unknowns:
            span = max(pattern) - min(pattern) + 1
            raise CalibrationError(
                f"ACS of {acs.size} columns gives {n_eq} equations for pattern {pattern}; "
                f"need >= {n_unknowns} (an ACS block of at least {span} columns "
                f"and {n_unknowns} calibration rows)"
            )
        a = _gather(y.planes, targets, pattern, kernel_rows)
        t = y.planes[:, :, targets].transpose(1, 2, 0).reshape(-1, y.n_coils)
        w = _solve(a, t, lamda)
        fit = a @ w - t
        kernel.weights[pattern] = w.T.copy()
        kernel.residuals[pattern] = float(np.linalg.norm(fit) / max(np.linalg.norm(t), 1e-300))
    log.debug("GRAPPA: %d patterns, max residual %.3g", len(groups), kernel.max_residual)
    return kernel


def grappa_fill(kernel: GrappaKernel, y: MultiCoilKSpace) -> MultiCoilKSpace:
    """Interpolate every missing column; acquired samples are copied verbatim."""
    if y.n_coils != kernel.n_coils:
        raise DimensionError(f"kernel is for {kernel.n_coils} coils, k-space has {y.n_coils}")
    filled = np.array(y.planes)
    height = y.shape[0]
    for pattern, cols in missing_patterns(y.mask, kernel.kernel_cols).items():
        if pattern not in kernel.weights:
            raise CalibrationError(f"kernel was not calibrated for source pattern {pattern}")
        targets = np.asarray(cols)
        a = _gather(y.planes, targets, pattern, kernel.kernel_rows)
        est = a @ kernel.weights[pattern].T
        filled[:, :, targets] = est.reshape(height, targets.size, y.n_coils).transpose(2, 0, 1)
    filled[:, :, y.mask.kept] = y.planes[:, :, y.mask.kept]
    return MultiCoilKSpace(filled, SamplingMask.full(*y.shape))


def grappa_apply(kernel: GrappaKernel, y: MultiCoilKSpace, maps: SensitivityMaps | None = None) -> np.ndarray:
    """GRAPPA image: fill k-space, then coil-combine with ``maps`` (or RSS if absent)."""
    filled = grappa_fill(kernel, y)
    if maps is not None:
        return zero_filled_init(filled, maps)
    coil_images = ifft2c(filled.planes)
    return np.sqrt(np.sum(np.abs(coil_images) ** 2, axis=0)).astype(np.complex128)


# Coil maps from ACS -------------------------------------------------------

def _hann(n: int) -> np.ndarray:
    # Endpoints dropped so all n taps are positive.
    return np.hanning(n + 2)[1:-1]


def estimate_csm_from_acs(y: MultiCoilKSpace, smoothing_width: int | None = None) -> SensitivityMaps:
    """Low-resolution coil maps from the Hann-apodized central k-space.

    The window spans the ACS columns (or ``smoothing_width`` of them if
    smaller) and ``smoothing_width`` central rows; each windowed coil image
    is divided by the root-sum-of-squares over coils.
    """
    mask = y.mask
    height, width = y.shape
    acs = mask.acs
    if acs.size == 0:
        raise CalibrationError("mask has no ACS block")
    sw = acs.size if smoothing_width is None else int(smoothing_width)
    if sw < 1:
        raise ValueError("smoothing_width must be positive")
    ncol = min(sw, acs.size)
    nrow = min(sw, height)
    win_c = np.zeros(width)
    c0 = width // 2 - ncol // 2
    win_c[c0:c0 + ncol] = _hann(ncol)
    win_r = np.zeros(height)
    r0 = height // 2 - nrow // 2
    win_r[r0:r0 + nrow] = _hann(nrow)
    low = y.planes * (win_r[:, None] * win_c[None, :])
    if not np.any(low):
        raise CalibrationError("ACS region is all zero")
    coil_images = ifft2c(low)
    rss = np.sqrt(np.sum(np.abs(coil_images) ** 2, axis=0))
    return SensitivityMaps(coil_images / np.maximum(rss, RSS_FLOOR)).normalize()
