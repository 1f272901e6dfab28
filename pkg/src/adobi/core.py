"""Containers for complex images, Cartesian masks, coil maps and multi-coil k-space.

Images are plain 2-D ``complex128`` numpy arrays; the helpers here validate
shape and finiteness instead of wrapping them in another class. Masks, coil
maps and k-space stacks are frozen dataclasses whose arrays are made
read-only at construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NORMALIZATION_TOL = 1e-6


class DimensionError(ValueError):
    """Raised when array shapes or coil counts disagree."""


class CalibrationError(RuntimeError):
    """Raised when ACS data cannot support a calibration."""


class ScheduleError(ValueError):
    """Raised for invalid bridge schedules or step indices."""


class FormatError(ValueError):
    """Raised when an MRID file is malformed. ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class DegenerateModelError(ValueError):
    """Raised when a Gaussian model cannot produce a conditional mean."""


class ConfigurationError(ValueError):
    """Raised for inconsistent or unusable configuration."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def as_image(x, name: str = "image") -> np.ndarray:
    """Return ``x`` as a finite 2-D complex128 array."""
    a = np.asarray(x, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def check_same_shape(x: np.ndarray, y: np.ndarray) -> None:
    if np.shape(x) != np.shape(y):
        raise DimensionError(f"shape mismatch: {np.shape(x)} vs {np.shape(y)}")


def cimage_axpy(a: complex, x, y) -> np.ndarray:
    """Elementwise ``a * x + y``."""
    x = np.asarray(x, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    check_same_shape(x, y)
    return complex(a) * x + y


def inner_product(x, y) -> complex:
    """``sum(conj(x) * y)`` over all elements (conjugate-linear in ``x``)."""
    x = np.asarray(x, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    check_same_shape(x, y)
    return complex(np.vdot(x.ravel(), y.ravel()))


def acs_columns(width: int, acs_width: int) -> np.ndarray:
    """Indices of the ``acs_width`` contiguous columns centred on ``width // 2``."""
    start = width // 2 - acs_width // 2
    return np.arange(start, start + acs_width)


@dataclass(frozen=True, eq=False)
class SamplingMask:
    """Cartesian column (phase-encode) mask.

    ``kept`` is a boolean vector over columns. The mask acts on k-space by
    zeroing every column that is not kept, so it is an orthogonal projection.
    """

    height: int
    width: int
    kept: np.ndarray
    acs_width: int = 0

    def __post_init__(self):
        kept = np.array(self.kept, dtype=bool).reshape(-1)
        if self.height < 1 or self.width < 1:
            raise DimensionError("mask dimensions must be positive")
        if kept.shape != (self.width,):
            raise DimensionError(f"kept must have length {self.width}, got {kept.shape}")
        if not 0 <= self.acs_width <= self.width:
            raise ValueError("acs_width out of range")
        if self.acs_width and not kept[acs_columns(self.width, self.acs_width)].all():
            raise ValueError("ACS block must be a subset of the kept columns")
        object.__setattr__(self, "kept", _frozen(kept))

    @classmethod
    def from_columns(cls, height, width, columns, acs_width=0) -> SamplingMask:
        kept = np.zeros(width, dtype=bool)
        cols = np.asarray(sorted(columns), dtype=int)
        if cols.size and (cols.min() < 0 or cols.max() >= width):
            raise ValueError("column index out of range")
        kept[cols] = True
        return cls(height, width, kept, acs_width)

    @classmethod
    def full(cls, height, width) -> SamplingMask:
        return cls(height, width, np.ones(width, dtype=bool), width)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def kept_columns(self) -> frozenset[int]:
        return frozenset(int(c) for c in np.flatnonzero(self.kept))

    @property
    def acs(self) -> np.ndarray:
        return acs_columns(self.width, self.acs_width)

    @property
    def n_kept(self) -> int:
        return int(self.kept.sum())

    def apply(self, kspace) -> np.ndarray:
        """Zero the unkept columns of ``kspace`` (any leading axes)."""
        k = np.asarray(kspace)
        if k.shape[-2:] != self.shape:
            raise DimensionError(f"k-space shape {k.shape[-2:]} does not match mask {self.shape}")
        return np.where(self.kept, k, 0)

    def __eq__(self, other):
        if not isinstance(other, SamplingMask):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.acs_width == other.acs_width
            and np.array_equal(self.kept, other.kept)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SensitivityMaps:
    """Stack of ``n_coils`` complex coil maps with shape ``(n_coils, H, W)``."""

    maps: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        m = np.array(self.maps, dtype=np.complex128)
        if m.ndim == 2:
            m = m[None]
        if m.ndim != 3 or m.shape[0] < 1:
            raise DimensionError(f"maps must have shape (n_coils, H, W), got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("maps contain non-finite values")
        object.__setattr__(self, "maps", _frozen(m))
        if self.normalized and not self.satisfies_normalization():
            raise ValueError("maps flagged normalized but sum |S_i|^2 != 1 on support")

    @property
    def n_coils(self) -> int:
        return self.maps.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.maps.shape[1:]

    def sum_of_squares(self) -> np.ndarray:
        return np.sum(np.abs(self.maps) ** 2, axis=0)

    def support(self) -> np.ndarray:
        return self.sum_of_squares() > 0

    def satisfies_normalization(self, tol: float = NORMALIZATION_TOL) -> bool:
        sos = self.sum_of_squares()
        sup = sos > 0
        return bool(np.all(np.abs(sos[sup] - 1.0) <= tol))

    def normalize(self, floor: float = 0.0) -> SensitivityMaps:
        """Divide by the root-sum-of-squares so that sum |S_i|^2 = 1 on support.

        Pixels whose RSS is ``<= floor`` are zeroed and leave the support.
        """
        rss = np.sqrt(self.sum_of_squares())
        keep = rss > floor
        out = np.zeros_like(self.maps)
        out[:, keep] = self.maps[:, keep] / rss[keep]
        return SensitivityMaps(out, normalized=True)

    def __eq__(self, other):
        if not isinstance(other, SensitivityMaps):
            return NotImplemented
        return np.array_equal(self.maps, other.maps)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class MultiCoilKSpace:
    """Per-coil k-space planes ``(n_coils, H, W)`` plus the mask that produced them."""

    planes: np.ndarray
    mask: SamplingMask = field(repr=False)

    def __post_init__(self):
        p = np.array(self.planes, dtype=np.complex128)
        if p.ndim == 2:
            p = p[None]
        if p.ndim != 3:
            raise DimensionError(f"planes must have shape (n_coils, H, W), got {p.shape}")
        if p.shape[1:] != self.mask.shape:
            raise DimensionError(f"planes {p.shape[1:]} do not match mask {self.mask.shape}")
        if np.any(p[..., ~self.mask.kept] != 0):
            raise ValueError("k-space has nonzero samples outside the kept columns")
        if not np.all(np.isfinite(p)):
            raise ValueError("k-space contains non-finite values")
        object.__setattr__(self, "planes", _frozen(p))

    @property
    def n_coils(self) -> int:
        return self.planes.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.planes.shape[1:]

    def norm(self) -> float:
        return float(np.linalg.norm(self.planes))

    def with_planes(self, planes) -> MultiCoilKSpace:
        return MultiCoilKSpace(planes, self.mask)
