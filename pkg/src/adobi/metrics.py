"""Reconstruction metrics on magnitude images and CSV reporting."""

from __future__ import annotations

import csv
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import DimensionError, check_same_shape

SSIM_NOTE = "ssim: uniform 7x7 windows (valid region), magnitude images, data range = ref peak"
PER_SLICE_FIELDS = ["method", "seed", "psnr", "ssim", "nmse", "residual", "runtime_s"]
AGGREGATE_FIELDS = ["method", "metric", "mean", "std", "n", "outliers"]
METRICS = ("psnr", "ssim", "nmse", "residual", "runtime_s")


@dataclass
class ReconReport:
    method: str
    psnr: float
    ssim: float
    nmse: float
    data_residual: float = float("nan")
    runtime_s: float = 0.0
    seed: int = 0

    @property
    def exact_match(self) -> bool:
        return math.isinf(self.psnr)

    def row(self) -> dict:
        d = asdict(self)
        return {
            "method": d["method"],
            "seed": d["seed"],
            "psnr": d["psnr"],
            "ssim": d["ssim"],
            "nmse": d["nmse"],
            "residual": d["data_residual"],
            "runtime_s": d["runtime_s"],
        }


def _mags(ref, test):
    ref = np.abs(np.asarray(ref))
    test = np.abs(np.asarray(test))
    check_same_shape(ref, test)
    return ref, test


def psnr(ref, test) -> float:
    """``10 log10(peak^2 / MSE)`` on magnitudes, peak = max |ref|; ``inf`` on exact match."""
    ref, test = _mags(ref, test)
    peak = ref.max()
    if peak == 0:
        raise ValueError("reference image is identically zero")
    mse = np.mean((ref - test) ** 2)
    if mse == 0:
        return math.inf
    return float(10 * np.log10(peak ** 2 / mse))


def nmse(ref, test) -> float:
    """``||x_hat - x||^2 / ||x||^2`` on the complex images."""
    ref = np.asarray(ref)
    test = np.asarray(test)
    check_same_shape(ref, test)
    return float(np.sum(np.abs(test - ref) ** 2) / np.sum(np.abs(ref) ** 2))


def ssim(ref, test, window: int = 7, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM over all valid ``window x window`` uniform windows of the magnitudes.

    Local statistics use population (1/N) moments; the dynamic range is the
    peak magnitude of ``ref``.
    """
    ref, test = _mags(ref, test)
    if window % 2 == 0 or window < 1:
        raise ValueError("window must be a positive odd integer")
    if window > min(ref.shape):
        raise DimensionError(f"window {window} larger than image {ref.shape}")
    data_range = ref.max()
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    a = sliding_window_view(ref, (window, window))
    b = sliding_window_view(test, (window, window))
    mu_a = a.mean(axis=(-2, -1))
    mu_b = b.mean(axis=(-2, -1))
    var_a = a.var(axis=(-2, -1))
    var_b = b.var(axis=(-2, -1))
    # Same form as the variances so identical images give exactly 1.
    cov = ((a - mu_a[..., None, None]) * (b - mu_b[..., None, None])).mean(axis=(-2, -1))
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    # Both images zero everywhere in a window with zero data range.
    s = np.divide(num, den, out=np.ones_like(num), where=den != 0)
    return float(s.mean())


def evaluate(method: str, ref, test, residual=float("nan"), runtime_s=0.0, seed=0) -> ReconReport:
    return ReconReport(method, psnr(ref, test), ssim(ref, test), nmse(ref, test), residual, runtime_s, seed)


def iqr_outliers(values) -> np.ndarray:
    """Indices outside ``[Q1 - 1.5 IQR, Q3 + 1.5 IQR]``."""
    v = np.asarray(values, dtype=float)
    finite = np.isfinite(v)
    if finite.sum() == 0:
        return np.array([], dtype=int)
    q1, q3 = np.percentile(v[finite], [25, 75])
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    return np.flatnonzero(finite & ((v < lo) | (v > hi)))


def aggregate(reports) -> list[dict]:
    """One row per (method, metric): mean, population std, count and IQR outliers (by seed)."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to aggregate")
    by_method: OrderedDict[str, list[ReconReport]] = OrderedDict()
    for r in reports:
        by_method.setdefault(r.method, []).append(r)
    rows = []
    for method, rs in by_method.items():
        for metric in METRICS:
            attr = "data_residual" if metric == "residual" else metric
            vals = np.array([getattr(r, attr) for r in rs], dtype=float)
            idx = iqr_outliers(vals)
            # Exact matches give inf PSNR; the mean is then inf and the std nan.
            with np.errstate(invalid="ignore"):
                mean, std = float(np.mean(vals)), float(np.std(vals))
            rows.append({
                "method": method,
                "metric": metric,
                "mean": mean,
                "std": std,
                "n": len(vals),
                "outliers": ";".join(str(rs[i].seed) for i in idx),
            })
    return rows


def write_per_slice_csv(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {SSIM_NOTE}\n")
        w = csv.DictWriter(fh, fieldnames=PER_SLICE_FIELDS)
        w.writeheader()
        for r in reports:
            w.writerow(r.row())


def write_aggregate_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {SSIM_NOTE}\n")
        w = csv.DictWriter(fh, fieldnames=AGGREGATE_FIELDS)
        w.writeheader()
        w.writerows(rows)


def read_csv(path) -> list[dict]:
    with open(path) as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def write_pgm(path, image, vmax: float | None = None) -> None:
    """8-bit binary portable graymap (P5) of a non-negative image scaled so ``vmax`` maps to 255."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise DimensionError("PGM needs a 2-D image")
    top = float(img.max()) if vmax is None else float(vmax)
    scaled = np.zeros_like(img) if top <= 0 else np.clip(img / top, 0, 1) * 255
    data = np.round(scaled).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a P5 file in the exact header layout written by :func:`write_pgm`."""
    raw = open(path, "rb").read()
    magic, dims, _maxval, data = raw.split(b"\n", 3)
    if magic != b"P5":
        raise ValueError("not a binary PGM")
    w, h = (int(v) for v in dims.split())
    return np.frombuffer(data[: w * h], dtype=np.uint8).reshape(h, w)
