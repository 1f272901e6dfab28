"""Posterior-mean estimators ``E[x0 | x_t]`` for the bridge.

``GaussianPairModel`` is the exact MMSE estimator when ``(x0, z)`` are
jointly circular Gaussian and independent across (centred, unitary) Fourier
bins. ``RidgeDenoiser`` is a learned affine patch filter, one per alpha bin,
fitted in closed form on simulated bridge states.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bridge import BridgeSchedule, forward_bridge
from .core import ConfigurationError, DegenerateModelError, DimensionError
from .forward import fft2c, ifft2c
from .mrid import load_array, save_array
from .rng import as_generator, stream


@dataclass(frozen=True, eq=False)
class GaussianPairModel:
    """Per-frequency joint Gaussian for ``(x0, z)``.

    ``cov0z`` is ``E[(X0 - mean0) conj(Z - mean_z)]``.
    """

    mean0: np.ndarray
    mean_z: np.ndarray
    var0: np.ndarray
    var_z: np.ndarray
    cov0z: np.ndarray

    def __post_init__(self):
        shape = np.shape(self.mean0)
        for name in ("mean0", "mean_z", "var0", "var_z", "cov0z"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != shape:
                raise DimensionError(f"{name} has shape {arr.shape}, expected {shape}")
            dtype = float if name in ("var0", "var_z") else np.complex128
            object.__setattr__(self, name, np.array(arr, dtype=dtype))
        if np.any(self.var0 < 0) or np.any(self.var_z < 0):
            raise ValueError("variances must be non-negative")
        slack = 1e-9 * (self.var0 * self.var_z) + 1e-300
        if np.any(np.abs(self.cov0z) ** 2 > self.var0 * self.var_z + slack):
            raise ValueError("covariance block is not positive semidefinite")

    @property
    def shape(self) -> tuple[int, int]:
        return self.mean0.shape

    @classmethod
    def fit(cls, x0s, zs) -> GaussianPairModel:
        """Moment estimates from image-domain sample stacks ``(n, H, W)``."""
        x0k = fft2c(np.asarray(x0s, dtype=np.complex128))
        zk = fft2c(np.asarray(zs, dtype=np.complex128))
        m0, mz = x0k.mean(axis=0), zk.mean(axis=0)
        d0, dz = x0k - m0, zk - mz
        return cls(
            mean0=m0,
            mean_z=mz,
            var0=np.mean(np.abs(d0) ** 2, axis=0),
            var_z=np.mean(np.abs(dz) ** 2, axis=0),
            cov0z=np.mean(d0 * np.conj(dz), axis=0),
        )

    def bridge_moments(self, alpha: float, sigma: float):
        """Mean and variance of ``X_t`` and ``Cov(X0, X_t)`` per frequency."""
        a = alpha
        mean_t = (1 - a) * self.mean0 + a * self.mean_z
        var_t = (1 - a) ** 2 * self.var0 + a ** 2 * self.var_z + 2 * a * (1 - a) * self.cov0z.real + sigma ** 2
        cov = (1 - a) * self.var0 + a * self.cov0z
        return mean_t, var_t, cov

    def gain(self, alpha: float, sigma: float) -> np.ndarray:
        _, var_t, cov = self.bridge_moments(alpha, sigma)
        tiny = 1e-12 * max(float(var_t.max()), 1e-300)
        return np.divide(cov, var_t, out=np.zeros_like(cov), where=var_t > tiny)

    def __call__(self, x_t, t_index, schedule):
        return gaussian_mmse(self, x_t, t_index, schedule)


def gaussian_mmse(model: GaussianPairModel, x_t, t_index: int, schedule: BridgeSchedule) -> np.ndarray:
    """Exact ``E[x0 | x_t]`` under ``model``; batch axes in front of ``(H, W)`` are allowed."""
    t = schedule.check_index(t_index)
    x_t = np.asarray(x_t, dtype=np.complex128)
    if x_t.shape[-2:] != model.shape:
        raise DimensionError(f"x_t {x_t.shape[-2:]} does not match model {model.shape}")
    a, s = schedule.alpha[t], schedule.sigma[t]
    mean_t, var_t, cov = model.bridge_moments(a, s)
    dev = fft2c(x_t) - mean_t
    tiny = 1e-12 * max(float(var_t.max()), 1e-300)
    flat = var_t <= tiny
    if np.any(flat):
        scale = 1.0 + np.abs(mean_t[flat])
        if np.any(np.abs(dev[..., flat]) > 1e-6 * scale):
            raise DegenerateModelError("x_t deviates from the mean at a zero-variance frequency")
    gain = np.divide(cov, var_t, out=np.zeros_like(cov), where=~flat)
    return ifft2c(model.mean0 + gain * dev)


# Ridge patch denoiser -----------------------------------------------------

def patch_features(x: np.ndarray, radius: int) -> np.ndarray:
    """Circular ``(2r+1)^2`` neighbourhood of every pixel plus a constant 1: ``(..., H, W, F)``."""
    x = np.asarray(x, dtype=np.complex128)
    cols = []
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            cols.append(np.roll(x, (-dy, -dx), axis=(-2, -1)))
    cols.append(np.ones_like(x))
    return np.stack(cols, axis=-1)


def alpha_bin(alpha: float, bins: int) -> int:
    return min(int(alpha * bins), bins - 1)


@dataclass(eq=False)
class RidgeDenoiser:
    """Affine patch filter per alpha bin: ``x0_hat(p) = w_b . [patch(x_t, p), 1]``."""

    schedule: BridgeSchedule
    time_bins: int
    patch_radius: int
    ridge_weight: float
    weights: np.ndarray
    trained: np.ndarray
    train_mse: np.ndarray
    gram: np.ndarray | None = field(default=None, repr=False)
    rhs: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_features(self) -> int:
        return (2 * self.patch_radius + 1) ** 2 + 1

    def bin_of(self, alpha: float) -> int:
        b = alpha_bin(alpha, self.time_bins)
        if not self.trained[b]:
            raise ConfigurationError(f"alpha bin {b} was never trained")
        return b

    def apply_alpha(self, x_t, alpha: float) -> np.ndarray:
        b = self.bin_of(alpha)
        return patch_features(x_t, self.patch_radius) @ self.weights[b]

    def __call__(self, x_t, t_index, schedule):
        return self.apply_alpha(x_t, schedule.alpha[schedule.check_index(t_index)])


def ridge_apply(d: RidgeDenoiser, x_t, t_index: int) -> np.ndarray:
    """Apply the bin of training-schedule index ``t_index``."""
    return d.apply_alpha(x_t, d.schedule.alpha[d.schedule.check_index(t_index)])


def ridge_train(
    pairs,
    schedule: BridgeSchedule,
    bins: int = 16,
    patch_radius: int = 2,
    ridge_weight: float = 1e-6,
    seed: int = 0,
    draws: int = 1,
) -> RidgeDenoiser:
    """Closed-form ridge fit of ``x0`` from patches of ``x_t``, one map per alpha bin.

    For every bin and every ``(x0, z)`` pair, ``draws`` time indices are
    sampled uniformly among the schedule steps falling in the bin and
    ``x_t`` is drawn from the forward bridge. The penalty is
    ``ridge_weight * n_rows * ||w||^2``.
    """
    if ridge_weight <= 0:
        raise ValueError("ridge_weight must be positive")
    x0s = np.asarray([p[0] for p in pairs], dtype=np.complex128)
    zs = np.asarray([p[1] for p in pairs], dtype=np.complex128)
    if x0s.ndim != 3 or x0s.shape != zs.shape or len(x0s) == 0:
        raise DimensionError("pairs must be a non-empty list of equal-shape (x0, z) images")
    n_feat = (2 * patch_radius + 1) ** 2 + 1
    bin_idx = np.array([alpha_bin(a, bins) for a in schedule.alpha])
    weights = np.zeros((bins, n_feat), dtype=np.complex128)
    trained = np.zeros(bins, dtype=bool)
    mse = np.full(bins, np.nan)
    gram = np.zeros((bins, n_feat, n_feat), dtype=np.complex128)
    rhs = np.zeros((bins, n_feat), dtype=np.complex128)
    rng = as_generator(seed, "ridge-train")
    for b in range(bins):
        steps = np.flatnonzero(bin_idx == b)
        if steps.size == 0:
            continue
        yy = 0.0
        n_rows = 0
        for d in range(draws):
            ts = rng.choice(steps, size=len(x0s))
            xt = np.stack([
                forward_bridge(x0s[i], zs[i], int(ts[i]), schedule, stream(seed, b, d, i, "ridge-xt"))
                for i in range(len(x0s))
            ])
            f = patch_features(xt, patch_radius).reshape(-1, n_feat)
            target = x0s.reshape(-1)
            gram[b] += f.conj().T @ f
            rhs[b] += f.conj().T @ target
            yy += float(np.sum(np.abs(target) ** 2))
            n_rows += target.size
        lam = ridge_weight * n_rows
        w = np.linalg.solve(gram[b] + lam * np.eye(n_feat), rhs[b])
        weights[b] = w
        trained[b] = True
        sse = yy - 2 * np.real(np.vdot(w, rhs[b])) + np.real(np.vdot(w, gram[b] @ w))
        mse[b] = max(sse, 0.0) / n_rows
        gram[b] += lam * np.eye(n_feat)
    return RidgeDenoiser(schedule, bins, patch_radius, ridge_weight, weights, trained, mse, gram, rhs)


# Persistence --------------------------------------------------------------

def save_denoiser(path, d) -> None:
    """Write the weights as an MRID ``denoiser`` array plus a JSON sidecar (``.json``)."""
    path = Path(path)
    if isinstance(d, GaussianPairModel):
        arr = np.stack([d.mean0, d.mean_z, d.var0, d.var_z, d.cov0z]).astype(np.complex128)
        meta = {"kind": "gaussian-pair"}
    elif isinstance(d, RidgeDenoiser):
        arr = d.weights
        meta = {
            "kind": "ridge",
            "time_bins": d.time_bins,
            "patch_radius": d.patch_radius,
            "ridge_weight": d.ridge_weight,
            "trained": d.trained.tolist(),
            "train_mse": [None if np.isnan(v) else float(v) for v in d.train_mse],
            "alpha": d.schedule.alpha.tolist(),
            "sigma": d.schedule.sigma.tolist(),
        }
    else:
        raise TypeError(f"cannot save {type(d).__name__}")
    save_array(path, arr, "denoiser")
    path.with_suffix(".json").write_text(json.dumps(meta, indent=1) + "\n")


def load_denoiser(path):
    path = Path(path)
    _, arr = load_array(path, "denoiser")
    meta = json.loads(path.with_suffix(".json").read_text())
    if meta["kind"] == "gaussian-pair":
        return GaussianPairModel(arr[0], arr[1], arr[2].real, arr[3].real, arr[4])
    if meta["kind"] == "ridge":
        return RidgeDenoiser(
            schedule=BridgeSchedule(meta["alpha"], meta["sigma"]),
            time_bins=meta["time_bins"],
            patch_radius=meta["patch_radius"],
            ridge_weight=meta["ridge_weight"],
            weights=arr,
            trained=np.array(meta["trained"], dtype=bool),
            train_mse=np.array([np.nan if v is None else v for v in meta["train_mse"]]),
        )
    raise ConfigurationError(f"unknown denoiser kind {meta['kind']!r}")
