"""Diffusion-bridge sampling with data consistency and coil-map calibration.

The forward bridge mixes a clean image ``x0`` with the source image ``z``::

    x_t = (1 - alpha_t) x0 + alpha_t z + sigma_t eps

and the reverse step replaces ``x0`` by the denoiser's posterior-mean
estimate. :func:`sample` runs the full reverse loop; at every step the
estimate is pulled toward the measurements (gradient step on
``||y - A_S x||^2``) and, when calibrating, the coil maps ``S`` are refitted
by a few gradient steps on the Tikhonov-anchored data misfit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .core import DimensionError, MultiCoilKSpace, ScheduleError, SensitivityMaps
from .forward import ForwardOperator, fft2c, ifft2c
from .rng import as_generator, complex_normal, stream

log = logging.getLogger(__name__)

NOISE_MODES = ("as-written", "variance-matched", "ode")


@dataclass(frozen=True, eq=False)
class BridgeSchedule:
    """Discrete ``{alpha_t, sigma_t}``, ``t = 0..n_steps``; ``t = 0`` is the clean end."""

    alpha: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        a = np.array(self.alpha, dtype=float)
        s = np.array(self.sigma, dtype=float)
        if a.ndim != 1 or a.size < 2 or s.shape != a.shape:
            raise ScheduleError("alpha and sigma must be 1-D arrays of equal length >= 2")
        if a[0] != 0.0 or a[-1] != 1.0:
            raise ScheduleError("alpha must start at 0 and end at 1")
        if np.any(np.diff(a) <= 0):
            raise ScheduleError("alpha must be strictly increasing")
        if np.any(s < 0) or s[0] != 0.0:
            raise ScheduleError("sigma must be non-negative with sigma[0] = 0")
        a.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "sigma", s)

    @property
    def n_steps(self) -> int:
        return self.alpha.size - 1

    def check_index(self, t: int) -> int:
        if not 0 <= t <= self.n_steps:
            raise ScheduleError(f"t_index {t} outside [0, {self.n_steps}]")
        return int(t)

    def without_noise(self) -> BridgeSchedule:
        return BridgeSchedule(self.alpha, np.zeros_like(self.sigma))


def make_schedule(n_steps: int = 1000, sigma_max: float = 0.1) -> BridgeSchedule:
    """Linear ``alpha_t = t / N`` and ``sigma_t = sigma_max * sqrt(alpha_t (1 - alpha_t))``."""
    if n_steps < 1:
        raise ScheduleError("n_steps must be >= 1")
    alpha = np.linspace(0.0, 1.0, n_steps + 1)
    sigma = sigma_max * np.sqrt(alpha * (1.0 - alpha))
    sigma[0] = sigma[-1] = 0.0
    return BridgeSchedule(alpha, sigma)


def reschedule(schedule: BridgeSchedule, nfe: int) -> BridgeSchedule:
    """Coarsen to ``nfe`` steps, uniform in alpha; sigma is interpolated."""
    if not 1 <= nfe <= schedule.n_steps:
        raise ScheduleError(f"nfe must be in [1, {schedule.n_steps}], got {nfe}")
    if nfe == schedule.n_steps:
        return schedule
    alpha = np.linspace(0.0, 1.0, nfe + 1)
    sigma = np.interp(alpha, schedule.alpha, schedule.sigma)
    sigma[0] = 0.0
    return BridgeSchedule(alpha, sigma)


def forward_bridge(x0, z, t_index: int, schedule: BridgeSchedule, rng=0) -> np.ndarray:
    """Draw ``x_t`` given ``x0`` and ``z``; leading batch axes are allowed."""
    t = schedule.check_index(t_index)
    x0 = np.asarray(x0, dtype=np.complex128)
    z = np.asarray(z, dtype=np.complex128)
    if x0.shape[-2:] != z.shape[-2:]:
        raise DimensionError(f"x0 {x0.shape} and z {z.shape} differ")
    a, s = schedule.alpha[t], schedule.sigma[t]
    out = (1.0 - a) * x0 + a * z
    if s > 0:
        out = out + s * complex_normal(as_generator(rng, "bridge", t), out.shape)
    return out


def noise_coefficient(t_index: int, schedule: BridgeSchedule, noise_mode: str) -> float:
    t = schedule.check_index(t_index)
    if t < 1:
        raise ScheduleError("reverse step needs t_index >= 1")
    a_t, a_prev = schedule.alpha[t], schedule.alpha[t - 1]
    s_t, s_prev = schedule.sigma[t], schedule.sigma[t - 1]
    beta = a_prev / a_t
    if noise_mode == "as-written":
        return s_t * beta - s_prev
    if noise_mode == "variance-matched":
        return float(np.sqrt(max(0.0, s_prev ** 2 - beta ** 2 * s_t ** 2)))
    if noise_mode == "ode":
        return 0.0
    raise ValueError(f"unknown noise mode {noise_mode!r}")


def ddb_step(x0_hat, x_t, t_index: int, schedule: BridgeSchedule, noise_mode: str = "variance-matched", rng=0):
    """One reverse step ``x_{t-1} = (1 - b) x0_hat + b x_t + c eps`` with ``b = alpha_{t-1} / alpha_t``.

    ``c`` depends on ``noise_mode``: ``"as-written"`` uses ``sigma_t b - sigma_{t-1}``,
    ``"variance-matched"`` uses ``sqrt(max(0, sigma_{t-1}^2 - b^2 sigma_t^2))`` so the
    marginal noise level lands on ``sigma_{t-1}``, and ``"ode"`` adds no noise.
    """
    t = schedule.check_index(t_index)
    if t < 1:
        raise ScheduleError("reverse step needs t_index >= 1")
    if schedule.alpha[t] == 0:
        raise ScheduleError("alpha_t = 0 at t >= 1")
    x0_hat = np.asarray(x0_hat, dtype=np.complex128)
    x_t = np.asarray(x_t, dtype=np.complex128)
    if x0_hat.shape != x_t.shape:
        raise DimensionError(f"x0_hat {x0_hat.shape} and x_t {x_t.shape} differ")
    beta = schedule.alpha[t - 1] / schedule.alpha[t]
    coef = noise_coefficient(t, schedule, noise_mode)
    out = (1.0 - beta) * x0_hat + beta * x_t
    if coef != 0.0:
        out = out + coef * complex_normal(as_generator(rng, "reverse", t), out.shape)
    return out


# Data consistency --------------------------------------------------------

def data_gradient(x, y: MultiCoilKSpace, maps: SensitivityMaps) -> np.ndarray:
    """``A^H (A x - y)``: the gradient of ``0.5 ||A x - y||^2``."""
    op = ForwardOperator(maps, y.mask)
    return op.adjoint_array(op.forward_array(x) - y.planes)


def consistency_update(x0_hat, y: MultiCoilKSpace, maps: SensitivityMaps, gamma1: float) -> np.ndarray:
    """``x0_hat - gamma1 * A^H (A x0_hat - y)`` (the factor 2 of the squared norm sits in ``gamma1``)."""
    x0_hat = np.asarray(x0_hat, dtype=np.complex128)
    if x0_hat.shape[-2:] != y.shape or maps.n_coils != y.n_coils or maps.shape != y.shape:
        raise DimensionError("image, maps and k-space shapes are inconsistent")
    return x0_hat - gamma1 * data_gradient(x0_hat, y, maps)


# Coil-map calibration ----------------------------------------------------

def csm_objective(maps: np.ndarray, x, y: MultiCoilKSpace, maps_initial: np.ndarray, lam: float) -> float:
    """``||y - P F (S x)||^2 + lam ||S - S_init||^2``."""
    r = y.mask.apply(fft2c(maps * x)) - y.planes
    return float(np.sum(np.abs(r) ** 2) + lam * np.sum(np.abs(maps - maps_initial) ** 2))


def csm_gradient(maps: np.ndarray, x, y: MultiCoilKSpace, maps_initial: np.ndarray, lam: float) -> np.ndarray:
    """Per-coil ``conj(x) F^H P^H (P F (S_i x) - y_i) + lam (S_i - S_init,i)``.

    This is the gradient of half the objective, so the directional derivative
    of :func:`csm_objective` along ``d`` is ``2 Re <g, d>``.
    """
    r = y.mask.apply(fft2c(maps * x)) - y.planes
    return np.conj(x) * ifft2c(y.mask.apply(r)) + lam * (maps - maps_initial)


def csm_update(
    maps: SensitivityMaps,
    x0_hat,
    y: MultiCoilKSpace,
    maps_initial: SensitivityMaps,
    lam: float,
    inner_steps: int = 5,
    lr: float = 1.0,
    return_history: bool = False,
):
    """Gradient descent on :func:`csm_objective` with step halving.

    Each iteration starts from step ``lr`` and halves it until the objective
    does not increase; if no step helps, the loop stops early.
    """
    if lam < 0:
        raise ValueError("lam must be non-negative")
    x = np.asarray(x0_hat, dtype=np.complex128)
    if x.shape != maps.shape or maps.shape != maps_initial.shape or maps.n_coils != y.n_coils:
        raise DimensionError("maps, image and k-space shapes are inconsistent")
    s = np.array(maps.maps)
    s0 = maps_initial.maps
    j = csm_objective(s, x, y, s0, lam)
    history = [j]
    for _ in range(inner_steps):
        g = csm_gradient(s, x, y, s0, lam)
        step = lr
        for _ in range(40):
            cand = s - step * g
            j_new = csm_objective(cand, x, y, s0, lam)
            if j_new <= j:
                break
            step *= 0.5
        else:
            break
        s, j = cand, j_new
        history.append(j)
    out = SensitivityMaps(s)
    return (out, history) if return_history else out


# Sampling loop ------------------------------------------------------------

Denoiser = Callable[[np.ndarray, int, BridgeSchedule], np.ndarray]


@dataclass(frozen=True)
class SamplerConfig:
    """Reverse-loop settings.

    ``csm_lambda`` is relative: the absolute Tikhonov weight is
    ``csm_lambda * ||y||^2 / ||S_initial||^2``. ``consistency`` selects where
    the data-consistency gradient is applied: ``"x0"`` corrects the
    posterior-mean estimate before resampling, ``"xt"`` adds
    ``gamma1 A^H (y - A x0_hat)`` to the resampled state instead.
    """

    nfe: int = 10
    gamma1: float = 1.0
    csm_lambda: float = 1e-2
    csm_steps: int = 5
    csm_lr: float = 1.0
    noise_mode: str = "variance-matched"
    calibrate: bool = True
    consistency: str = "x0"
    seed: int = 0

    def __post_init__(self):
        if self.nfe < 1:
            raise ValueError("nfe must be >= 1")
        if self.gamma1 < 0:
            raise ValueError("gamma1 must be non-negative")
        if self.noise_mode not in NOISE_MODES:
            raise ValueError(f"noise_mode must be one of {NOISE_MODES}")
        if self.consistency not in ("x0", "xt"):
            raise ValueError("consistency must be 'x0' or 'xt'")


@dataclass
class StepRecord:
    t: int
    data_residual: float
    csm_change: float
    gamma: float


@dataclass
class SampleTrace:
    steps: list[StepRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.steps)

    @property
    def residuals(self) -> np.ndarray:
        return np.array([s.data_residual for s in self.steps])


@dataclass
class SampleResult:
    image: np.ndarray
    maps: SensitivityMaps
    trace: SampleTrace


def _guarded_consistency(x0, y, maps, gamma, max_halvings=30):
    op = ForwardOperator(maps, y.mask)
    r0 = np.linalg.norm(op.forward_array(x0) - y.planes)
    g = op.adjoint_array(op.forward_array(x0) - y.planes)
    for _ in range(max_halvings):
        x = x0 - gamma * g
        if np.linalg.norm(op.forward_array(x) - y.planes) <= r0:
            return x, gamma
        gamma *= 0.5
    log.warning("consistency step could not reduce the residual; skipped")
    return x0, 0.0


def sample(
    y: MultiCoilKSpace,
    z,
    maps_initial: SensitivityMaps,
    denoiser: Denoiser,
    schedule: BridgeSchedule,
    config: SamplerConfig,
    sample_index: int = 0,
) -> SampleResult:
    """Run the reverse bridge from ``z`` to a reconstruction.

    With ``calibrate=False`` this is a consistent direct diffusion bridge;
    with ``gamma1=0`` as well it is the plain bridge.
    """
    z = np.asarray(z, dtype=np.complex128)
    if z.shape != y.shape or maps_initial.shape != y.shape or maps_initial.n_coils != y.n_coils:
        raise DimensionError("z, maps and k-space shapes are inconsistent")
    sched = reschedule(schedule, config.nfe)
    if config.noise_mode == "ode":
        sched = sched.without_noise()
    seed = config.seed
    x = forward_bridge(np.zeros_like(z), z, sched.n_steps, sched, stream(seed, sample_index, "init"))
    maps = maps_initial
    lam = config.csm_lambda * float(np.sum(np.abs(y.planes) ** 2)) / max(
        float(np.sum(np.abs(maps_initial.maps) ** 2)), 1e-300
    )
    trace = SampleTrace()
    x0p = x
    for t in range(sched.n_steps, 0, -1):
        x0 = denoiser(x, t, sched)
        gamma = config.gamma1
        if gamma > 0 and config.consistency == "x0":
            x0p, used = _guarded_consistency(x0, y, maps, gamma)
            if used != gamma:
                log.warning("step t=%d: gamma1 reduced from %g to %g to avoid residual growth", t, gamma, used)
                gamma = used
        else:
            x0p = x0
        prev_maps = maps
        if config.calibrate:
            maps = csm_update(maps, x0p, y, maps_initial, lam, config.csm_steps, config.csm_lr)
        rng = stream(seed, sample_index, t, "resample")
        x = ddb_step(x0p, x, t, sched, config.noise_mode, rng)
        if config.consistency == "xt" and gamma > 0:
            x = x - gamma * data_gradient(x0, y, prev_maps)
        op = ForwardOperator(maps, y.mask)
        trace.steps.append(StepRecord(
            t=t,
            data_residual=float(np.linalg.norm(y.planes - op.forward_array(x0p))),
            csm_change=float(np.linalg.norm(maps.maps - prev_maps.maps)),
            gamma=gamma,
        ))
    return SampleResult(x, maps, trace)


@dataclass
class EnsembleResult:
    mean: np.ndarray
    std: np.ndarray
    mean_complex: np.ndarray
    runs: list[SampleResult]


def sample_ensemble(
    y: MultiCoilKSpace,
    z,
    maps_initial: SensitivityMaps,
    denoiser: Denoiser,
    schedule: BridgeSchedule,
    config: SamplerConfig,
    n_samples: int,
    seeds=None,
) -> EnsembleResult:
    """Repeat :func:`sample` with seeds ``config.seed + k`` (or ``seeds``).

    Returns the pixel-wise mean and standard deviation of the magnitudes,
    the complex mean, and every run.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if seeds is None:
        seeds = [config.seed + k for k in range(n_samples)]
    seeds = [int(s) for s in seeds]
    if len(seeds) != n_samples:
        raise ValueError("len(seeds) must equal n_samples")
    if len(set(seeds)) != len(seeds):
        raise ValueError("ensemble seeds must be distinct")
    runs = [sample(y, z, maps_initial, denoiser, schedule, replace(config, seed=s)) for s in seeds]
    stack = np.stack([r.image for r in runs])
    mags = np.abs(stack)
    return EnsembleResult(mags.mean(axis=0), mags.std(axis=0), stack.mean(axis=0), runs)
