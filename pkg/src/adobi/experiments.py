"""Experiment harness shared by the CLI, the scripts and the acceptance suite.

A *case* is one simulated slice: phantom, true and initial coil maps, mask
and measured k-space. The mask and coil geometry are fixed by the experiment
seed; the phantom, the coil-map perturbation and the measurement noise are
drawn from the case seed. Denoisers are fitted on training cases whose
seeds start at ``TRAIN_SEED_OFFSET`` so they never overlap test seeds.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass

import numpy as np

from .bridge import BridgeSchedule, SampleTrace, SamplerConfig, make_schedule, sample, sample_ensemble
from .calibration import estimate_csm_from_acs, grappa_apply, grappa_calibrate, zero_filled_init
from .core import ConfigurationError, MultiCoilKSpace, SamplingMask, SensitivityMaps
from .denoisers import GaussianPairModel, load_denoiser, ridge_train
from .forward import ForwardOperator, add_measurement_noise, apply_forward, data_residual, make_cartesian_mask
from .phantoms import CoilModelSpec, PhantomSpec, make_coils, make_phantom, perturb_maps

TRAIN_SEED_OFFSET = 1_000_000
METHODS = ("zf", "grappa", "ddb", "cddb", "adobi")


@dataclass(frozen=True)
class ExperimentConfig:
    # phantom and coils
    size: int = 64
    n_ellipses: int = 8
    phase_ramp: float = 1.0
    n_coils: int = 8
    coil_profile: str = "gaussian"
    perturbation: float = 0.1
    maps_source: str = "perturbed"
    # acquisition
    acceleration: int = 4
    acs_width: int = 8
    mask_style: str = "random"
    noise_level: float = 0.0
    # reconstruction
    init: str = "zf"
    method: str = "adobi"
    denoiser: str = "gaussian-oracle"
    n_train: int = 200
    n_steps: int = 1000
    sigma_max: float = 0.1
    nfe: int = 10
    gamma1: float = 1.0
    csm_lambda: float = 1e-2
    csm_steps: int = 5
    csm_lr: float = 1.0
    noise_mode: str = "variance-matched"
    consistency: str = "x0"
    grappa_rows: int = 5
    grappa_cols: int = 4
    grappa_lambda: float = 1e-4
    ridge_bins: int = 16
    ridge_radius: int = 2
    ridge_weight: float = 1e-6
    samples: int = 1
    seed: int = 0
    seeds: int = 1
    out: str = "out"

    def __post_init__(self):
        if self.init not in ("zf", "grappa"):
            raise ConfigurationError(f"init must be zf or grappa, got {self.init!r}")
        if self.method not in METHODS:
            raise ConfigurationError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.maps_source not in ("perturbed", "acs", "true"):
            raise ConfigurationError(f"maps_source must be perturbed, acs or true, got {self.maps_source!r}")
        try:
            self.sampler()
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        if self.samples < 1 or self.seeds < 1 or self.n_train < 1:
            raise ConfigurationError("samples, seeds and n_train must be >= 1")

    def sampler(self, method: str | None = None) -> SamplerConfig:
        method = method or self.method
        return SamplerConfig(
            nfe=self.nfe,
            gamma1=0.0 if method == "ddb" else self.gamma1,
            csm_lambda=self.csm_lambda,
            csm_steps=self.csm_steps,
            csm_lr=self.csm_lr,
            noise_mode=self.noise_mode,
            calibrate=method == "adobi",
            consistency=self.consistency,
            seed=self.seed,
        )

    def schedule(self) -> BridgeSchedule:
        return make_schedule(self.n_steps, self.sigma_max)

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)


@dataclass
class Case:
    seed: int
    image: np.ndarray
    true_maps: SensitivityMaps
    initial_maps: SensitivityMaps
    mask: SamplingMask
    kspace: MultiCoilKSpace


def experiment_mask(cfg: ExperimentConfig) -> SamplingMask:
    return make_cartesian_mask(cfg.size, cfg.size, cfg.acceleration, cfg.acs_width, cfg.seed, cfg.mask_style)


def simulate_case(cfg: ExperimentConfig, seed: int) -> Case:
    x = make_phantom(PhantomSpec(size=cfg.size, n_ellipses=cfg.n_ellipses, phase_ramp=cfg.phase_ramp, seed=seed))
    coil_spec = CoilModelSpec(n_coils=cfg.n_coils, perturbation=0.0, profile=cfg.coil_profile, seed=cfg.seed)
    true_maps, _ = make_coils(coil_spec, cfg.size, cfg.size)
    initial = perturb_maps(true_maps, cfg.perturbation, seed, coil_spec.perturbation_bandwidth)
    mask = experiment_mask(cfg)
    y = apply_forward(ForwardOperator(true_maps, mask), x)
    y = add_measurement_noise(y, cfg.noise_level, seed)
    if cfg.maps_source == "acs":
        initial = estimate_csm_from_acs(y)
    elif cfg.maps_source == "true":
        initial = true_maps
    return Case(seed, x, true_maps, initial, mask, y)


def source_image(case: Case, cfg: ExperimentConfig, init: str | None = None) -> np.ndarray:
    """Bridge source ``z``: zero-filled or GRAPPA, coil-combined with the initial maps."""
    init = init or cfg.init
    if init == "zf":
        return zero_filled_init(case.kspace, case.initial_maps)
    kernel = grappa_calibrate(case.kspace, cfg.grappa_rows, cfg.grappa_cols, cfg.grappa_lambda)
    return grappa_apply(kernel, case.kspace, case.initial_maps)


def training_pairs(cfg: ExperimentConfig, n: int | None = None, init: str | None = None):
    n = cfg.n_train if n is None else n
    x0s, zs = [], []
    for i in range(n):
        case = simulate_case(cfg, TRAIN_SEED_OFFSET + i)
        x0s.append(case.image)
        zs.append(source_image(case, cfg, init))
    return np.stack(x0s), np.stack(zs)


def fit_oracle(cfg: ExperimentConfig, init: str | None = None) -> GaussianPairModel:
    """Gaussian-pair posterior-mean model fitted to simulated (phantom, source) pairs."""
    return GaussianPairModel.fit(*training_pairs(cfg, init=init))


def build_denoiser(cfg: ExperimentConfig, init: str | None = None):
    choice = cfg.denoiser
    if choice == "gaussian-oracle":
        return fit_oracle(cfg, init)
    if choice == "ridge":
        x0s, zs = training_pairs(cfg, init=init)
        return ridge_train(list(zip(x0s, zs)), cfg.schedule(), cfg.ridge_bins, cfg.ridge_radius, cfg.ridge_weight, cfg.seed)
    kind, _, path = choice.partition(":")
    if kind in ("ridge", "gaussian") and path:
        return load_denoiser(path)
    raise ConfigurationError(f"unknown denoiser {choice!r}")


@dataclass
class MethodResult:
    image: np.ndarray
    maps: SensitivityMaps
    trace: SampleTrace
    runtime_s: float
    residual: float
    std: np.ndarray | None = None


def run_method(
    case: Case,
    cfg: ExperimentConfig,
    denoiser=None,
    method: str | None = None,
    maps: SensitivityMaps | None = None,
    z: np.ndarray | None = None,
    n_samples: int | None = None,
) -> MethodResult:
    """Reconstruct one case. ``maps`` overrides the initial maps given to the sampler."""
    method = method or cfg.method
    maps = case.initial_maps if maps is None else maps
    n_samples = cfg.samples if n_samples is None else n_samples
    t0 = time.perf_counter()
    std = None
    if method == "zf":
        image, trace, out_maps = zero_filled_init(case.kspace, maps), SampleTrace(), maps
    elif method == "grappa":
        kernel = grappa_calibrate(case.kspace, cfg.grappa_rows, cfg.grappa_cols, cfg.grappa_lambda)
        image, trace, out_maps = grappa_apply(kernel, case.kspace, maps), SampleTrace(), maps
    else:
        if denoiser is None:
            raise ConfigurationError("sampler methods need a denoiser")
        z = source_image(case, cfg) if z is None else z
        scfg = dataclasses.replace(cfg.sampler(method), seed=cfg.seed + case.seed)
        if n_samples > 1:
            ens = sample_ensemble(case.kspace, z, maps, denoiser, cfg.schedule(), scfg, n_samples)
            image, std = ens.mean_complex, ens.std
            trace, out_maps = ens.runs[0].trace, ens.runs[0].maps
        else:
            res = sample(case.kspace, z, maps, denoiser, cfg.schedule(), scfg)
            image, trace, out_maps = res.image, res.trace, res.maps
    runtime = time.perf_counter() - t0
    residual = data_residual(ForwardOperator(out_maps, case.mask), image, case.kspace)
    return MethodResult(image, out_maps, trace, runtime, residual, std)
