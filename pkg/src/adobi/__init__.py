"""Blind parallel-MRI reconstruction with an adaptive diffusion bridge.

Submodules
----------
core         containers for masks, coil maps and multi-coil k-space
forward      the multi-coil Cartesian forward model and its adjoint
calibration  zero-filled / GRAPPA initialization and ACS coil-map estimation
bridge       bridge schedule, reverse sampler and joint coil-map calibration
denoisers    Gaussian-pair MMSE oracle and ridge patch denoiser
phantoms     synthetic phantoms, coil models and Gaussian toy data
mrid         MRID binary container
metrics      PSNR / SSIM / NMSE and CSV reporting
experiments  shared experiment harness
cli          command-line front end
"""

from .bridge import BridgeSchedule, SamplerConfig, make_schedule, reschedule, sample, sample_ensemble
from .core import (
    CalibrationError,
    ConfigurationError,
    DegenerateModelError,
    DimensionError,
    FormatError,
    MultiCoilKSpace,
    SamplingMask,
    ScheduleError,
    SensitivityMaps,
)
from .forward import ForwardOperator, add_measurement_noise, apply_adjoint, apply_forward, make_cartesian_mask

__version__ = "0.1.0"
