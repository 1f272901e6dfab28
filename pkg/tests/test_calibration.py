import numpy as np
import pytest

from adobi.calibration import (
    estimate_csm_from_acs,
    grappa_apply,
    grappa_calibrate,
    grappa_fill,
    missing_patterns,
    source_pattern,
    zero_filled_init,
)
from adobi.core import CalibrationError, SamplingMask
from adobi.forward import ForwardOperator, apply_adjoint, apply_forward, fft2c, make_cartesian_mask
from adobi.phantoms import CoilModelSpec, PhantomSpec, make_coils, make_phantom
from conftest import random_maps


def ramp_case(size=64, accel=4, acs=16, seed=0):
    maps, _ = make_coils(CoilModelSpec(n_coils=8, perturbation=0.0, profile="ramp"), size, size)
    mask = make_cartesian_mask(size, size, accel, acs, style="equispaced")
    x = make_phantom(PhantomSpec(size=size, seed=seed))
    full = ForwardOperator(maps, SamplingMask.full(size, size))
    return maps, mask, x, apply_forward(full, x), apply_forward(ForwardOperator(maps, mask), x)


def test_ramp_coils_shift_kspace():
    maps, mask, x, full, _ = ramp_case()
    # Coil i sees the coil-0 spectrum shifted by i columns (up to a sign from the centring).
    k0 = full.planes[0]
    for i in (1, 3):
        shifted = np.roll(k0, i, axis=1)
        assert np.allclose(full.planes[i], (-1) ** i * shifted, atol=1e-12)


def test_grappa_exact_on_kernel_representable_data():
    maps, mask, x, full, y = ramp_case()
    kernel = grappa_calibrate(y, 5, 4, lamda=0.0)
    filled = grappa_fill(kernel, y)
    miss = ~mask.kept
    err = np.linalg.norm(filled.planes[..., miss] - full.planes[..., miss])
    assert err / np.linalg.norm(full.planes[..., miss]) < 1e-5
    assert np.array_equal(filled.planes[..., mask.kept], y.planes[..., mask.kept])
    assert kernel.max_residual < 1e-8


def test_grappa_apply_combines_with_maps():
    maps, mask, x, full, y = ramp_case()
    img = grappa_apply(grappa_calibrate(y, 5, 4, 0.0), y, maps)
    assert np.linalg.norm(img - x) / np.linalg.norm(x) < 1e-5
    rss = grappa_apply(grappa_calibrate(y, 5, 4, 0.0), y)
    assert np.allclose(rss.real, np.abs(x) * np.sqrt(8) / np.sqrt(8), atol=1e-5)


def test_source_patterns_are_nearest_acquired():
    kept = np.zeros(12, bool)
    kept[[0, 3, 6, 9]] = True
    assert source_pattern(kept, 4, 4) == (-4, -1, 2, 5)
    assert source_pattern(kept, 1, 2) == (-1, 2)
    groups = missing_patterns(SamplingMask(2, 12, kept), 2)
    assert sorted(c for cols in groups.values() for c in cols) == [1, 2, 4, 5, 7, 8, 10, 11]
    with pytest.raises(CalibrationError):
        source_pattern(np.eye(1, 12, 0, dtype=bool)[0], 4, 4)


def test_grappa_reports_too_few_equations():
    maps, _, x, *_ = ramp_case()
    mask = make_cartesian_mask(64, 64, 4, 4, style="equispaced")
    y = apply_forward(ForwardOperator(maps, mask), x)
    with pytest.raises(CalibrationError, match="equations"):
        grappa_calibrate(y, 5, 4)


def test_grappa_full_mask_is_noop():
    maps, _, x, full, _ = ramp_case(size=16)
    k = grappa_calibrate(full)
    assert k.weights == {}
    assert np.array_equal(grappa_fill(k, full).planes, full.planes)


def test_zero_filled_is_adjoint(rng):
    maps = random_maps(rng, 3, 16, 16)
    mask = make_cartesian_mask(16, 16, 2, 4, seed=1)
    op = ForwardOperator(maps, mask)
    y = apply_forward(op, rng.standard_normal((16, 16)) + 0j)
    assert np.array_equal(zero_filled_init(y, maps), apply_adjoint(op, y))


def test_acs_maps_normalized_and_close_to_smooth_truth():
    maps, _ = make_coils(CoilModelSpec(n_coils=8, perturbation=0.0), 64, 64)
    x = make_phantom(PhantomSpec(size=64, seed=2))
    mask = make_cartesian_mask(64, 64, 4, 24)
    y = apply_forward(ForwardOperator(maps, mask), x)
    est = estimate_csm_from_acs(y)
    assert est.normalized and est.satisfies_normalization()
    # Maps are defined up to a common phase; compare inside the object.
    inside = np.abs(x) > 0.3
    ph = np.sum(est.maps * np.conj(maps.maps), axis=0)
    ph = ph / np.abs(ph)
    diff = est.maps - ph[None] * maps.maps
    rel = np.linalg.norm(diff[:, inside]) / np.linalg.norm(maps.maps[:, inside])
    assert rel < 0.25


def test_acs_maps_need_acs():
    mask = SamplingMask.from_columns(8, 8, [0, 4])
    maps, _ = make_coils(CoilModelSpec(n_coils=2, perturbation=0.0), 8, 8)
    y = apply_forward(ForwardOperator(maps, mask), np.ones((8, 8)))
    with pytest.raises(CalibrationError):
        estimate_csm_from_acs(y)
