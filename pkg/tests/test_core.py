import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adobi.core import (
    DimensionError,
    MultiCoilKSpace,
    SamplingMask,
    SensitivityMaps,
    acs_columns,
    as_image,
    cimage_axpy,
    inner_product,
)
from conftest import random_image, random_maps, random_mask
from adobi.rng import stream


def test_axpy_examples():
    y = np.array([[3 + 0j]])
    assert np.array_equal(cimage_axpy(0, np.ones((2, 2)), np.full((2, 2), 7j)), np.full((2, 2), 7j))
    x = np.arange(4).reshape(2, 2) + 1j
    assert np.array_equal(cimage_axpy(1, x, np.zeros((2, 2))), x)
    assert cimage_axpy(2 + 0j, np.array([[1 + 1j]]), y)[0, 0] == 5 + 2j


def test_axpy_shape_mismatch():
    with pytest.raises(DimensionError):
        cimage_axpy(1, np.zeros((2, 2)), np.zeros((2, 3)))


def test_inner_product_brute_force(rng):
    x, y = random_image(rng, 5, 3), random_image(rng, 5, 3)
    expected = sum(np.conj(x[i, j]) * y[i, j] for i in range(5) for j in range(3))
    assert inner_product(x, y) == pytest.approx(expected, rel=1e-13)
    assert inner_product(x, x).imag == 0
    with pytest.raises(DimensionError):
        inner_product(x, y[:4])


def test_as_image_rejects_nonfinite_and_bad_rank():
    with pytest.raises(ValueError):
        as_image(np.array([[np.nan]]))
    with pytest.raises(DimensionError):
        as_image(np.zeros(4))


def test_acs_columns_centred():
    assert list(acs_columns(16, 4)) == [6, 7, 8, 9]
    assert list(acs_columns(15, 3)) == [6, 7, 8]


def test_mask_requires_acs_inside_kept():
    kept = np.zeros(8, dtype=bool)
    with pytest.raises(ValueError):
        SamplingMask(4, 8, kept, acs_width=2)
    kept[3:5] = True
    m = SamplingMask(4, 8, kept, acs_width=2)
    assert m.kept_columns == frozenset({3, 4})
    assert m.n_kept == 2
    with pytest.raises(DimensionError):
        SamplingMask(4, 8, np.ones(7, dtype=bool))


def test_mask_from_columns_and_full():
    m = SamplingMask.from_columns(4, 6, [0, 5, 2])
    assert m.kept_columns == frozenset({0, 2, 5})
    f = SamplingMask.full(3, 5)
    assert f.n_kept == 5 and f.acs_width == 5
    with pytest.raises(ValueError):
        SamplingMask.from_columns(4, 6, [6])


@given(st.integers(0, 2**31 - 1), st.integers(1, 12), st.integers(1, 12))
def test_mask_is_idempotent_projection(seed, h, w):
    rng = stream(seed)
    m = random_mask(rng, h, w)
    k = rng.standard_normal((3, h, w)) + 0j
    once = m.apply(k)
    assert np.array_equal(m.apply(once), once)
    assert np.all(once[..., ~m.kept] == 0)
    assert np.array_equal(once[..., m.kept], k[..., m.kept])


def test_mask_arrays_read_only():
    m = SamplingMask.full(2, 2)
    with pytest.raises(ValueError):
        m.kept[0] = False


def test_maps_normalization(rng):
    raw = random_maps(rng, 3, 6, 5, normalized=False)
    assert not raw.satisfies_normalization()
    n = raw.normalize()
    assert n.normalized and n.satisfies_normalization()
    assert np.allclose(n.sum_of_squares(), 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        SensitivityMaps(raw.maps, normalized=True)


def test_maps_normalize_floor_drops_support():
    m = np.ones((2, 3, 3), dtype=complex)
    m[:, 1, 1] = 0
    n = SensitivityMaps(m).normalize()
    assert not n.support()[1, 1]
    assert n.satisfies_normalization()


def test_kspace_invariant_zero_outside_mask():
    mask = SamplingMask.from_columns(2, 3, [1])
    ok = np.zeros((2, 2, 3), dtype=complex)
    ok[:, :, 1] = 1
    y = MultiCoilKSpace(ok, mask)
    assert y.n_coils == 2 and y.norm() == pytest.approx(2.0)
    bad = ok.copy()
    bad[0, 0, 0] = 1
    with pytest.raises(ValueError):
        MultiCoilKSpace(bad, mask)
    with pytest.raises(DimensionError):
        MultiCoilKSpace(np.zeros((2, 3, 3)), mask)


@given(st.integers(0, 2**31 - 1))
def test_inner_product_hermitian_and_linear(seed):
    rng = stream(seed)
    x, y, z = (random_image(rng, 4, 4) for _ in range(3))
    a = complex(*rng.standard_normal(2))
    assert inner_product(x, y) == pytest.approx(np.conj(inner_product(y, x)), abs=1e-12)
    lhs = inner_product(x, cimage_axpy(a, y, z))
    assert lhs == pytest.approx(a * inner_product(x, y) + inner_product(x, z), abs=1e-10)
