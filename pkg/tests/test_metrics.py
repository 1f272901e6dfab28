import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adobi.core import DimensionError
from adobi.metrics import (
    AGGREGATE_FIELDS,
    PER_SLICE_FIELDS,
    ReconReport,
    aggregate,
    evaluate,
    iqr_outliers,
    nmse,
    psnr,
    read_csv,
    read_pgm,
    ssim,
    write_aggregate_csv,
    write_per_slice_csv,
    write_pgm,
)
from adobi.rng import stream


def test_psnr_examples():
    ref = np.zeros((10, 10))
    ref[0, 0] = 1.0
    test = ref + 0.1
    # MSE = 0.01, peak 1.
    assert psnr(ref, test) == pytest.approx(20.0)
    halved = ref + 0.1 / np.sqrt(2)
    assert psnr(ref, halved) - psnr(ref, test) == pytest.approx(10 * np.log10(2), abs=1e-9)
    assert psnr(ref, ref) == math.inf
    with pytest.raises(ValueError):
        psnr(np.zeros((3, 3)), np.ones((3, 3)))
    with pytest.raises(DimensionError):
        psnr(ref, ref[:5])


def test_psnr_uses_magnitudes():
    ref = np.exp(1j * np.linspace(0, 3, 16)).reshape(4, 4)
    assert psnr(ref, np.abs(ref)) == math.inf
    assert nmse(ref, np.abs(ref)) > 0


def test_nmse_example():
    ref = np.array([[3.0, 4.0]])
    assert nmse(ref, np.array([[3.0, 3.0]])) == pytest.approx(1 / 25)


def _ssim_oracle(a, b, win=7):
    """Direct window loop with scalar statistics."""
    a, b = np.abs(a), np.abs(b)
    c1, c2 = (0.01 * a.max()) ** 2, (0.03 * a.max()) ** 2
    vals = []
    for i in range(a.shape[0] - win + 1):
        for j in range(a.shape[1] - win + 1):
            p = a[i:i + win, j:j + win].ravel()
            q = b[i:i + win, j:j + win].ravel()
            mp, mq = p.mean(), q.mean()
            vp = ((p - mp) ** 2).mean()
            vq = ((q - mq) ** 2).mean()
            cv = ((p - mp) * (q - mq)).mean()
            vals.append((2 * mp * mq + c1) * (2 * cv + c2) / ((mp ** 2 + mq ** 2 + c1) * (vp + vq + c2)))
    return float(np.mean(vals))


def test_ssim_against_oracle(rng):
    a = rng.random((8, 8))
    b = a + 0.2 * rng.random((8, 8))
    assert ssim(a, b) == pytest.approx(_ssim_oracle(a, b), rel=1e-12)
    c = rng.random((12, 9))
    d = rng.random((12, 9))
    assert ssim(c, d) == pytest.approx(_ssim_oracle(c, d), rel=1e-12)


def test_ssim_identity_and_sign():
    x = stream(1).random((16, 16))
    assert ssim(x, x) == pytest.approx(1.0)
    assert ssim(x, -x) == pytest.approx(1.0)
    assert ssim(x, np.zeros_like(x)) < 0.1
    with pytest.raises(DimensionError):
        ssim(np.ones((5, 5)), np.ones((5, 5)))
    with pytest.raises(ValueError):
        ssim(x, x, window=6)


@given(st.integers(0, 2**31 - 1), st.floats(0.1, 10))
def test_psnr_scale_invariance(seed, c):
    rng = stream(seed)
    a = rng.random((8, 8)) + 0.1
    b = a + 0.05 * rng.standard_normal((8, 8))
    assert psnr(c * a, c * b) == pytest.approx(psnr(a, b), abs=1e-9)


@given(st.integers(0, 2**31 - 1))
def test_ssim_symmetric_for_equal_peak(seed):
    rng = stream(seed)
    a = rng.random((10, 10))
    b = rng.random((10, 10))
    b *= a.max() / b.max()
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
    assert ssim(a, b) <= 1 + 1e-12


def test_iqr_outliers():
    v = [1, 2, 3, 4, 100, float("nan")]
    assert list(iqr_outliers(v)) == [4]
    assert list(iqr_outliers([float("nan")])) == []


def test_aggregate_rows():
    reps = [
        evaluate(m, np.ones((8, 8)), np.ones((8, 8)) * (1 + 0.01 * s), residual=s, seed=s)
        for m in ("zf", "adobi") for s in range(4)
    ]
    rows = aggregate(reps)
    assert len(rows) == 2 * 5
    r = next(r for r in rows if r["method"] == "adobi" and r["metric"] == "residual")
    assert r["mean"] == pytest.approx(1.5) and r["n"] == 4
    assert r["std"] == pytest.approx(np.std([0, 1, 2, 3]))
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_flags_outlier_seeds():
    reps = [ReconReport("m", 30.0 + (20 if s == 7 else 0.1 * s), 0.9, 0.01, seed=s) for s in range(8)]
    row = next(r for r in aggregate(reps) if r["metric"] == "psnr")
    assert row["outliers"] == "7"


def test_csv_writers(tmp_path):
    reps = [evaluate("zf", np.ones((8, 8)), np.ones((8, 8)), seed=3)]
    write_per_slice_csv(tmp_path / "p.csv", reps)
    write_aggregate_csv(tmp_path / "a.csv", aggregate(reps))
    first = (tmp_path / "p.csv").read_text().splitlines()[:2]
    assert first[0].startswith("# ssim")
    assert first[1].split(",") == PER_SLICE_FIELDS
    rows = read_csv(tmp_path / "p.csv")
    assert rows[0]["psnr"] == "inf" and rows[0]["seed"] == "3"
    assert list(read_csv(tmp_path / "a.csv")[0]) == AGGREGATE_FIELDS
    assert reps[0].exact_match


def test_pgm_round_trip(tmp_path):
    img = np.linspace(0, 2, 12).reshape(3, 4)
    write_pgm(tmp_path / "x.pgm", img)
    raw = (tmp_path / "x.pgm").read_bytes()
    assert raw.startswith(b"P5\n4 3\n255\n")
    back = read_pgm(tmp_path / "x.pgm")
    assert back.shape == (3, 4)
    assert back[0, 0] == 0 and back[-1, -1] == 255
    assert np.array_equal(back, np.round(img / 2 * 255).astype(np.uint8))
    write_pgm(tmp_path / "z.pgm", np.zeros((2, 2)))
    assert np.all(read_pgm(tmp_path / "z.pgm") == 0)
    with pytest.raises(DimensionError):
        write_pgm(tmp_path / "bad.pgm", np.zeros(3))
