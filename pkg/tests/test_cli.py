import csv

import numpy as np
import pytest

from adobi.calibration import zero_filled_init
from adobi.cli import DEFAULT_SWEEPS, UsageError, main, parse_config_text
from adobi.metrics import read_csv, read_pgm
from adobi.mrid import load_image, load_kspace, load_maps, load_mask

SMALL = ["--size", "32", "--n-train", "40"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "exp.cfg"
    cfg.write_bytes(b"# experiment\nsize = 32\nn-train=40\nseeds=3\nlambda=1.0\n")
    assert run("simulate", "--config", cfg, "--out", root / "sim") == 0
    return root, cfg


def test_full_sampling_adjoint_recovers_phantom(tmp_path):
    assert run("simulate", *SMALL, "--acceleration", 1, "--perturbation", 0, "--out", tmp_path) == 0
    d = tmp_path / "case_000000"
    mask = load_mask(d / "mask.mrid")
    y = load_kspace(d / "kspace.mrid", mask)
    x = zero_filled_init(y, load_maps(d / "true_maps.mrid"))
    assert np.max(np.abs(x - load_image(d / "phantom.mrid"))) < 1e-6
    assert "kept_columns=32" in (d / "manifest.txt").read_text()


def test_config_echo_and_resolution(sim):
    root, cfg = sim
    assert (root / "sim" / "config.txt").read_bytes() == cfg.read_bytes()
    resolved = (root / "sim" / "resolved_config.txt").read_text()
    assert "size=32\n" in resolved and "csm_lambda=1.0\n" in resolved and "seeds=3\n" in resolved
    assert sorted(p.name for p in (root / "sim").glob("case_*")) == ["case_000000", "case_000001", "case_000002"]


def test_rerun_is_byte_identical(sim, tmp_path):
    root, cfg = sim
    assert run("simulate", "--config", cfg, "--out", tmp_path) == 0
    for name in ("kspace.mrid", "phantom.mrid", "initial_maps.mrid", "mask.mrid"):
        assert (tmp_path / "case_000001" / name).read_bytes() == (root / "sim" / "case_000001" / name).read_bytes()


def test_reconstruct_outputs_and_idempotence(sim, tmp_path):
    root, cfg = sim
    assert run("reconstruct", "--config", cfg, "--input", root / "sim", "--out", tmp_path / "zf", "--method", "zf") == 0
    rows = list(csv.reader(open(tmp_path / "zf" / "case_000000" / "trace.csv")))
    assert rows == [["t", "residual", "csm_change", "gamma"]]
    for rep in ("a", "b"):
        assert run("reconstruct", "--config", cfg, "--input", root / "sim", "--out", tmp_path / rep,
                   "--method", "adobi", "--nfe", 10, "--samples", 2) == 0
    d = tmp_path / "a" / "case_000002"
    assert len(read_csv(d / "trace.csv")) == 10
    for name in ("recon.mrid", "final_maps.mrid", "mean.mrid", "std.mrid", "trace.csv", "recon_info.txt"):
        assert (d / name).read_bytes() == (tmp_path / "b" / "case_000002" / name).read_bytes()
    assert (d / "runtime.txt").exists()


def test_adobi_residual_below_cddb(tmp_path):
    common = [*SMALL, "--seeds", 20]
    assert run("simulate", *common, "--out", tmp_path / "sim") == 0
    for method in ("adobi", "cddb"):
        assert run("reconstruct", *common, "--input", tmp_path / "sim", "--out", tmp_path / method,
                   "--method", method) == 0

    def residuals(method):
        return [float(p.read_text().split("residual=")[1]) for p in sorted((tmp_path / method).glob("case_*/recon_info.txt"))]

    a, c = residuals("adobi"), residuals("cddb")
    assert len(a) == 20
    assert sum(x < y for x, y in zip(a, c)) >= 16


def test_evaluate_exact_match_and_dumps(sim, tmp_path):
    root, cfg = sim
    fake = tmp_path / "fake"
    for d in (root / "sim").glob("case_*"):
        (fake / d.name).mkdir(parents=True)
        (fake / d.name / "recon.mrid").write_bytes((d / "phantom.mrid").read_bytes())
        (fake / d.name / "recon_info.txt").write_text("method=oracle\nresidual=0.0\n")
    assert run("evaluate", *SMALL, "--recon", fake, "--truth", root / "sim", "--out", tmp_path / "ev") == 0
    rows = read_csv(tmp_path / "ev" / "per_slice.csv")
    assert len(rows) == 3 and all(r["psnr"] == "inf" and float(r["ssim"]) == 1.0 for r in rows)


def test_evaluate_error_map_and_aggregate(sim, tmp_path):
    root, cfg = sim
    for method in ("zf", "cddb"):
        assert run("reconstruct", "--config", cfg, "--input", root / "sim", "--out", tmp_path / method,
                   "--method", method, "--nfe", 2) == 0
    assert run("evaluate", *SMALL, "--recon", tmp_path / "zf", tmp_path / "cddb", "--truth", root / "sim",
               "--out", tmp_path / "ev", "--dump-images") == 0
    agg = read_csv(tmp_path / "ev" / "aggregate.csv")
    assert {r["method"] for r in agg} == {"zf", "cddb"}
    assert {r["metric"] for r in agg if r["method"] == "zf"} == {"psnr", "ssim", "nmse", "residual", "runtime_s"}
    err = read_pgm(tmp_path / "ev" / "images" / "cddb" / "case_000001" / "error.pgm")
    recon = load_image(tmp_path / "cddb" / "case_000001" / "recon.mrid")
    truth = load_image(root / "sim" / "case_000001" / "phantom.mrid")
    assert np.unravel_index(np.argmax(err), err.shape) == np.unravel_index(np.argmax(np.abs(recon - truth)), err.shape)
    assert err.max() == 255


def test_sweep_rows_and_default_gamma_grid(sim, tmp_path):
    root, cfg = sim
    assert 2.4 in DEFAULT_SWEEPS["gamma"]
    assert run("sweep", "--config", cfg, "--axis", "gamma", "--values", 0.5, 1.0, "--method", "cddb",
               "--nfe", 2, "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 2 * 3
    assert (tmp_path / "gamma_0.5" / "case_000002" / "recon.mrid").exists()


def _ranks(v):
    order = np.argsort(v, kind="stable")
    r = np.empty(len(v))
    r[order] = np.arange(len(v))
    # Average ranks over ties.
    for val in np.unique(v):
        idx = np.flatnonzero(v == val)
        r[idx] = r[idx].mean()
    return r


def spearman(a, b):
    return float(np.corrcoef(_ranks(np.asarray(a, float)), _ranks(np.asarray(b, float)))[0, 1])


def test_nfe_sweep_trend(tmp_path):
    """Deterministic sampler on a 2x equispaced mask: PSNR rises with the step count."""
    args = ["--size", "64", "--seeds", 4, "--acceleration", 2, "--mask-style", "equispaced",
            "--noise-mode", "ode", "--lambda", 10.0]
    assert run("sweep", *args, "--axis", "nfe", "--values", 1, 2, 5, "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 3 * 4
    assert spearman([float(r["value"]) for r in rows], [float(r["psnr"]) for r in rows]) > 0


def test_spearman_helper():
    assert spearman([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)
    assert spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert spearman([1, 1, 2], [1, 2, 3]) == pytest.approx(np.sqrt(3) / 2)


def test_parse_config_text():
    vals = parse_config_text("nfe = 5  # steps\n\n# comment\nmask-style=equispaced\nlambda=2\n")
    assert vals == {"nfe": 5, "mask_style": "equispaced", "csm_lambda": 2.0}
    for bad in ("nfe\n", "depth=3\n", "nfe=five\n"):
        with pytest.raises(UsageError):
            parse_config_text(bad)


def test_exit_codes(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main(["bogus"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["sweep", "--axis", "depth", "--out", str(tmp_path)])
    assert e.value.code == 1
    assert run("simulate", "--nfe", 0, "--out", tmp_path) == 1
    assert run("sweep", "--axis", "nfe", "--values", 5, "--out", tmp_path) == 1
    assert run("reconstruct", "--input", tmp_path / "missing", "--out", tmp_path) == 2
    (tmp_path / "case_000000").mkdir()
    (tmp_path / "case_000000" / "mask.mrid").write_bytes(b"MRIX")
    assert run("reconstruct", "--input", tmp_path, "--out", tmp_path / "o") == 2
    assert "FormatError" in capsys.readouterr().err
