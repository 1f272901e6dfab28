#!/usr/bin/env python3
"""Ensemble standard deviation vs reconstruction error; optional PGM dumps."""

import argparse
import sys
from pathlib import Path

import numpy as np

from adobi.experiments import ExperimentConfig, fit_oracle, run_method, simulate_case
from adobi.metrics import psnr, write_pgm


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--samples", type=int, default=32)
    p.add_argument("--acceleration", type=int, default=8)
    p.add_argument("--dump", help="directory for std/error/mean PGM images")
    a = p.parse_args(argv)
    cfg = ExperimentConfig(acceleration=a.acceleration)
    oracle = fit_oracle(cfg)
    for s in range(a.seeds):
        case = simulate_case(cfg, s)
        res = run_method(case, cfg, oracle, n_samples=a.samples)
        err = np.abs(res.image - case.image)
        r = np.corrcoef(res.std.ravel(), err.ravel())[0, 1]
        print(f"seed {s:3d}  PSNR(mean) {psnr(case.image, res.image):6.2f}  Pearson(std, |error|) {r:.3f}")
        if a.dump:
            d = Path(a.dump) / f"case_{s:06d}"
            d.mkdir(parents=True, exist_ok=True)
            write_pgm(d / "mean.pgm", np.abs(res.image), np.abs(case.image).max())
            write_pgm(d / "error.pgm", err)
            write_pgm(d / "std.pgm", res.std)
    return 0


if __name__ == "__main__":
    sys.exit(main())
