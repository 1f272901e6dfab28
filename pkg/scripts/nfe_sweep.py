#!/usr/bin/env python3
"""PSNR against the number of reverse steps, for both samplers."""

import argparse
import sys

import numpy as np

from adobi.experiments import ExperimentConfig, fit_oracle, run_method, simulate_case, source_image
from adobi.metrics import psnr


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--nfe", type=int, nargs="+", default=[1, 2, 5, 10, 20])
    p.add_argument("--acceleration", type=int, default=2)
    p.add_argument("--mask-style", default="equispaced", choices=("random", "equispaced"))
    p.add_argument("--lambda", dest="csm_lambda", type=float, default=10.0)
    a = p.parse_args(argv)
    cfg = ExperimentConfig(acceleration=a.acceleration, mask_style=a.mask_style, csm_lambda=a.csm_lambda)
    oracle = fit_oracle(cfg)
    cases = [simulate_case(cfg, s) for s in range(a.seeds)]
    sources = [source_image(c, cfg) for c in cases]
    print("nfe  " + "  ".join(f"{m:>16s}" for m in ("ode", "variance-matched")))
    for n in a.nfe:
        means = []
        for mode in ("ode", "variance-matched"):
            run_cfg = cfg.replace(nfe=n, noise_mode=mode)
            means.append(np.mean([psnr(c.image, run_method(c, run_cfg, oracle, z=z).image) for c, z in zip(cases, sources)]))
        print(f"{n:3d}  " + "  ".join(f"{m:16.2f}" for m in means))
    return 0


if __name__ == "__main__":
    sys.exit(main())
