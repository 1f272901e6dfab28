"""Command-line front end.

Every subcommand takes the same experiment options. They are resolved in
three layers: dataclass defaults, then a flat ``key=value`` config file
(``--config``), then explicit flags. The output directory always receives
``config.txt`` (the input config file verbatim, or the resolved config when
none was given) and ``resolved_config.txt``.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .bridge import SampleTrace
from .calibration import estimate_csm_from_acs, grappa_apply, grappa_calibrate
from .core import CalibrationError, ConfigurationError, DimensionError, FormatError
from .denoisers import save_denoiser
from .experiments import Case, ExperimentConfig, build_denoiser, run_method, simulate_case
from .metrics import aggregate, evaluate, write_aggregate_csv, write_per_slice_csv, write_pgm
from .mrid import load_image, load_kspace, load_maps, load_mask, save_image, save_kspace, save_maps, save_mask

log = logging.getLogger("adobi")

GAMMA_REFERENCE = 2.4
DEFAULT_SWEEPS = {
    "gamma": [0.5, 1.0, 1.5, 1.9, GAMMA_REFERENCE],
    "nfe": [1, 2, 5, 10],
    "lambda": [1e-2, 1e-1, 1.0, 10.0],
}
SWEEP_FIELDS = {"gamma": "gamma1", "nfe": "nfe", "lambda": "csm_lambda"}
# Short flag names that differ from the field name.
FLAG_ALIASES = {"csm_lambda": "lambda"}
CHOICES = {
    "init": ("zf", "grappa"),
    "method": ("zf", "grappa", "ddb", "cddb", "adobi"),
    "noise_mode": ("as-written", "variance-matched", "ode"),
    "consistency": ("x0", "xt"),
    "mask_style": ("random", "equispaced"),
    "coil_profile": ("gaussian", "ramp"),
    "maps_source": ("perturbed", "acs", "true"),
}
FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


# Config resolution ---------------------------------------------------------

def _convert(name: str, text: str):
    kind = type(FIELDS[name].default)
    try:
        if kind is bool:
            if text.lower() not in ("true", "false", "1", "0"):
                raise ValueError(text)
            return text.lower() in ("true", "1")
        return kind(text)
    except ValueError:
        raise UsageError(f"bad value for {name}: {text!r}") from None


def parse_config_text(text: str) -> dict:
    """Flat ``key=value`` lines; ``#`` starts a comment; keys may use ``-`` or ``_``."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {n}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        key = {"lambda": "csm_lambda"}.get(key, key)
        if key not in FIELDS:
            raise UsageError(f"config line {n}: unknown key {key!r}")
        out[key] = _convert(key, value)
    return out


def format_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{k}={v}\n" for k, v in dataclasses.asdict(cfg).items())


def resolve_config(args) -> tuple[ExperimentConfig, bytes | None]:
    values = {}
    raw = None
    if args.config:
        raw = Path(args.config).read_bytes()
        values.update(parse_config_text(raw.decode()))
    for name in FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    try:
        return ExperimentConfig(**values), raw
    except (ConfigurationError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def write_provenance(out: Path, cfg: ExperimentConfig, raw: bytes | None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    resolved = format_config(cfg)
    (out / "config.txt").write_bytes(raw if raw is not None else resolved.encode())
    (out / "resolved_config.txt").write_text(resolved)


# File layout ---------------------------------------------------------------

def case_dirs(root: Path) -> list[Path]:
    dirs = sorted(p for p in root.glob("case_*") if p.is_dir())
    if not dirs:
        raise FileNotFoundError(f"no case_* directories under {root}")
    return dirs


def case_name(seed: int) -> str:
    return f"case_{seed:06d}"


def seed_of(path: Path) -> int:
    return int(path.name.split("_", 1)[1])


def write_case(d: Path, case: Case) -> None:
    d.mkdir(parents=True, exist_ok=True)
    save_image(d / "phantom.mrid", case.image)
    save_maps(d / "true_maps.mrid", case.true_maps)
    save_maps(d / "initial_maps.mrid", case.initial_maps)
    save_mask(d / "mask.mrid", case.mask)
    save_kspace(d / "kspace.mrid", case.kspace)
    (d / "manifest.txt").write_text(
        f"seed={case.seed}\n"
        f"shape={case.mask.height}x{case.mask.width}\n"
        f"n_coils={case.kspace.n_coils}\n"
        f"kept_columns={case.mask.n_kept}\n"
        f"acs_width={case.mask.acs_width}\n"
        "files=phantom.mrid,true_maps.mrid,initial_maps.mrid,mask.mrid,kspace.mrid\n"
    )


def read_case(d: Path, maps_file: str = "initial_maps.mrid") -> Case:
    mask = load_mask(d / "mask.mrid")
    y = load_kspace(d / "kspace.mrid", mask)
    maps = load_maps(d / maps_file)
    truth = load_image(d / "phantom.mrid") if (d / "phantom.mrid").exists() else None
    true_maps = load_maps(d / "true_maps.mrid") if (d / "true_maps.mrid").exists() else maps
    if maps.shape != y.shape or maps.n_coils != y.n_coils:
        raise DimensionError(f"{d}: maps {maps.maps.shape} do not match k-space {y.planes.shape}")
    return Case(seed_of(d), truth, true_maps, maps, mask, y)


def write_trace(path: Path, trace: SampleTrace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "residual", "csm_change", "gamma"])
        for s in trace.steps:
            w.writerow([s.t, repr(s.data_residual), repr(s.csm_change), repr(s.gamma)])


def write_recon(d: Path, res, method: str) -> None:
    d.mkdir(parents=True, exist_ok=True)
    save_image(d / "recon.mrid", res.image)
    save_maps(d / "final_maps.mrid", res.maps)
    write_trace(d / "trace.csv", res.trace)
    if res.std is not None:
        save_image(d / "mean.mrid", res.image)
        save_image(d / "std.mrid", res.std)
    (d / "recon_info.txt").write_text(f"method={method}\nresidual={res.residual!r}\n")
    # Wall time is the only non-reproducible output; it lives in its own file.
    (d / "runtime.txt").write_text(f"{res.runtime_s!r}\n")


def _read_info(d: Path) -> dict:
    info = {}
    if (d / "recon_info.txt").exists():
        for line in (d / "recon_info.txt").read_text().splitlines():
            k, _, v = line.partition("=")
            info[k] = v
    return info


# Commands ------------------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig, args) -> None:
    out = Path(cfg.out)
    for seed in range(cfg.seed, cfg.seed + cfg.seeds):
        write_case(out / case_name(seed), simulate_case(cfg, seed))
    log.info("simulated %d case(s) into %s", cfg.seeds, out)


def cmd_calibrate(cfg: ExperimentConfig, args) -> None:
    """ACS coil-map estimate and GRAPPA reconstruction for every simulated case."""
    out = Path(cfg.out)
    for d in case_dirs(Path(args.input)):
        case = read_case(d)
        od = out / d.name
        od.mkdir(parents=True, exist_ok=True)
        acs_maps = estimate_csm_from_acs(case.kspace)
        save_maps(od / "acs_maps.mrid", acs_maps)
        kernel = grappa_calibrate(case.kspace, cfg.grappa_rows, cfg.grappa_cols, cfg.grappa_lambda)
        save_image(od / "grappa.mrid", grappa_apply(kernel, case.kspace, case.initial_maps))
        (od / "grappa_kernel.txt").write_text(
            f"kernel_rows={kernel.kernel_rows}\nkernel_cols={kernel.kernel_cols}\n"
            f"patterns={len(kernel.weights)}\nmax_residual={kernel.max_residual!r}\n"
        )


def _denoiser_for(cfg: ExperimentConfig, method: str):
    return None if method in ("zf", "grappa") else build_denoiser(cfg)


def cmd_reconstruct(cfg: ExperimentConfig, args) -> None:
    out = Path(cfg.out)
    # Read every case before the (slow) denoiser fit so bad inputs fail fast.
    cases = [(d, read_case(d, args.maps)) for d in case_dirs(Path(args.input))]
    denoiser = _denoiser_for(cfg, cfg.method)
    for d, case in cases:
        res = run_method(case, cfg, denoiser)
        write_recon(out / d.name, res, cfg.method)


def _evaluate_dir(recon_dir: Path, truth_dir: Path, method: str | None, dump: Path | None):
    truth = load_image(truth_dir / "phantom.mrid")
    recon = load_image(recon_dir / "recon.mrid")
    info = _read_info(recon_dir)
    runtime = float((recon_dir / "runtime.txt").read_text()) if (recon_dir / "runtime.txt").exists() else 0.0
    residual = float(info.get("residual", "nan"))
    report = evaluate(method or info.get("method", "unknown"), truth, recon, residual, runtime, seed_of(recon_dir))
    if dump is not None:
        dump.mkdir(parents=True, exist_ok=True)
        peak = float(np.abs(truth).max())
        write_pgm(dump / "magnitude.pgm", np.abs(recon), peak)
        write_pgm(dump / "truth.pgm", np.abs(truth), peak)
        write_pgm(dump / "error.pgm", np.abs(recon - truth))
        if (recon_dir / "std.mrid").exists():
            write_pgm(dump / "std.pgm", load_image(recon_dir / "std.mrid").real)
    return report


def cmd_evaluate(cfg: ExperimentConfig, args) -> None:
    out = Path(cfg.out)
    reports = []
    for recon_root in args.recon:
        recon_root = Path(recon_root)
        for d in case_dirs(recon_root):
            truth_dir = Path(args.truth) / d.name
            if not (truth_dir / "phantom.mrid").exists():
                raise FileNotFoundError(f"missing ground truth {truth_dir / 'phantom.mrid'}")
            dump = out / "images" / recon_root.name / d.name if args.dump_images else None
            reports.append(_evaluate_dir(d, truth_dir, None, dump))
    write_per_slice_csv(out / "per_slice.csv", reports)
    write_aggregate_csv(out / "aggregate.csv", aggregate(reports))


def cmd_train_denoiser(cfg: ExperimentConfig, args) -> None:
    if cfg.denoiser not in ("gaussian-oracle", "ridge"):
        raise UsageError("train-denoiser needs denoiser=gaussian-oracle or denoiser=ridge")
    d = build_denoiser(cfg)
    name = "ridge" if cfg.denoiser == "ridge" else "gaussian"
    save_denoiser(Path(cfg.out) / f"{name}.mrid", d)


def cmd_sweep(cfg: ExperimentConfig, args) -> None:
    axis = args.axis
    field = SWEEP_FIELDS[axis]
    kind = type(FIELDS[field].default)
    values = [kind(v) for v in args.values] if args.values else DEFAULT_SWEEPS[axis]
    if len(values) < 2:
        raise UsageError("a sweep needs at least two values")
    out = Path(cfg.out)
    denoiser = _denoiser_for(cfg, cfg.method)
    cases = [simulate_case(cfg, s) for s in range(cfg.seed, cfg.seed + cfg.seeds)]
    rows = []
    for value in values:
        vcfg = cfg.replace(**{field: value})
        for case in cases:
            res = run_method(case, vcfg, denoiser)
            write_recon(out / f"{axis}_{value}" / case_name(case.seed), res, cfg.method)
            r = evaluate(cfg.method, case.image, res.image, res.residual, res.runtime_s, case.seed)
            rows.append({"axis": axis, "value": value, **r.row()})
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["axis", "value", "method", "seed", "psnr", "ssim", "nmse", "residual", "runtime_s"])
        w.writeheader()
        w.writerows(rows)


COMMANDS = {
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "train-denoiser": cmd_train_denoiser,
}


# Parser --------------------------------------------------------------------

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    g = p.add_argument_group("experiment options (override the config file)")
    for name, f in FIELDS.items():
        flag = "--" + FLAG_ALIASES.get(name, name).replace("_", "-")
        kind = type(f.default)
        kw = {"dest": name, "default": None, "help": f"default {f.default}"}
        if name in CHOICES:
            kw["choices"] = CHOICES[name]
        if kind is bool:
            kw["type"] = lambda s: s.lower() in ("true", "1")
        else:
            kw["type"] = kind
        g.add_argument(flag, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adobi", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "simulate": "generate phantoms, coils, masks and k-space",
        "calibrate": "ACS coil maps and GRAPPA reconstruction of simulated cases",
        "reconstruct": "run an initialization or the bridge sampler on simulated cases",
        "evaluate": "metrics CSVs and optional PGM dumps",
        "sweep": "sweep gamma1, nfe or the coil-map penalty",
        "train-denoiser": "fit and save a denoiser",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        _add_config_flags(p)
        if name in ("calibrate", "reconstruct"):
            p.add_argument("--input", required=True, help="directory written by simulate")
        if name == "reconstruct":
            p.add_argument("--maps", default="initial_maps.mrid", help="coil-map file inside each case directory")
        if name == "evaluate":
            p.add_argument("--recon", required=True, nargs="+", help="one or more reconstruct output directories")
            p.add_argument("--truth", required=True, help="directory written by simulate")
            p.add_argument("--dump-images", action="store_true", help="write magnitude/error/std PGM images")
        if name == "sweep":
            p.add_argument("--axis", required=True, choices=sorted(SWEEP_FIELDS))
            p.add_argument("--values", nargs="+", help="values to sweep (default grid per axis)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg, raw = resolve_config(args)
        write_provenance(Path(cfg.out), cfg, raw)
        COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(f"adobi: error: {exc}", file=sys.stderr)
        return 1
    except (OSError, FormatError, CalibrationError, DimensionError, ConfigurationError, ValueError) as exc:
        print(f"adobi: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
