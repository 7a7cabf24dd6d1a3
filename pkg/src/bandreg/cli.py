"""Command-line interface.

Exit codes: 0 success, 2 argument/validation errors, 3 I/O errors,
4 optimizer divergence.  The ``register`` command accepts a flat
key-value config file (``[register]`` section); explicit flags win, and
the effective configuration is echoed into the output directory so
every run is reproducible from its artifacts.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path

from . import deform, io, metrics, optimize, spectral, synth
from .grids import make_window
from .objective import LossConfig
from .optimize import DivergenceError, OptimConfig

__all__ = ["main"]

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DIVERGED = 4

_REGISTER_KEYS = ("band", "sim", "lambda", "iters", "lr", "seed", "diffeo", "tol")


def _parse_dims(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise ValueError(f"cannot parse extent list {text!r}") from None
    return dims


def _load_register_config(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    if not parser.has_section("register"):
        raise ValueError(f"{path}: missing [register] section")
    values = dict(parser["register"])
    unknown = set(values) - set(_REGISTER_KEYS)
    if unknown:
        raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
    return values


def _echo_config(path: Path, values: dict):
    parser = configparser.ConfigParser()
    parser["register"] = {k: str(v) for k, v in values.items()}
    with open(path, "w") as handle:
        parser.write(handle)


def _cmd_register(args) -> int:
    file_cfg = _load_register_config(args.config)

    def pick(flag_value, key, default, cast):
        if flag_value is not None:
            return flag_value
        if key in file_cfg:
            return cast(file_cfg[key])
        return default

    band = pick(_parse_dims(args.band) if args.band else None, "band", None, _parse_dims)
    if band is None:
        raise ValueError("--band is required (flag or config file)")
    sim = pick(args.sim, "sim", "mse", str)
    lam = pick(args.lam, "lambda", None, float)
    iters = pick(args.iters, "iters", 300, int)
    lr = pick(args.lr, "lr", 0.05, float)
    seed = pick(args.seed, "seed", 0, int)
    tol = pick(args.tol, "tol", 1e-5, float)
    diffeo = args.diffeo or file_cfg.get("diffeo", "false").lower() in ("1", "true", "yes")

    moving, meta = io.read_nifti(args.moving)
    fixed, _ = io.read_nifti(args.fixed)
    config = OptimConfig(
        band_dims=band,
        iterations=iters,
        learning_rate=lr,
        loss=LossConfig.for_similarity(sim, lam),
        diffeo=diffeo,
        seed=seed,
        convergence_tol=tol,
    )
    s_star, phi, report = optimize.register(moving, fixed, config)
    warped = deform.warp(moving, phi)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(
        out / "config_used.cfg",
        {
            "band": ",".join(str(m) for m in band),
            "sim": sim,
            "lambda": config.loss.lam,
            "iters": iters,
            "lr": lr,
            "seed": seed,
            "diffeo": str(diffeo).lower(),
            "tol": tol,
        },
    )
    io.write_field(phi, out / "phi.json", dtype="float64")
    io.write_field(s_star, out / "lowres.json", dtype="float64")
    for d in range(phi.grid.ndim):
        io.write_nifti(phi.channels[d], out / f"phi_ch{d}.nii", meta)
    io.write_nifti(warped, out / "warped.nii", meta)

    window = make_window(moving.grid, band)
    in_band, out_band = spectral.band_energy_split(phi, window)
    total = in_band + out_band
    with open(out / "report.txt", "w") as handle:
        handle.write(f"final_loss = {report.final_loss:.10e}\n")
        handle.write(f"final_similarity = {report.final_similarity:.10e}\n")
        handle.write(f"final_smoothness = {report.final_smoothness:.10e}\n")
        handle.write(f"iterations_run = {report.iterations_run}\n")
        handle.write(f"folding_percent = {report.folding_percent:.6f}\n")
        handle.write(f"out_of_band_energy_fraction = {out_band / total if total else 0.0:.3e}\n")
        handle.write(f"wall_time_seconds = {report.wall_time:.3f}\n")
        handle.write("loss_trace = " + ",".join(f"{v:.6e}" for v in report.loss_trace) + "\n")

    mid = moving.grid.dims[0] // 2
    io.render_slice(warped, out / "warped.pgm", axis=0, index=mid)
    io.render_grid(phi, out / "grid.ppm", stride=8, axis=0, index=mid)
    for d in range(phi.grid.ndim):
        io.render_spectrum(phi, out / f"spectrum_ch{d}.pgm", channel=d, axis=0, index=mid)
    print(f"registered {args.moving} -> {args.fixed}: "
          f"loss {report.final_loss:.6e}, folding {report.folding_percent:.4f}%")
    return 0


def _cmd_warp(args) -> int:
    field = io.read_field(args.field)
    if args.labels:
        labels, _ = io.read_nifti(args.image, as_labels=True)
        io.write_nifti(metrics.warp_labels(labels, field), args.out)
    else:
        image, meta = io.read_nifti(args.image)
        io.write_nifti(deform.warp(image, field), args.out, meta)
    return 0


def _cmd_exp(args) -> int:
    v = io.read_field(args.field)
    io.write_field(deform.exp_velocity(v, args.steps), args.out, dtype="float64")
    return 0


def _cmd_decode(args) -> int:
    s = io.read_field(args.infile)
    io.write_field(spectral.decode(s), args.out, dtype="float64")
    return 0


def _cmd_encode(args) -> int:
    phi = io.read_field(args.infile)
    window = make_window(phi.grid, _parse_dims(args.band))
    _, s = spectral.encode(phi, window)
    in_band, out_band = spectral.band_energy_split(phi, window)
    total = in_band + out_band
    discarded = out_band / total if total > 0 else 0.0
    print(f"discarded_energy_fraction = {discarded:.6e}")
    io.write_field(s, args.out, dtype="float64")
    return 0


def _cmd_metrics(args) -> int:
    a, _ = io.read_nifti(args.a, as_labels=True)
    b, _ = io.read_nifti(args.b, as_labels=True)
    labels = [int(x) for x in args.labels.split(",")] if args.labels else None
    folding = float("nan")
    if args.field:
        folding = deform.jacobian(io.read_field(args.field)).folding_percent
    report = metrics.evaluate_labels(a, b, labels, folding_percent=folding)
    for lab in sorted(report.dice_per_label):
        print(f"dice[{lab}] = {report.dice_per_label[lab]:.6f}")
    print(f"dice_mean = {report.dice_mean:.6f}")
    for lab in sorted(report.hd95_per_label):
        print(f"hd95[{lab}] = {report.hd95_per_label[lab]:.6f}")
    print(f"hd95_mean = {report.hd95_mean:.6f}")
    if report.skipped_labels:
        print("skipped_labels = " + ",".join(str(x) for x in report.skipped_labels))
    print(f"folding_percent = {folding:.6f}")
    return 0


def _cmd_synth(args) -> int:
    config = synth.SynthConfig(
        dims=_parse_dims(args.dims),
        band_dims=_parse_dims(args.band),
        amplitude=args.amplitude,
        blob_count=args.blobs,
        seed=args.seed,
    )
    pair = synth.make_pair(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_nifti(pair.moving, out / "moving.nii")
    io.write_nifti(pair.fixed, out / "fixed.nii")
    io.write_nifti(pair.labels_moving, out / "labels_moving.nii")
    io.write_nifti(pair.labels_fixed, out / "labels_fixed.nii")
    io.write_field(pair.phi_gt, out / "phi_gt.json", dtype="float64")
    io.write_field(pair.s_gt, out / "s_gt.json", dtype="float64")
    print(f"synthetic pair written to {out}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bandreg",
        description="Band-limited deformable image registration toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("register", help="fit a deformation for one image pair")
    p.add_argument("--moving", required=True)
    p.add_argument("--fixed", required=True)
    p.add_argument("--band", help="band extents, e.g. 16,24")
    p.add_argument("--diffeo", action="store_true")
    p.add_argument("--sim", choices=("mse", "ncc"))
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=_cmd_register)

    p = sub.add_parser("warp", help="apply a displacement field to an image")
    p.add_argument("--image", required=True)
    p.add_argument("--field", required=True)
    p.add_argument("--labels", action="store_true", help="nearest-neighbor label warp")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_warp)

    p = sub.add_parser("exp", help="exponentiate a stationary velocity field")
    p.add_argument("--field", required=True)
    p.add_argument("--steps", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_exp)

    p = sub.add_parser("decode", help="low-resolution field to dense field")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("encode", help="dense field to low-resolution field")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--band", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("metrics", help="Dice/HD95/folding between label maps")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--field")
    p.add_argument("--labels")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("synth", help="generate a synthetic registration bundle")
    p.add_argument("--dims", required=True)
    p.add_argument("--band", required=True)
    p.add_argument("--amplitude", type=float, default=3.0)
    p.add_argument("--blobs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (FileNotFoundError, OSError, io.NiftiFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, IndexError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
