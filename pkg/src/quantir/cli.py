"""Command-line front end.

    quantir target --type chip --out chip.nlis
    quantir simulate --sample chip.nlis --seed 7 --out stack/
    quantir reconstruct stack/ --mode variance --out images/
    quantir truncate stack/ --random 10,5,2 --repeats 100 --out study/
    quantir info stack/

Exit codes: 0 success, 2 bad arguments, 3 bad input data, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DataError, QuantirError, RankDeficientError
from .forward import NoiseModel, read_stack, render_stack, write_stack
from .io import (atomic_write_bytes, dump_json, encode_csv, encode_pgm,
                 scale_to_u16, sha256_bytes, sha256_file, write_json)
from .optics import SILICON_INDEX, OpticalConfig, ScanPlan, acquisition_time
from .reconstruct import AMPLITUDE_FLOOR, KINDS, image_sidecar, reconstruct
from .rng import derive_seed
from .sample import (SampleMap, SpeckleModel, apply_speckle, gen_bar_target, gen_capped_chip,
                     gen_chip_contacts, gen_periodic_bars, read_sample, write_sample)
from .truncation import SelectionSpec, run_truncation_study

log = logging.getLogger("quantir")

EXIT_OK, EXIT_ARGS, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
TARGET_TYPES = ("usaf-bars", "grating", "chip", "capped-chip", "flat")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def parse_int_list(text):
    """``"10,5,2"`` -> [10, 5, 2]; ``"1..7"`` -> [1, ..., 7]; mixes allowed."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise argparse.ArgumentTypeError(f"empty range {part!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _int_list(text):
    try:
        return parse_int_list(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


GLOBAL_DEFAULTS = {"seed": 0, "threads": 1, "out": None, "quiet": False, "config": None}


def _global_flags(parser, suppress):
    # Subcommands repeat the global flags with suppressed defaults so a value
    # given before the subcommand is not reset by the subparser.
    def d(name):
        return argparse.SUPPRESS if suppress else GLOBAL_DEFAULTS[name]

    parser.add_argument("--seed", type=int, default=d("seed"), help="master seed for all randomness")
    parser.add_argument("--threads", type=int, default=d("threads"))
    parser.add_argument("--out", default=d("out"), help="output file (target) or directory")
    parser.add_argument("--quiet", action="store_true", default=d("quiet"))
    parser.add_argument("--config", default=d("config"),
                        help="JSON file of option defaults; flags override it")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    p = _Parser(prog="quantir", description=__doc__.split("\n")[0])
    _global_flags(p, suppress=False)
    p.add_argument("--version", action="version", version=f"quantir {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("target", parents=[common], help="generate a sample map")
    t.add_argument("--type", dest="type", choices=TARGET_TYPES, default="chip")
    t.add_argument("--width", type=int, default=128)
    t.add_argument("--height", type=int, default=128)
    t.add_argument("--pitch-um", type=float, help="object-plane pixel pitch")
    t.add_argument("--line-width-um", type=float, default=39.0)
    t.add_argument("--n-bars", type=int, default=3)
    t.add_argument("--period-um", type=float, default=78.0, help="grating period")
    t.add_argument("--orientation", choices=("horizontal", "vertical"), default="horizontal")
    t.add_argument("--layout", help="JSON file with a list of [x, y, w, h] strokes")
    t.add_argument("--r-si", type=float, default=0.55)
    t.add_argument("--r-metal", type=float, default=0.1)
    t.add_argument("--r", type=float, default=1.0, help="reflectivity of a flat target")
    t.add_argument("--cap-t", type=float, default=0.7)
    t.add_argument("--bend-nm", type=float, default=0.0)
    t.add_argument("--immersion", type=float, default=SILICON_INDEX)
    t.add_argument("--no-speckle", action="store_true")
    t.add_argument("--grain-um", type=float, default=10.0)
    t.add_argument("--speckle-floor", type=float, default=0.2)

    s = sub.add_parser("simulate", parents=[common], help="render a frame stack")
    s.add_argument("--sample", help="sample container (default: generated chip)")
    s.add_argument("--optics", help="OpticalConfig JSON file")
    s.add_argument("--f3", type=float, default=25.0)
    s.add_argument("--phi-ref", type=float)
    s.add_argument("--frames", type=int, default=64)
    s.add_argument("--z-start", type=float, default=0.0)
    s.add_argument("--z-step", type=float,
                   help="nm per frame (default: frames span one idler wavelength)")
    s.add_argument("--exposure-ms", type=float, default=300.0)
    s.add_argument("--mean-counts", type=float, default=1000.0)
    s.add_argument("--read-noise", type=float, default=2.0)
    s.add_argument("--no-shot-noise", action="store_true")
    s.add_argument("--no-quantize", action="store_true")
    s.add_argument("--noiseless", action="store_true")
    s.add_argument("--no-psf", action="store_true")
    s.add_argument("--dry-run", action="store_true")

    r = sub.add_parser("reconstruct", parents=[common], help="compute images from a stack")
    r.add_argument("stack")
    r.add_argument("--mode", default="variance",
                   help="comma list of " + "|".join(KINDS))
    r.add_argument("--raw", action="store_true", help="do not mean-normalize the variance")
    r.add_argument("--tau", type=float, default=1.0)
    r.add_argument("--mu", type=float, default=1.0)
    r.add_argument("--amp-floor", type=float, default=AMPLITUDE_FLOOR)

    u = sub.add_parser("truncate", parents=[common], help="frame-subset degradation study")
    u.add_argument("stack")
    u.add_argument("--random", type=_int_list)
    u.add_argument("--gapped", type=_int_list)
    u.add_argument("--continuous", type=_int_list)
    u.add_argument("--repeats", type=int, default=1)
    u.add_argument("--max-gap", type=int, default=7)
    u.add_argument("--mode", choices=("variance", "std", "visibility", "reflectivity"),
                   default="variance")
    u.add_argument("--raw", action="store_true")

    i = sub.add_parser("info", parents=[common], help="print sample or stack metadata")
    i.add_argument("path")
    return p, sub


def parse_args(argv):
    parser, sub = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            defaults = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(defaults, dict):
            raise UsageError(f"config {args.config} must hold a JSON object")
        options = {k: v for k, v in defaults.items() if k != "optics"}
        parser.set_defaults(**{k: v for k, v in options.items() if k in GLOBAL_DEFAULTS})
        sub.choices[args.command].set_defaults(
            **{k.replace("-", "_"): v for k, v in options.items() if k not in GLOBAL_DEFAULTS})
        args = parser.parse_args(argv)
        args._config_data = defaults
    else:
        args._config_data = {}
    return args


class Run:
    """Collects the manifest for one invocation."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.start = time.perf_counter()
        self.inputs = {}
        self.outputs = {}
        self.configs = {}
        self.seeds = {"seed": args.seed}

    def input(self, path):
        path = Path(path)
        if path.is_dir():
            for f in sorted(path.iterdir()):
                if f.is_file() and f.name != "manifest.json":
                    self.inputs[str(f)] = sha256_file(f)
        else:
            self.inputs[str(path)] = sha256_file(path)

    def config(self, name, obj):
        self.configs[name] = sha256_bytes(json.dumps(obj, sort_keys=True).encode())

    def output(self, path, data):
        atomic_write_bytes(path, data)
        self.outputs[str(path)] = sha256_bytes(data)

    def finish(self, directory):
        manifest = {
            "command": self.args.command,
            "argv": self.argv,
            "version": __version__,
            "config_digests": self.configs,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "wall_clock_seconds": round(time.perf_counter() - self.start, 6),
        }
        write_json(Path(directory) / "manifest.json", manifest)


def _say(args, text):
    if not args.quiet:
        print(text)


def _default_pitch(args):
    if args.pitch_um:
        return args.pitch_um
    if args.type == "usaf-bars":
        return args.line_width_um / 8.0
    if args.type == "grating":
        return args.period_um / 16.0
    return 5.0


def make_target(args):
    canvas = (args.width, args.height)
    pitch = _default_pitch(args)
    speckle = SpeckleModel(enabled=not args.no_speckle, grain_size=max(args.grain_um, pitch),
                           amplitude_floor=args.speckle_floor, seed=derive_seed(args.seed, "speckle"))
    if args.type == "usaf-bars":
        return gen_bar_target(args.line_width_um, args.n_bars, canvas, pitch, args.orientation)
    if args.type == "grating":
        return gen_periodic_bars(args.period_um, canvas, pitch, args.orientation)
    if args.type == "flat":
        return SampleMap.uniform(args.width, args.height, pitch, r=args.r, sample_id="flat",
                                 params={"r": args.r})
    layout = None
    if args.layout:
        try:
            layout = json.loads(Path(args.layout).read_text())
        except ValueError as exc:
            raise DataError(f"{args.layout}: malformed layout JSON: {exc}", offset=0) from exc
    chip = apply_speckle(gen_chip_contacts(layout, canvas, pitch, args.r_si, args.r_metal), speckle)
    if args.type == "capped-chip":
        chip = gen_capped_chip(chip, args.cap_t, args.bend_nm, args.immersion)
    return chip


def cmd_target(args, run):
    out = Path(args.out or "sample.nlis")
    sample = make_target(args)
    run.config("target", {k: v for k, v in vars(args).items() if not k.startswith("_")})
    run.seeds["speckle"] = derive_seed(args.seed, "speckle")
    write_sample(sample, out)
    run.outputs[str(out)] = sha256_file(out)
    run.finish(out.parent)
    _say(args, dump_json(sample.summary()).rstrip())
    return EXIT_OK


def resolve_optics(args, sample=None):
    if args.optics:
        try:
            optics = OpticalConfig.from_json(Path(args.optics).read_text())
        except ValueError as exc:
            raise ConfigError(f"{args.optics}: {exc}") from exc
    elif "optics" in args._config_data:
        optics = OpticalConfig.from_dict(args._config_data["optics"])
    else:
        optics = OpticalConfig.for_lens(args.f3)
    if sample is not None and sample.immersion_index != optics.immersion_index:
        optics = optics.with_immersion(sample.immersion_index)
    if args.phi_ref is not None:
        optics = OpticalConfig(**dict(optics.to_dict(), phi_ref=args.phi_ref))
    return optics


def resolve_plan(args, optics):
    if args.frames == 1 and not args.z_step:
        return ScanPlan(args.z_start, 0.0, 1, args.exposure_ms)
    if args.z_step is None:
        return ScanPlan.over_phase(optics.lambda_idler, n_frames=args.frames, periods=2,
                                   exposure=args.exposure_ms, z_start=args.z_start)
    return ScanPlan(args.z_start, args.z_step, args.frames, args.exposure_ms)


def default_sample(seed):
    chip = gen_chip_contacts(None, (128, 128), 5.0)
    return apply_speckle(chip, SpeckleModel(seed=derive_seed(seed, "speckle")))


def cmd_simulate(args, run):
    sample = read_sample(args.sample) if args.sample else None
    optics = resolve_optics(args, sample)
    plan = resolve_plan(args, optics)
    if args.dry_run:
        print(f"frames: {plan.n_frames}")
        print(f"z: {plan.z_start:g} .. {plan.z_start + (plan.n_frames - 1) * plan.z_step:g} nm "
              f"(step {plan.z_step:g} nm)")
        print(f"acquisition: {acquisition_time(plan.n_frames, plan.exposure):g} s")
        return EXIT_OK
    if sample is None:
        sample = default_sample(args.seed)
        run.seeds["speckle"] = derive_seed(args.seed, "speckle")
    else:
        run.input(args.sample)
    noise = None
    if not args.noiseless:
        noise = NoiseModel(mean_counts=args.mean_counts, shot_noise=not args.no_shot_noise,
                           read_noise_sigma=args.read_noise, quantize=not args.no_quantize,
                           seed=derive_seed(args.seed, "noise"))
        run.seeds["noise"] = noise.seed
    run.config("optics", optics.to_dict())
    run.config("plan", plan.to_dict())
    if noise is not None:
        run.config("noise", asdict(noise))
    stack = render_stack(sample, optics, plan, psf=not args.no_psf, noise=noise,
                         threads=args.threads, i0=args.mean_counts)
    out = Path(args.out or "stack")
    write_stack(stack, out)
    for name in ("frames.bin", "meta.json"):
        run.outputs[str(out / name)] = sha256_file(out / name)
    run.finish(out)
    _say(args, f"wrote {len(stack)} frames {stack.shape[1]}x{stack.shape[0]} to {out} "
               f"(acquisition {stack.acquisition_seconds:g} s)")
    return EXIT_OK


def cmd_reconstruct(args, run):
    stack = read_stack(args.stack)
    run.input(args.stack)
    out = Path(args.out or "images")
    modes = [m.strip() for m in args.mode.split(",") if m.strip()]
    for mode in modes:
        if mode not in KINDS:
            raise ConfigError(f"unknown mode {mode!r}; choose from {', '.join(KINDS)}")
    run.config("reconstruct", {"modes": modes, "normalized": not args.raw, "tau": args.tau,
                               "mu": args.mu, "amp_floor": args.amp_floor})
    for mode in modes:
        image = reconstruct(stack, mode, normalized=not args.raw, tau=args.tau, mu=args.mu,
                            amplitude_floor=args.amp_floor)
        u16, vmin, vmax = scale_to_u16(image.values)
        meta = image_sidecar(image, vmin, vmax)
        comment = f"quantir {mode} frames_used={image.frames_used} normalized={image.normalized}"
        run.output(out / f"{mode}.pgm", encode_pgm(u16, comment))
        run.output(out / f"{mode}.csv", encode_csv(image.values).encode())
        run.output(out / f"{mode}.json", dump_json(meta).encode())
        _say(args, f"{mode}: min {vmin:.6g} max {vmax:.6g} -> {out / (mode + '.pgm')}")
    run.finish(out)
    return EXIT_OK


def cmd_truncate(args, run):
    if not (args.random or args.gapped or args.continuous):
        raise ConfigError("give at least one of --random, --gapped, --continuous")
    stack = read_stack(args.stack)
    run.input(args.stack)
    specs = [SelectionSpec.continuous(n) for n in args.continuous or []]
    specs += [SelectionSpec.gapped(g, args.max_gap) for g in args.gapped or []]
    select_seed = derive_seed(args.seed, "truncate")
    specs += [SelectionSpec.random(k, select_seed) for k in args.random or []]
    run.seeds["selection"] = select_seed
    run.config("truncate", {"specs": [s.label for s in specs], "repeats": args.repeats,
                            "mode": args.mode, "normalized": not args.raw})
    report = run_truncation_study(stack, specs, repeats=args.repeats, mode=args.mode,
                                  normalized=not args.raw)
    out = Path(args.out or "truncation")
    run.output(out / "report.json", report.to_json().encode())
    run.output(out / "report.csv", report.to_csv().encode())
    run.output(out / "report.dat", report.to_gnuplot().encode())
    run.finish(out)
    for g in report.groups():
        if g["repeats"]:
            _say(args, f"{g['label']:>14}  frames {g['frames_used']:>3}  "
                       f"rel.diff {g['mean_relative_diff']:.4f} +- {g['stderr_relative_diff']:.4f}  "
                       f"t {g['acquisition_seconds']:g} s")
        else:
            _say(args, f"{g['label']:>14}  failed ({g['errors']} rows)")
    if all(row["error"] is not None for row in report.rows):
        log.error("every row of the study failed")
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_info(args, run):
    path = Path(args.path)
    if path.is_dir():
        stack = read_stack(path)
        meta = json.loads((path / "meta.json").read_text())
        meta.pop("z_positions", None)
        meta["frame_range"] = [float(stack.frames.min()), float(stack.frames.max())]
        print(dump_json(meta).rstrip())
    else:
        print(dump_json(read_sample(path).summary()).rstrip())
    return EXIT_OK


COMMANDS = {"target": cmd_target, "simulate": cmd_simulate, "reconstruct": cmd_reconstruct,
            "truncate": cmd_truncate, "info": cmd_info}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ARGS
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args, Run(args, argv))
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (RankDeficientError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except QuantirError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
