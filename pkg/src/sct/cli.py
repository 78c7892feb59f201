"""Command-line entry point: ``sct run | sweep | inspect | calibrate``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .harness import (ConfigError, ExperimentConfig, StageError, allocation_plan, load_config,
                      parse_grid, run_trial, sweep)
from .imageio import write_image, write_pnm

log = logging.getLogger("sct")


def _config(path) -> ExperimentConfig:
    return load_config(path) if path else ExperimentConfig()


def cmd_run(args) -> int:
    cfg = _config(args.config)
    if args.scheme:
        cfg = replace(cfg, scheme=args.scheme)
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    for scheme in cfg.schemes():
        rep = run_trial(cfg, args.seed, scheme, keep_images=out_dir is not None)
        print(rep.to_json(timings=args.timings))
        if out_dir:
            ext = ".png" if args.png else (".ppm" if rep.images["reconstruction"].ndim == 3 else ".pgm")
            write_image(out_dir / f"{scheme}_reconstruction{ext}", rep.images["reconstruction"])
            write_pnm(out_dir / f"{scheme}_mask.pgm", rep.images["mask"])
            write_pnm(out_dir / f"{scheme}_provenance.pgm", rep.images["provenance"])
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.scheme:
        cfg = replace(cfg, scheme=args.scheme)
    snr = parse_grid(args.snr) if args.snr else [cfg.snr_db]
    rate = parse_grid(args.rate) if args.rate else [cfg.rate_r]
    res = sweep(cfg, snr, rate, trials=args.trials, jobs=args.jobs)
    for e in res.errors:
        log.error("cell scheme=%s snr=%s R=%s seed=%s failed: %s",
                  e["scheme"], e["snr_db"], e["rate_r"], e["seed"], e["error"])
    text = res.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 1 if res.errors else 0


def cmd_inspect(args) -> int:
    cfg = _config(args.config)
    if not args.plan:
        log.error("nothing to inspect; pass --plan")
        return 2
    plan = allocation_plan(cfg, args.seed, args.scheme)
    sys.stdout.write(plan.to_csv())
    return 0


def cmd_calibrate(args) -> int:
    from .modular import calibrate

    calibrate.main(["--codewords", str(args.codewords), "--step", str(args.step)])
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sct", description="Semantic coded transmission simulator.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    schemes = ("modular", "integrated", "both")

    p = sub.add_parser("run", help="run one trial and print its report as JSON")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--scheme", choices=schemes)
    p.add_argument("--out-dir", help="write reconstruction, mask and provenance images here")
    p.add_argument("--png", action="store_true", help="write the reconstruction as PNG")
    p.add_argument("--timings", action="store_true", help="include stage timings in the report")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="Monte-Carlo sweep over SNR and R, written as CSV")
    p.add_argument("--config")
    p.add_argument("--snr", help="a:b:step in dB (inclusive)")
    p.add_argument("--rate", help="a:b:step channel bandwidth ratio")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--scheme", choices=schemes)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("inspect", help="dump intermediate artefacts")
    p.add_argument("--plan", action="store_true", help="print the AllocationPlan as CSV")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--scheme", choices=("modular", "integrated"))
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("calibrate", help="re-run the MCS threshold BER simulation")
    p.add_argument("--codewords", type=int, default=300)
    p.add_argument("--step", type=float, default=0.25)
    p.set_defaults(func=cmd_calibrate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, StageError, OSError) as e:
        log.error("%s", e)
        return 2


if __name__ == "__main__":
    sys.exit(main())
