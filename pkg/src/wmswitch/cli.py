"""Command-line entry point: run scenario batches, rho sweeps, print presets."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from .experiments import (
    ConfigError,
    lane_keeping_preset,
    load_config,
    run_monte_carlo,
)


def _add_common_overrides(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="scenario config file (JSON)")
    parser.add_argument("--trials", type=int, help="override trial count")
    parser.add_argument("--steps", type=int, help="override steps per trial")
    parser.add_argument("--seed", type=int, help="override base seed")
    parser.add_argument("--out", default="out", help="output directory for CSV files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wmswitch",
        description=(
            "Watermark-based sensor-attack detection with sensor switching: "
            "simulate trials, write per-trial/per-step/sweep CSVs."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a Monte Carlo batch from a config file")
    _add_common_overrides(run_p)

    sweep_p = sub.add_parser("sweep", help="run the batch across a rho grid")
    _add_common_overrides(sweep_p)
    sweep_p.add_argument(
        "--rho-grid",
        required=True,
        help="comma-separated rho values, e.g. '-0.98,-0.9,0,1'",
    )

    preset_p = sub.add_parser("print-preset", help="print a built-in model preset as JSON")
    preset_p.add_argument("name", choices=["lane-keeping"])
    return parser


def _apply_overrides(config, args):
    updates = {}
    for name in ("trials", "steps", "seed"):
        value = getattr(args, name, None)
        if value is not None:
            updates[name] = value
    if updates:
        config = dataclasses.replace(config, **updates)
    return config


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)

    if args.command == "print-preset":
        model = lane_keeping_preset()
        payload = {
            "A": model.A.tolist(),
            "B": model.B.tolist(),
            "C1": model.C1.tolist(),
            "C2": model.C2.tolist(),
            "w_support": model.w_support.tolist(),
            "zeta_support": model.zeta_support.tolist(),
            "eta_support": model.eta_support.tolist(),
        }
        json.dump(payload, sys.stdout, indent=2)
        sys.stdout.write("\n")
        return 0

    try:
        config = load_config(args.config)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    config = _apply_overrides(config, args)

    if args.command == "sweep":
        try:
            grid = tuple(float(v) for v in args.rho_grid.split(","))
        except ValueError:
            print(f"error: bad --rho-grid {args.rho_grid!r}", file=sys.stderr)
            return 2
        config = dataclasses.replace(config, rho_grid=grid)

    try:
        paths = run_monte_carlo(config, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # model/gain validation problems surface here (e.g. unstable gains)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
