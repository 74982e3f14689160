"""Command-line entry point: ``molsync run|sweep|optimize-xi|schema``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from pydantic import ValidationError

from .errors import MolsyncError
from .harness import (
    SWEEP_PARAMS,
    ExperimentConfig,
    optimize_threshold,
    run_experiment,
    sweep,
    write_experiment,
    write_sweep,
    write_threshold_search,
)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _load(args: argparse.Namespace) -> ExperimentConfig:
    config = ExperimentConfig.from_file(args.config)
    overrides = {}
    for name in ("seed", "blocks", "threads"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    return config.with_updates(**overrides) if overrides else config


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment JSON file")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--blocks", type=int, help="override the number of Monte Carlo blocks")
    common.add_argument("--threads", type=int, help="worker processes")
    common.add_argument("--out", help="output directory (default: config output_dir, else ./out)")

    parser = argparse.ArgumentParser(prog="molsync", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("run", parents=[common], help="run one experiment")

    p = sub.add_parser("sweep", parents=[common], help="run one experiment per parameter value")
    p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p.add_argument("--values", required=True, type=_float_list, help="comma-separated values")

    p = sub.add_parser("optimize-xi", parents=[common], help="grid-search the TT threshold")
    p.add_argument("--grid", type=_float_list, help="comma-separated thresholds (default: automatic)")
    p.add_argument("--objective", choices=("ber", "mae"), default=None)

    sub.add_parser("schema", help="print the JSON schema of the config file")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.command == "schema":
        print(json.dumps(ExperimentConfig.model_json_schema(), indent=2))
        return 0
    try:
        config = _load(args)
        out_dir = args.out or config.output_dir or "out"
        if args.command == "run":
            result = run_experiment(config)
            out = write_experiment(result, out_dir)
            agg = result.aggregate
            print(f"BER {agg.mean_ber:.4g} (SE {agg.ber_stderr:.2g}), MAE {agg.mean_abs_error:.4g} -> {out}")
        elif args.command == "sweep":
            res = sweep(config, args.param, args.values)
            out = write_sweep(res, out_dir)
            for v in res.infeasible:
                print(f"{args.param}={v:g}: infeasible", file=sys.stderr)
            print(f"{len(res.feasible)} points -> {out}")
        else:
            objective = args.objective or config.tt.objective
            best, table = optimize_threshold(config, args.grid or config.tt.grid, objective)
            out = write_threshold_search(config, best, table, objective, out_dir)
            print(f"best threshold {best:g} ({objective}) -> {out}")
    except (ValidationError, MolsyncError, ValueError, OSError) as exc:
        print(f"molsync: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
