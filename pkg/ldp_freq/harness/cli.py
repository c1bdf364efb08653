"""ldp-freq command line: run, sweep and bench.

Exit codes: 0 success, 2 invalid configuration, 3 no usable mechanism
parameters.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from ..errors import InvalidConfig, LdpError
from .config import OPTIONS, PUBLIC_COIN_NAMES, ExperimentConfig, parse_distribution
from .runner import (
    BENCH_COLUMNS,
    BENCH_HPG_Q,
    BENCH_REPEATS,
    CDF_COLUMNS,
    RUN_COLUMNS,
    SWEEP_COLUMNS,
    bench_decode,
    emit_cdf,
    run_trials,
    sweep_epsilon,
    trial_rows,
    write_table,
)

logger = logging.getLogger("ldp_freq")

EXIT_OK = 0
EXIT_INVALID_CONFIG = 2
EXIT_PARAMETER_FAILURE = 3

TYPES = {"INT": int, "FLOAT": float, "PATH": Path}


def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from e


def add_config_options(parser: argparse.ArgumentParser):
    for name, (kind, opt) in OPTIONS.items():
        flag = "--" + name.replace("_", "-")
        if name == "distribution":
            parser.add_argument("--dist", dest=name, default=opt["default"], help=opt["help"])
        elif kind == "BOOLEAN":
            parser.add_argument(flag, dest=name, action=argparse.BooleanOptionalAction, default=opt["default"], help=opt["help"])
        elif isinstance(kind, list):
            parser.add_argument(flag, dest=name, choices=kind, default=opt["default"], help=opt["help"])
        else:
            parser.add_argument(flag, dest=name, type=TYPES[kind], default=opt["default"], help=opt["help"])
    parser.add_argument("--public-coin", action="store_true", help="use the public-coin variant of pg or hpg")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("--quiet", action="store_true", help="warnings only, no progress bar")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldp-freq", description="Local differential privacy frequency estimation experiments")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="repeated trials, one CSV row per trial")
    add_config_options(run)
    run.add_argument("--cdf", type=Path, default=None, help="also write the mse CDF here")

    sweep = commands.add_parser("sweep", help="mean mse per epsilon")
    add_config_options(sweep)
    sweep.add_argument("--epsilons", type=_float_list, required=True, help="e.g. 1,2,3,4,5")

    bench = commands.add_parser("bench", help="median server decode time")
    add_config_options(bench)
    bench.add_argument("--decoders", type=lambda s: s.split(","), default=None, help="subset of pg-dp,pg-naive,hpg,pirappor-dp")
    bench.add_argument("--repeats", type=int, default=BENCH_REPEATS)
    bench.add_argument("--hpg-q", type=int, default=BENCH_HPG_Q)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values = {name: getattr(args, name) for name in OPTIONS}
    distribution, exponent = parse_distribution(values["distribution"])
    values["distribution"] = distribution
    if exponent is not None:
        values["zipf_s"] = exponent
    if args.public_coin:
        if values["mechanism"] not in PUBLIC_COIN_NAMES:
            raise InvalidConfig(f"--public-coin applies to pg and hpg, not {values['mechanism']}")
        values["mechanism"] = PUBLIC_COIN_NAMES[values["mechanism"]]
    if args.quiet:
        values["progress"] = False
    return ExperimentConfig(**values)


def _run(args, config: ExperimentConfig):
    results = run_trials(config)
    write_table(trial_rows(results), RUN_COLUMNS, config.out, config.format)
    if args.cdf is not None:
        write_table(emit_cdf(results), CDF_COLUMNS, args.cdf, config.format)


def _sweep(args, config: ExperimentConfig):
    write_table(sweep_epsilon(config, args.epsilons), SWEEP_COLUMNS, config.out, config.format)


def _bench(args, config: ExperimentConfig):
    report = bench_decode(config, decoders=args.decoders, repeats=args.repeats, hpg_q=args.hpg_q)
    write_table(report, BENCH_COLUMNS, config.out, config.format)


COMMANDS = {"run": _run, "sweep": _sweep, "bench": _bench}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logger.setLevel(logging.DEBUG)
    elif args.quiet:
        logger.setLevel(logging.WARNING)

    try:
        config = config_from_args(args)
        COMMANDS[args.command](args, config)
    except InvalidConfig as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_INVALID_CONFIG
    except (LdpError, ValueError) as e:
        logger.error(f"Parameter derivation failed: {e}")
        return EXIT_PARAMETER_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
