import argparse
import json
import logging
import sys
import threading
from typing import Optional

import pydantic

from washboard.cli.sweep import load_sweep_spec, run_sweep
from washboard.cli.validate import describe, report_validation
from washboard.exception import UsageError
from washboard.utils.error_handler import handle_excepthook, thread_excepthook
from washboard.utils.thread_logger import get_thread_logger
from washboard.washboard_config import WASHBOARD_CONFIG

EXIT_USAGE = 2

# flag dest -> path inside the sweep spec
OVERRIDES = {
    "potential": ("potential",),
    "forces": ("forces",),
    "engines": ("engines",),
    "out": ("out",),
    "format": ("format",),
    "seed": ("seed",),
    "quad_n": ("quad", "n_grid"),
    "quad_tol": ("quad", "rel_tol"),
    "sde_dt": ("sde", "dt"),
    "sde_tfinal": ("sde", "t_final"),
    "sde_paths": ("sde", "n_paths"),
    "fpe_n": ("fpe", "n"),
    "fpe_tfinal": ("fpe", "t_final"),
    "min_scan": ("min_scan",),
    "workers": ("workers",),
}


def _add_sweep_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        "-c",
        dest="config",
        help="YAML or JSON sweep file; flags override its values",
    )
    parser.add_argument(
        "--potential",
        help='Potential spec as JSON or a file, e.g. {"kind": "cosine", "A": 1}',
    )
    parser.add_argument(
        "--forces",
        help="Forces: 1,2,4 or a:b:n (linear) or loga:b:n (logarithmic)",
    )
    parser.add_argument(
        "--engines",
        help="Comma separated subset of formula,small_f,large_f,sde,fpe",
    )
    parser.add_argument("--out", help="Path of the result table")
    parser.add_argument(
        "--format", choices=["csv", "jsonl"], help="Format of the table"
    )
    parser.add_argument(
        "--seed", type=int, help="Seed of the stochastic oracle"
    )
    parser.add_argument(
        "--quad-n", dest="quad_n", type=int, help="Initial quadrature grid"
    )
    parser.add_argument(
        "--quad-tol",
        dest="quad_tol",
        type=float,
        help="Relative tolerance of the quadrature refinement",
    )
    parser.add_argument(
        "--sde-dt", dest="sde_dt", type=float, help="Euler-Maruyama step"
    )
    parser.add_argument(
        "--sde-tfinal", dest="sde_tfinal", type=float, help="SDE horizon"
    )
    parser.add_argument(
        "--sde-paths", dest="sde_paths", type=int, help="SDE ensemble size"
    )
    parser.add_argument(
        "--fpe-n", dest="fpe_n", type=int, help="Cells of the FPE oracle"
    )
    parser.add_argument(
        "--fpe-tfinal", dest="fpe_tfinal", type=float, help="FPE horizon"
    )
    parser.add_argument(
        "--min-scan",
        dest="min_scan",
        help="Bracket a:b of a search for the minimum of D_eff",
    )
    parser.add_argument(
        "--workers",
        dest="workers",
        type=int,
        help="Number of rows evaluated concurrently",
    )
    parser.add_argument(
        "--summary",
        help="Write the JSON summary here instead of stdout",
    )
    parser.add_argument("--log-file", dest="log_file", help="Log file")


def build_parser() -> argparse.ArgumentParser:
    """Parser of the washboard command line"""
    parser = argparse.ArgumentParser(
        prog="washboard",
        description="Transport coefficients of a Brownian particle on a "
        "tilted periodic potential",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    _add_sweep_arguments(
        subparsers.add_parser(
            "sweep", help="Evaluate engines over a range of forces"
        )
    )
    _add_sweep_arguments(
        subparsers.add_parser(
            "validate", help="Compare at least two engines over the forces"
        )
    )
    return parser


def overrides_from_args(args: argparse.Namespace) -> dict:
    """Nested spec values of the flags that were given"""
    overrides: dict = {}
    for dest, path in OVERRIDES.items():
        value = getattr(args, dest)
        if value is None:
            continue
        target = overrides
        for key in path[:-1]:
            target = target.setdefault(key, {})
        target[path[-1]] = value
    return overrides


def _usage_error(message: str) -> int:
    print(
        json.dumps({"error_type": "UsageError", "message": message}),
        file=sys.stderr,
    )
    return EXIT_USAGE


def _emit(text: str, path: Optional[str]) -> None:
    if path is None:
        print(text)
        return
    with open(path, "w", encoding="utf-8") as summary_file:
        summary_file.write(text)


def main(argv: Optional[list[str]] = None) -> int:
    """Run a subcommand and return its exit code"""
    args = build_parser().parse_args(argv)

    logging.basicConfig(
        filename=args.log_file,
        level=logging.INFO,
        format="%(asctime)s %(levelname)-7s, %(name)s, %(filename)-9s:%(lineno)d, %(message)s",
    )
    logger = get_thread_logger(with_prefix=False)

    # Register custom exception hook
    sys.excepthook = handle_excepthook
    threading.excepthook = thread_excepthook

    logger.info("washboard started with [%s]", sys.argv)
    logger.info("washboard config: %s", WASHBOARD_CONFIG)

    try:
        spec = load_sweep_spec(args.config, overrides_from_args(args))
        if args.command == "sweep":
            sweep = run_sweep(spec)
            _emit(sweep.summary.to_json(), args.summary)
            return sweep.summary.exit_code
        validation = report_validation(spec)
    except (UsageError, pydantic.ValidationError, ValueError) as exc:
        logger.error("invalid request: %s", exc)
        return _usage_error(str(exc))

    _emit(validation.to_json(), args.summary)
    if args.summary is not None:
        print(describe(validation))
    return validation.exit_code


if __name__ == "__main__":
    sys.exit(main())
