import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from config import load_run_config
from exceptions import (
    ConfigError, ConvergenceError, IntegrationError, ParameterDomainError, PrecisionError,
)
from services.pipeline import ControlPipeline

logger = logging.getLogger("degctrl")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INTERNAL = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="degctrl",
        description="Boundary null control of degenerate fourth-order parabolic equations by the moment method",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("params", "derived parameters and regime"),
        ("modes", "eigenvalues, trace constants and zero certification"),
        ("synthesize", "build the control and certify the final state"),
        ("sweep", "cost bounds along a T or alpha grid"),
        ("verify", "run the invariant suite"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("config", nargs="?", help="INI run file (defaults if omitted)")
        cmd.add_argument("--out", help="output directory (overrides [outputs] directory)")
        if name == "sweep":
            cmd.add_argument("--axis", required=True, help="T:lo:hi:n or alpha:lo:hi:n")
            cmd.add_argument("--with-control", action="store_true", help="also synthesize a control at every point")
    return parser


async def _dispatch(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config)
    out = Path(args.out or cfg.outputs.directory)
    out.mkdir(parents=True, exist_ok=True)

    pipeline = ControlPipeline()
    try:
        if args.command == "params":
            report = await pipeline.params(cfg, out)
            for key in ("ell", "gamma", "kappa", "nu", "regime", "mu_critical"):
                print(f"{key} = {report[key]}")
            for key, value in report["rho"].items():
                print(f"{key} = {value}")
            return EXIT_OK
        if args.command == "modes":
            basis = await pipeline.modes(cfg, out)
            print(f"{basis.K} modes written to {out}")
            return EXIT_OK
        if args.command == "synthesize":
            summary = await pipeline.synthesize(cfg, out)
            print(f"biorthogonality {'pass' if summary.biorth_passed else 'FAIL'}, "
                  f"certificate {'pass' if summary.certificate_passed else 'FAIL'}, "
                  f"max coefficient {summary.max_coeff:.3e}")
            return EXIT_OK if summary.passed else EXIT_NUMERICAL
        if args.command == "sweep":
            rows = await pipeline.sweep(cfg, args.axis, out, args.with_control)
            print(f"{len(rows)} rows written to {out / 'sweep.csv'}")
            return EXIT_OK
        report = await pipeline.verify(cfg, out)
        for name, ok in report.checks.items():
            print(f"{'ok  ' if ok else 'FAIL'} {name}")
        return EXIT_OK if report.passed else EXIT_NUMERICAL
    finally:
        pipeline.close()


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        return asyncio.run(_dispatch(args))
    except (ConfigError, ParameterDomainError, ValidationError) as e:
        logger.error(f"Configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (PrecisionError, ConvergenceError, IntegrationError) as e:
        logger.error(f"Numerical failure: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except Exception as e:
        logger.exception(f"Internal error: {e}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
