"""
Entrypoint for the GCMP ignorability engine.

Usage:
    python main.py certify --input fixtures/m1_ignorable.json
    python main.py certify --scenario right_censor_informative --tol 1e-10
    python main.py battery --seed 7 --n 200
    python main.py estimate --input fixtures/study_m1_anticipating.json --output report.json
    python main.py list-scenarios
    python main.py verify-example
"""
import argparse
import logging
import sys

from cli import COMMANDS, RunConfig, run
from config import DEFAULT_SEED, LOG_LEVEL, PATH_COUNT_CAP


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Exact likelihood and ignorability certification for coarsened processes")
    parser.add_argument("command", choices=COMMANDS, help="What to run")
    parser.add_argument("--input", action="append", default=[], help="Model file (repeatable)")
    parser.add_argument("--output", default=None, help="Report path; stdout when omitted")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED, help="Random seed")
    parser.add_argument("--cap", type=int, default=None, help=f"Path-count cap (default {PATH_COUNT_CAP}, env GCMP_PATH_CAP)")
    parser.add_argument("--tol", type=float, default=None, help="Tolerance for derived quantities")
    parser.add_argument("--scenario", default=None, help="Catalog scenario name")
    parser.add_argument("--n", type=int, default=None, help="Battery models, or sample size for estimate")
    parser.add_argument("--replicates", type=int, default=None, help="Estimation replicates")
    parser.add_argument("--workers", type=int, default=1, help="Threads for estimation replicates")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=LOG_LEVEL, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    config = RunConfig(
        command=args.command,
        inputs=tuple(args.input),
        output=args.output,
        seed=args.seed,
        cap=args.cap,
        tol=args.tol,
        scenario=args.scenario,
        n=args.n,
        replicates=args.replicates,
        workers=args.workers,
    )
    code, _ = run(config)
    return code


if __name__ == "__main__":
    sys.exit(main())
