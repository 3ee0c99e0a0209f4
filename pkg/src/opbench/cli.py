"""Command line entry point: ``opbench <command> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure,
3 file or I/O failure.
"""

from __future__ import annotations

import argparse
import configparser
import contextlib
import logging
import sys
from dataclasses import replace

from . import pipeline
from .config import ExperimentConfig, default_config, load_config
from .dataset import PROBLEMS
from .errors import NumericError

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3

COMMANDS = ("generate", "train", "evaluate", "sweep", "compare", "report")

log = logging.getLogger("opbench")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="opbench", description="Operator-learning benchmark for ODE, diffusion-reaction and Burgers cases.")
    common = _Parser(add_help=False)
    common.add_argument("--config", help="experiment INI file")
    common.add_argument("--problem", choices=PROBLEMS, help="problem (overrides the config file)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--iterations", type=int, help="training iterations for the operator network")
    common.add_argument("--threads", type=int, help="cap on BLAS threads")
    common.add_argument("--out", default="runs/default", help="output directory (default: %(default)s)")
    common.add_argument("--full", action="store_true", help="use the full-size training set")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", parents=[common], help="sample input functions and solve them")
    p.add_argument("--force", action="store_true", help="regenerate even if matching data exists")
    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--model", choices=("deeponet", "fcn", "cnn"), default="deeponet")
    p.add_argument("--function-id", type=int, help="test function a baseline is fitted to")
    sub.add_parser("evaluate", parents=[common], help="score the trained operator network on the test set")
    p = sub.add_parser("sweep", parents=[common], help="trunk-width or iteration-count sweep")
    p.add_argument("--kind", choices=("width", "iterations"), default="width")
    sub.add_parser("compare", parents=[common], help="operator network vs per-function baselines")
    sub.add_parser("report", parents=[common], help="write the final report files")
    return parser


def resolve_config(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config, args.problem)
        if args.problem and args.problem != cfg.problem:
            raise UsageError(f"--problem {args.problem} conflicts with config problem {cfg.problem}")
    elif args.problem:
        cfg = default_config(args.problem)
    else:
        raise UsageError("one of --config or --problem is required")
    if args.seed is not None:
        cfg.seed = args.seed
    if args.iterations is not None:
        if args.iterations < 0:
            raise UsageError("--iterations must be non-negative")
        cfg.train = replace(cfg.train, iterations=args.iterations)
    if args.full:
        cfg.full = True
    return cfg


def _threads(n):
    if n is None:
        return contextlib.nullcontext()
    if n <= 0:
        raise UsageError("--threads must be positive")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def run(args) -> None:
    cfg = resolve_config(args)
    out = args.out
    with _threads(args.threads):
        if args.command == "generate":
            for path in pipeline.generate(cfg, out, force=args.force):
                print(path)
        elif args.command == "train":
            if args.model == "deeponet":
                if args.function_id is not None:
                    raise UsageError("--function-id applies to fcn/cnn baselines only")
                result = pipeline.train(cfg, out)
                last = result.history[-1] if result.history else {}
                print(f"trained {cfg.train.iterations} iterations; final train loss {last.get('train_loss', float('nan')):.6g}")
                print(pipeline.paths(out)["checkpoint"])
            else:
                if args.function_id is None:
                    raise UsageError(f"--function-id is required for --model {args.model}")
                _, _, ckpt = pipeline.train_baseline(cfg, out, args.model, args.function_id)
                print(ckpt)
        elif args.command == "evaluate":
            written = pipeline.evaluate(cfg, out)
            print(written["summary"])
        elif args.command == "sweep":
            if args.kind == "width":
                print(pipeline.sweep_widths(cfg, out))
            else:
                print(pipeline.sweep_iterations(cfg, out))
        elif args.command == "compare":
            print(pipeline.compare(cfg, out))
        elif args.command == "report":
            for path in pipeline.report(cfg, out).values():
                print(path)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"opbench: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        run(args)
    except UsageError as exc:
        print(f"opbench: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"opbench: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"opbench: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, configparser.Error) as exc:
        print(f"opbench: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
