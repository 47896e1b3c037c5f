"""Command-line front end.

    crwm run --algo crwm --data datasets/sonar.arff --runs 5 --seed 7
    crwm compare --algos rwm,crwm --synthetic specialists --runs 50
    crwm sweep --algo crwm --data datasets/diabetes.arff --betas 0.1,0.5,0.9
    crwm bounds --synthetic specialists --length 10000
    crwm synth --synthetic specialists --length 1000 --out stream.csv

Exit status: 0 ok, 1 unreadable data, 2 usage or configuration error,
3 a mistake bound was violated under ``--assert-bounds``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from . import report_io
from .evaluation import (
    ALGORITHMS,
    ExperimentConfig,
    SyntheticExpertSpec,
    beta_sweep,
    compare,
    generate_synthetic_stream,
    run_experiment,
    specialist_spec,
)
from .stream_io import ParseError, load_dataset

EXIT_OK, EXIT_DATA, EXIT_USAGE, EXIT_BOUND = 0, 1, 2, 3
OUTPUT_DIR_ENV = "CRWM_OUTPUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_common(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--data", help="ARFF file, or CSV together with --schema")
    src.add_argument("--synthetic", help="'specialists' or a JSON file with error_rates/prior")
    p.add_argument("--schema", help="header-only ARFF file describing a CSV input")
    p.add_argument("--class-attribute", help="class attribute name (default: last)")
    p.add_argument("--no-header", action="store_true", help="CSV input has no header row")
    p.add_argument("--length", type=int, default=10_000, help="synthetic stream length")
    p.add_argument("--experts", type=int, default=100, help="number of base experts")
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--class-order", type=_ints, help="routing order, e.g. 1,0")
    p.add_argument("--keep-prob", type=float, default=0.7, help="feature-subspace keep probability")
    p.add_argument("--no-subspace", action="store_true", help="train experts on all features")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for independent runs")
    p.add_argument("--format", choices=("machine", "table"), default="machine")
    p.add_argument("--out", help="output file ('-' for stdout)")
    p.add_argument("--timing", action="store_true", help="include wall-clock seconds")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crwm", description="Cascading randomized weighted majority experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="one algorithm on one stream")
    _add_common(p)
    p.add_argument("--algo", choices=ALGORITHMS, default="crwm")
    p.add_argument("--assert-bounds", action="store_true", help="exit 3 if any mistake bound fails")

    p = sub.add_parser("compare", help="several algorithms with paired t-tests")
    _add_common(p)
    p.add_argument("--algos", default="rwm,crwm", help="comma-separated algorithm list")
    p.add_argument("--reference", help="algorithm tested against the others (default crwm)")

    p = sub.add_parser("sweep", help="mean accuracy over a beta grid")
    _add_common(p)
    p.add_argument("--algos", default="crwm", help="comma-separated algorithm list")
    p.add_argument("--algo", dest="algos", help="alias for a single algorithm")
    p.add_argument("--betas", type=_floats, default=ExperimentConfig().betas)

    p = sub.add_parser("bounds", help="mistake bounds against observed mistakes")
    _add_common(p)
    p.add_argument("--assert-bounds", action="store_true", help="exit 3 if any mistake bound fails")

    p = sub.add_parser("synth", help="write a synthetic expert stream as CSV")
    _add_common(p)
    return parser


def _load_source(args):
    if args.synthetic:
        if args.length < 1:
            raise UsageError("--length must be >= 1")
        if args.synthetic == "specialists":
            return specialist_spec(args.length, args.seed)
        path = Path(args.synthetic)
        if not path.is_file():
            raise UsageError(f"no such synthetic spec file: {path}")
        try:
            obj = json.loads(path.read_text())
            return SyntheticExpertSpec(
                error_rates=tuple(tuple(r) for r in obj["error_rates"]),
                prior=tuple(obj["prior"]),
                length=int(obj.get("length", args.length)),
                seed=args.seed,
                name=str(obj.get("name", path.stem)),
            )
        except (ValueError, KeyError, TypeError) as e:
            raise UsageError(f"bad synthetic spec {path}: {e}") from None
    if not args.data:
        raise UsageError("one of --data or --synthetic is required")
    for f in (args.data, args.schema):
        if f is not None and not Path(f).is_file():
            raise UsageError(f"no such file: {f}")
    try:
        return load_dataset(args.data, args.schema, args.class_attribute, header=not args.no_header)
    except ParseError:
        raise
    except ValueError as e:
        raise UsageError(str(e)) from None


def _config(args, algorithm: str) -> ExperimentConfig:
    try:
        return ExperimentConfig(
            algorithm=algorithm,
            n_experts=args.experts,
            beta=args.beta,
            runs=args.runs,
            seed=args.seed,
            class_order=args.class_order,
            subspace=not args.no_subspace,
            keep_prob=args.keep_prob,
            betas=getattr(args, "betas", ExperimentConfig().betas),
        )
    except ValueError as e:
        raise UsageError(str(e)) from None


def _algos(text: str) -> list[str]:
    algos = [a.strip() for a in text.split(",") if a.strip()]
    bad = [a for a in algos if a not in ALGORITHMS]
    if bad or not algos:
        raise UsageError(f"unknown algorithm(s) {bad or text!r}; choose from {', '.join(ALGORITHMS)}")
    return algos


def _num_classes(data) -> int:
    return data.num_classes


def _check_order(cfg: ExperimentConfig, data) -> None:
    if cfg.class_order is not None and sorted(cfg.class_order) != list(range(_num_classes(data))):
        raise UsageError(f"--class-order must be a permutation of 0..{_num_classes(data) - 1}")


def _emit(payload: bytes, args, default_name: str) -> None:
    out = args.out
    if out is None and os.environ.get(OUTPUT_DIR_ENV):
        out = str(Path(os.environ[OUTPUT_DIR_ENV]) / default_name)
    if out is None or out == "-":
        sys.stdout.buffer.write(payload)
        sys.stdout.flush()
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(payload)


def _name(data) -> str:
    if isinstance(data, SyntheticExpertSpec):
        return data.name
    return data.schema.relation


def _synth_csv(spec: SyntheticExpertSpec) -> bytes:
    s = generate_synthetic_stream(spec)
    head = "label," + ",".join(f"expert{i}" for i in range(s.n_experts))
    rows = [",".join(map(str, [int(y), *p])) for y, p in zip(s.y, s.predictions)]
    return ("\n".join([head, *rows]) + "\n").encode()


def _cmd_run(args, data) -> int:
    cfg = _config(args, args.algo)
    _check_order(cfg, data)
    rep = run_experiment(args.algo, data, cfg, args.jobs)
    _emit(report_io.write_report(rep, args.format, args.timing), args, f"run-{args.algo}-{_name(data)}.txt")
    if args.assert_bounds and rep.violations():
        for v in rep.violations():
            print(f"bound violated: {v}", file=sys.stderr)
        return EXIT_BOUND
    return EXIT_OK


def _cmd_compare(args, data) -> int:
    algos = _algos(args.algos)
    if args.reference and args.reference not in algos:
        raise UsageError(f"--reference {args.reference!r} is not among --algos")
    cfg = _config(args, algos[0])
    _check_order(cfg, data)
    reports, tests = compare(algos, data, cfg, args.reference, args.jobs)
    _emit(report_io.write_comparison(_name(data), reports, tests, args.format, args.timing), args,
          f"compare-{_name(data)}.txt")
    return EXIT_OK


def _cmd_sweep(args, data) -> int:
    algos = _algos(args.algos)
    if not args.betas:
        raise UsageError("--betas is empty")
    cfg = _config(args, algos[0])
    _check_order(cfg, data)
    sweeps = {a: beta_sweep(a, data, args.betas, cfg.runs, cfg.seed, cfg, args.jobs) for a in algos}
    _emit(report_io.write_sweep(_name(data), sweeps, args.format), args, f"sweep-{_name(data)}.txt")
    return EXIT_OK


def _cmd_bounds(args, data) -> int:
    cfg = _config(args, "crwm")
    _check_order(cfg, data)
    crwm = run_experiment("crwm", data, cfg, args.jobs)
    rwm = run_experiment("rwm", data, cfg, args.jobs)
    _emit(report_io.write_bounds(_name(data), crwm, rwm, args.format), args, f"bounds-{_name(data)}.txt")
    if args.assert_bounds and (crwm.violations() or rwm.violations()):
        for v in crwm.violations() + rwm.violations():
            print(f"bound violated: {v}", file=sys.stderr)
        return EXIT_BOUND
    return EXIT_OK


def _cmd_synth(args, data) -> int:
    if not isinstance(data, SyntheticExpertSpec):
        raise UsageError("synth needs --synthetic")
    _emit(_synth_csv(data), args, f"synth-{data.name}.csv")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "compare": _cmd_compare, "sweep": _cmd_sweep, "bounds": _cmd_bounds, "synth": _cmd_synth}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        data = _load_source(args)
        return COMMANDS[args.command](args, data)
    except UsageError as e:
        print(f"crwm: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as e:
        print(f"crwm: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"crwm: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return int(e.code or 0)


if __name__ == "__main__":
    sys.exit(main())
