"""Command-line entry point: ``gtnn <subcommand> [options]``.

Every subcommand is a thin wrapper over a library call. Exit codes: 0 ok,
1 bad input or I/O, 2 usage, 3 an exactness check failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bench
from .conf import ConfigFileError, read_config_file, settings
from .datagen import GenSpec, gen_queries, gen_store
from .exceptions import ExactnessError, GtnnError
from .index_max import MaxIndex
from .index_sum import SumIndex
from .reports import BenchPdfReport, write_reports_to_pdf
from .search import VARIANTS, search_batch
from .theory import (
    expected_tests_max_ub,
    expected_tests_sum,
    fit_lambda,
    sample_dots,
    simulate_splitting,
)
from .vecstore import VectorStore, load_vectors

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_INVARIANT = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _planted(value: str) -> tuple[int, int, float]:
    try:
        query_id, count, target = value.split(":")
        return int(query_id), int(count), float(target)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"Expected query_id:count:similarity. Got {value!r}."
        )


def _variants(value: str) -> tuple[str, ...]:
    variants = tuple(v.strip() for v in value.split(",") if v.strip())
    for variant in variants:
        if variant not in VARIANTS:
            raise argparse.ArgumentTypeError(
                f"Invalid variant. Expected one of {VARIANTS}. Got {variant!r}."
            )
    return variants


def make_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="default: GTNN_SEED")
    common.add_argument("--jobs", type=int, default=None, help="default: GTNN_JOBS")

    parser = argparse.ArgumentParser(prog="gtnn", description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path, help="key=value file, overridden by flags")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    subparsers = parser.add_subparsers(dest="command", required=True)
    commands = {}

    def add(name, help_text):
        commands[name] = subparsers.add_parser(name, parents=[common], help=help_text)
        return commands[name]

    p = add("gen", "write a synthetic store")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--concentration", type=float, default=0.05)
    p.add_argument("--queries", type=int, default=0, help="number of queries to generate")
    p.add_argument("--plant", type=_planted, action="append", default=[],
                   metavar="QID:COUNT:SIM")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--queries-out", type=Path)
    p.add_argument("--text", action="store_true", help="write plain text instead of binary")

    p = add("build", "build an index file from a store")
    p.add_argument("--store", type=Path, required=True)
    p.add_argument("--variant", choices=("sum", "max"), default="sum")
    p.add_argument("--out", type=Path, required=True)

    p = add("append", "append vectors to a store and its sum index")
    p.add_argument("--store", type=Path, required=True)
    p.add_argument("--vectors", type=Path, required=True)
    p.add_argument("--index", type=Path)
    p.add_argument("--out", type=Path, help="default: overwrite --store")

    p = add("query", "range query a store")
    p.add_argument("--store", type=Path, required=True)
    p.add_argument("--queries", type=Path, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--variant", choices=VARIANTS, default="sum")
    p.add_argument("--index", type=Path)
    p.add_argument("--out", type=Path, help="default: stdout")
    p.add_argument("--stats", type=Path)

    p = add("fit", "fit the decay rate of sampled dot products")
    p.add_argument("--store", type=Path, required=True)
    p.add_argument("--queries", type=Path)
    p.add_argument("--samples", type=int, default=100_000)

    p = add("predict", "expected dot products per query")
    p.add_argument("--n", type=float, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--c", type=float)
    p.add_argument("--method", choices=("clt", "exact"), default="clt")

    p = add("bench", "static or streaming benchmark against the exhaustive scan")
    p.add_argument("--store", type=Path, required=True)
    p.add_argument("--queries", type=Path)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--variants", type=_variants, help="default: sum,max,exhaustive")
    p.add_argument("--streaming", action="store_true")
    p.add_argument("--initial-fraction", type=float, default=0.8)
    p.add_argument("--batch", type=int, default=100)
    p.add_argument("--theory", action="store_true")
    p.add_argument("--simulate-trials", type=int, default=0)
    p.add_argument("--out", type=Path, help="CSV of per-query records")
    p.add_argument("--summary", type=Path, help="default: stdout")
    p.add_argument("--pdf", type=Path)
    p.add_argument("--password")

    p = add("simulate", "Monte-Carlo scalar binary splitting")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--variant", choices=("sum", "max"), default="sum")
    p.add_argument("--c", type=float, default=1.0)
    return parser, commands


def apply_config(
    parser: argparse.ArgumentParser, values: dict[str, str], known: set[str] | None = None
) -> None:
    """Flag names become parser defaults; GTNN_* names go to settings.

    Keys in `known` (flags of other subcommands) are skipped so one file can
    serve several subcommands.
    """
    options = {k: v for k, v in values.items() if k.startswith("GTNN_")}
    settings.configure(**options)
    defaults = {}
    actions = {action.dest: action for action in parser._actions}
    for key, value in values.items():
        if key in options:
            continue
        dest = key.replace("-", "_")
        dest = "lam" if dest == "lambda" else dest
        if dest not in actions:
            if known and dest in known:
                continue
            raise ConfigFileError(f"Unknown config key for {parser.prog}. Got {key!r}.")
        if actions[dest].nargs == 0:
            defaults[dest] = value.lower() in ("1", "true", "yes", "on")
        else:
            defaults[dest] = value
        actions[dest].required = False
    parser.set_defaults(**defaults)


def configure_logging(verbose: int) -> None:
    level = getattr(settings, "GTNN_LOG_LEVEL", "WARNING")
    if verbose:
        level = "DEBUG" if verbose > 1 else "INFO"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def validate(args: argparse.Namespace) -> None:
    if args.seed is None:
        args.seed = int(getattr(settings, "GTNN_SEED", 0))
    if args.jobs is None:
        args.jobs = int(getattr(settings, "GTNN_JOBS", 1))
    if args.jobs < 1:
        raise UsageError(f"--jobs must be >= 1. Got {args.jobs}.")
    rho = getattr(args, "rho", None)
    if rho is not None and not 0 < rho <= 2:
        raise UsageError(f"--rho must be in (0, 2]. Got {rho}.")
    if args.command == "bench":
        if args.streaming and set(args.variants or ()) - {"sum", "exhaustive"}:
            raise UsageError("Streaming benchmarks support the sum variant only.")
        if not args.streaming and not args.queries:
            raise UsageError("A static benchmark needs --queries.")
        if args.password and not args.pdf:
            raise UsageError("--password requires --pdf.")


def emit(values: dict, stream=None) -> None:
    stream = stream or sys.stdout
    for key, value in values.items():
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        stream.write(f"{key}={value}\n")


def save_vectors(vectors: np.ndarray, path: Path, text: bool = False) -> None:
    if text:
        np.savetxt(path, vectors, fmt="%.9g")
    else:
        VectorStore.from_array(vectors).save(path)


def cmd_gen(args) -> int:
    spec = GenSpec(
        N=args.n,
        d=args.d,
        concentration=args.concentration,
        planted=tuple(args.plant),
        seed=args.seed,
        queries=args.queries,
    )
    store = gen_store(spec, jobs=args.jobs)
    save_vectors(store.vectors, args.out, text=args.text)
    if args.queries_out:
        save_vectors(gen_queries(spec), args.queries_out, text=args.text)
    emit({"N": store.count, "d": store.dim, "out": args.out})
    return EXIT_OK


def cmd_build(args) -> int:
    store = load_vectors(args.store)
    index = SumIndex.build(store) if args.variant == "sum" else MaxIndex.build(store)
    index.save(args.out)
    emit({"variant": args.variant, "N": index.count, "out": args.out})
    return EXIT_OK


def cmd_append(args) -> int:
    store = load_vectors(args.store)
    index = SumIndex.load(args.index, store) if args.index else None
    if index:
        index.sync()
    added = load_vectors(args.vectors, allow_negative=store.allow_negative)
    for v in added.vectors:
        store.append(v)
        if index:
            index.append(store[store.count])
    store.save(args.out or args.store)
    values = {"appended": added.count, "count": store.count}
    if index:
        index.save(args.index)
        values["additions"] = index.additions
    emit(values)
    return EXIT_OK


def load_target(args, store: VectorStore):
    if args.variant == "sum":
        return SumIndex.load(args.index, store) if args.index else SumIndex.build(store)
    if args.variant == "max":
        return MaxIndex.load(args.index, store) if args.index else MaxIndex.build(store)
    return store


def cmd_query(args) -> int:
    store = load_vectors(args.store)
    queries = load_vectors(args.queries, allow_negative=True).vectors
    target = load_target(args, store)
    if isinstance(target, SumIndex):
        target.sync()
    results = search_batch(target, queries, args.rho, variant=args.variant, jobs=args.jobs)
    if args.out:
        bench.write_results(results, args.out)
    else:
        for query_id, result in enumerate(results, start=1):
            for row in result.records(query_id):
                sys.stdout.write("{},{},{!r}\n".format(*row))
    if args.stats:
        bench.write_stats(results, args.stats)
    return EXIT_OK


def cmd_fit(args) -> int:
    store = load_vectors(args.store)
    queries = load_vectors(args.queries).vectors if args.queries else store.vectors
    rng = np.random.default_rng(args.seed)
    model = fit_lambda(sample_dots(store, queries, args.samples, rng))
    emit(model.records())
    return EXIT_OK


def cmd_predict(args) -> int:
    values = expected_tests_sum(args.n, args.rho, args.lam, method=args.method).records()
    if args.c is not None:
        upper = expected_tests_max_ub(args.n, args.rho, args.lam, args.c)
        values["expected_tests_max_ub"] = upper.expected_tests
        values["c"] = args.c
    emit(values)
    return EXIT_OK


def cmd_bench(args) -> int:
    store = load_vectors(args.store)
    queries = load_vectors(args.queries).vectors if args.queries else None
    if args.streaming:
        report = bench.run_streaming(
            args.initial_fraction, args.batch, store, args.rho, queries=queries, seed=args.seed
        )
    else:
        variants = args.variants or VARIANTS
        report = bench.run_static(store, queries, args.rho, variants, jobs=args.jobs)
        if args.theory:
            report.theory = bench.compare_theory(
                store,
                queries,
                args.rho,
                seed=args.seed,
                simulate_trials=args.simulate_trials,
                static=report,
            )
    if args.out:
        bench.write_csv(report, args.out)
    if args.summary:
        bench.write_summary(report, args.summary)
    else:
        sys.stdout.write("\n".join(bench.summary_lines(report)) + "\n")
    if args.pdf:
        buffer = write_reports_to_pdf([BenchPdfReport(report)], password=args.password)
        args.pdf.write_bytes(buffer.getbuffer())
    report.check()
    return EXIT_OK


def cmd_simulate(args) -> int:
    mean = simulate_splitting(
        args.n,
        args.rho,
        args.lam,
        args.trials,
        seed=args.seed,
        variant=args.variant,
        c=args.c,
        jobs=args.jobs,
    )
    values = {"variant": args.variant, "N": args.n, "trials": args.trials}
    emit({**values, "mean_dot_products": mean})
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "build": cmd_build,
    "append": cmd_append,
    "query": cmd_query,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "bench": cmd_bench,
    "simulate": cmd_simulate,
}


def _config_path(argv: Sequence[str]) -> Path | None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    return known.config


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, commands = make_parser()
    try:
        config = _config_path(argv)
        if config:
            command = next((arg for arg in argv if arg in commands), None)
            values = read_config_file(config)
            if command:
                known = {a.dest for p in commands.values() for a in p._actions}
                apply_config(commands[command], values, known)
        args = parser.parse_args(argv)
        validate(args)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    except (UsageError, ConfigFileError, ValueError) as e:
        sys.stderr.write(f"gtnn: error: {e}\n")
        return EXIT_USAGE
    except OSError as e:
        sys.stderr.write(f"gtnn: error: {e}\n")
        return EXIT_ERROR

    configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except (ExactnessError, AssertionError) as e:
        logger.error("exactness check failed: %s", e)
        return EXIT_INVARIANT
    except (GtnnError, OSError) as e:
        sys.stderr.write(f"gtnn: error: {e}\n")
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
