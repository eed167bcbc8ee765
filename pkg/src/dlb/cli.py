"""Command-line entry point.

Exit codes: 0 success, 2 usage or configuration error, 3 data or format
error, 4 numerical failure. Relative output paths are resolved against
``--out-dir``, which defaults to ``$DLB_OUT_DIR`` (or the working directory).
"""

from __future__ import annotations

import argparse
import math
import os
import sys

from . import errors
from .baselines import DEFAULT_BOUND_C, DEFAULT_VNODES
from .datagen import DEFAULT_PARAMS, DistributionSpec, generate, read_dataset, write_dataset
from .experiments import (ALL_METHODS, compare_sim, eval_balance, fig1, fig1_rows, parse_method, sim_balancer,
                          spread_rows)
from .hashing import HASHES
from .metrics import rows_to_csv
from .model import DEFAULT_FANOUTS, HierConfig, load_model, save_model
from .ring import DEFAULT_RING_SIZE
from .servers import default_epsilon, even_table
from .sim import ClusterSpec, RoundRobinBalancer, run_sim, trace_csv
from .trainer import DEFAULT_BATCH, DEFAULT_EPOCHS, DEFAULT_LR, DEFAULT_LR_FLOOR, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

_DATA_ERRORS = (errors.FormatError, errors.ParseError, errors.UnsupportedVersion, errors.UnsupportedKey,
                errors.DuplicateKey, errors.TooFewKeys)

_PARAM_FLAGS = {"uniform": ("low", "high"), "normal": ("mean", "stddev"), "lognormal": ("mu", "sigma")}


class UsageError(Exception):
    pass


def _out_path(args, name):
    if os.path.isabs(name):
        return name
    base = args.out_dir or os.environ.get("DLB_OUT_DIR") or "."
    os.makedirs(base, exist_ok=True)
    return os.path.join(base, name)


def _write_text(args, name, text):
    path = _out_path(args, name)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _require_file(path, what):
    if not os.path.isfile(path):
        raise UsageError(f"{what} not found: {path}")
    return path


def _int_list(text):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _dist_spec(args, count=None) -> DistributionSpec:
    names = _PARAM_FLAGS[args.dist]
    defaults = DEFAULT_PARAMS[args.dist]
    params = tuple(getattr(args, n) if getattr(args, n) is not None else d for n, d in zip(names, defaults))
    return DistributionSpec(args.dist, params, count if count is not None else args.count, args.seed)


def _add_dist_flags(p, count_default=200000):
    p.add_argument("--dist", choices=sorted(_PARAM_FLAGS), default="lognormal")
    for names in _PARAM_FLAGS.values():
        for n in names:
            p.add_argument(f"--{n}", type=float, default=None)
    p.add_argument("--count", type=int, default=count_default)


def _add_common(p):
    p.add_argument("--out-dir", default=None, help="directory for relative output paths (env DLB_OUT_DIR)")


# commands ---------------------------------------------------------------

def cmd_gen_data(args):
    keys = generate(_dist_spec(args))
    path = _out_path(args, args.out)
    write_dataset(keys, path)
    print(f"wrote {len(keys)} keys to {path}")


def cmd_train(args):
    keys = read_dataset(_require_file(args.data, "data file"))
    config = HierConfig(args.fanouts, args.ring_size)
    model, report = train(keys, config, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed,
                          lr=args.lr, lr_floor=args.lr_floor, workers=args.workers)
    if not all(math.isfinite(v) for v in report.loss_curve):
        raise errors.NumericalError("training diverged to a non-finite loss")
    path = _out_path(args, args.out)
    save_model(model, path)
    report_path = _write_text(args, args.report, report.to_csv())
    print(f"model -> {path}; loss {report.loss_curve[0]:.6g} -> {report.loss_curve[-1]:.6g} ({report_path})")


def _load_optional_model(args, needed):
    if not needed:
        return None
    if not args.model:
        raise UsageError("a trained model (--model) is required for dlb")
    return load_model(_require_file(args.model, "model file"))


def _methods(text):
    methods = [m for m in text.split(",") if m]
    try:
        for m in methods:
            parse_method(m)
    except errors.ValidationError as exc:
        raise UsageError(str(exc)) from None
    if len(set(methods)) != len(methods):
        raise UsageError("duplicate method names")
    return methods


def cmd_eval_balance(args):
    methods = _methods(args.methods)
    if len(methods) < 2:
        raise UsageError("eval-balance needs at least two methods")
    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")
    keys = read_dataset(_require_file(args.test, "test data file"))
    model = _load_optional_model(args, "dlb" in methods)
    rows, _ = eval_balance(keys, methods, model, args.servers, args.repeats, args.vnodes, args.bound_c,
                           args.epsilon, args.ring_size if model is None else None)
    columns = [c for c in rows[0] if c != "runs"]
    if args.repeats == 1:
        columns = [c for c in columns if c not in ("min", "max")]
    path = _write_text(args, args.out, rows_to_csv(rows, columns))
    print(f"compare table -> {path}")
    if args.remove_server is not None:
        _migrations(args, keys, model)


def _migrations(args, keys, model):
    if model is None:
        raise UsageError("--remove-server needs a trained model")
    if not 0 <= args.remove_server < args.servers:
        raise UsageError(f"--remove-server must be in [0, {args.servers})")
    epsilon = args.epsilon if args.epsilon is not None else default_epsilon(len(keys), args.servers, args.bound_c)
    table = even_table(args.servers, epsilon, model.config.T)
    owners = table.assign_many(model.map_positions(keys))
    assignments = {float(k): s for k, s in zip(keys, owners)}
    moves = table.remove_server(args.remove_server, assignments)
    rows = [{"key": m.key, "from": m.src, "to": m.dst} for m in moves]
    text = rows_to_csv(rows, ["key", "from", "to"]) or "key,from,to\n"
    path = _write_text(args, args.migrations_out, text)
    print(f"{len(moves)} migrations -> {path}")


def _cluster(args) -> ClusterSpec:
    return ClusterSpec(args.servers, args.slots, args.duration, args.jobs)


def _workload_keys(args):
    if args.data:
        keys = read_dataset(_require_file(args.data, "data file"))
        if len(keys) < args.jobs:
            raise errors.FormatError(f"{len(keys)} keys in {args.data}, need {args.jobs}")
        return keys[:args.jobs]
    return generate(_dist_spec(args, count=args.jobs))


def cmd_simulate(args):
    spec = _cluster(args)
    keys = _workload_keys(args)
    if args.balancer == "round-robin":
        balancer = RoundRobinBalancer(spec.num_servers)
    else:
        name = "dlb" if args.balancer == "dlb" else f"{args.balancer}-{args.hash}"
        model = _load_optional_model(args, args.balancer == "dlb")
        balancer = sim_balancer(name, spec, model, args.vnodes, args.bound_c, args.epsilon,
                                model.config.T if model else DEFAULT_RING_SIZE)
    trace = run_sim(spec, keys, balancer)
    path = _write_text(args, args.out, trace_csv(trace))
    print(f"makespan {trace.makespan_s!r} s (lower bound {spec.makespan_lower_bound!r} s); trace -> {path}")


def cmd_compare(args):
    if len(args.model) != len(args.dist):
        raise UsageError("give one --model per --dist")
    methods = _methods(args.methods)
    if "dlb" not in methods:
        raise UsageError("compare needs 'dlb' among the methods")
    spec = _cluster(args)
    rows = []
    for dist, model_path, seed_offset in zip(args.dist, args.model, range(len(args.dist))):
        model = load_model(_require_file(model_path, "model file"))
        sub = argparse.Namespace(**{**vars(args), "dist": dist, "seed": args.seed + seed_offset})
        keys = generate(_dist_spec(sub, count=spec.num_jobs))
        dist_rows, traces = compare_sim(keys, model, spec, methods, args.vnodes, args.bound_c, args.epsilon)
        for row in dist_rows:
            rows.append({"distribution": dist, **row})
        if args.trace_dir:
            for name, trace in traces.items():
                _write_text(args, os.path.join(args.trace_dir, f"{dist}_{name}.csv"), trace_csv(trace))
    path = _write_text(args, args.out, rows_to_csv(rows))
    print(f"summary -> {path}")
    for row in rows:
        print(f"{row['distribution']:>9} {row['balancer']:>13} makespan {row['makespan_s']:9.1f} s"
              f"  dlb reduction {row['dlb_reduction_pct']:6.2f}%")


def cmd_fig1(args):
    series, _ = fig1(args.count, args.bins, args.seed, args.fanouts, args.ring_size, args.epochs, args.batch_size,
                     with_model=not args.no_model)
    path = _write_text(args, args.out, rows_to_csv(fig1_rows(series)))
    spread_path = _write_text(args, args.spread_out, rows_to_csv(spread_rows(series)))
    print(f"bins -> {path}; spreads -> {spread_path}")


# parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dlb", description="Learned load balancing on a hash ring.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a seeded key dataset")
    _add_dist_flags(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the hierarchical model")
    p.add_argument("--data", required=True)
    p.add_argument("--fanouts", type=_int_list, default=DEFAULT_FANOUTS)
    p.add_argument("--ring-size", type=int, default=DEFAULT_RING_SIZE)
    p.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)
    p.add_argument("--batch-size", type=int, default=DEFAULT_BATCH)
    p.add_argument("--lr", type=float, default=DEFAULT_LR)
    p.add_argument("--lr-floor", type=float, default=DEFAULT_LR_FLOOR)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default="model.json")
    p.add_argument("--report", default="train_loss.csv")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval-balance", help="std of per-server load for each balancer")
    p.add_argument("--test", required=True, help="test key dataset")
    p.add_argument("--model", default=None)
    p.add_argument("--methods", default=",".join(ALL_METHODS))
    p.add_argument("--servers", type=int, default=64)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--vnodes", type=int, default=DEFAULT_VNODES)
    p.add_argument("--bound-c", type=float, default=DEFAULT_BOUND_C)
    p.add_argument("--epsilon", type=int, default=None)
    p.add_argument("--ring-size", type=int, default=DEFAULT_RING_SIZE)
    p.add_argument("--remove-server", type=int, default=None)
    p.add_argument("--migrations-out", default="migrations.csv")
    p.add_argument("--out", default="compare.csv")
    _add_common(p)
    p.set_defaults(func=cmd_eval_balance)

    def cluster_flags(p):
        p.add_argument("--servers", type=int, default=64)
        p.add_argument("--slots", type=int, default=4)
        p.add_argument("--duration", type=float, default=20.0)
        p.add_argument("--jobs", type=int, default=8192)
        p.add_argument("--vnodes", type=int, default=DEFAULT_VNODES)
        p.add_argument("--bound-c", type=float, default=DEFAULT_BOUND_C)
        p.add_argument("--epsilon", type=int, default=None)

    p = sub.add_parser("simulate", help="simulate one balancer on a job batch")
    p.add_argument("--balancer", choices=("ch", "chbl", "dlb", "round-robin"), required=True)
    p.add_argument("--hash", choices=HASHES, default="murmur3")
    p.add_argument("--model", default=None)
    p.add_argument("--data", default=None, help="take job keys from a dataset instead of generating them")
    _add_dist_flags(p)
    p.add_argument("--seed", type=int, required=True)
    cluster_flags(p)
    p.add_argument("--out", default="trace.csv")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="simulate every balancer and report makespan reductions")
    p.add_argument("--dist", choices=sorted(_PARAM_FLAGS), nargs="+", default=["lognormal"])
    p.add_argument("--model", nargs="+", required=True, help="one trained model per --dist, same order")
    for names in _PARAM_FLAGS.values():
        for n in names:
            p.add_argument(f"--{n}", type=float, default=None)
    p.add_argument("--methods", default=",".join(ALL_METHODS))
    p.add_argument("--seed", type=int, required=True)
    cluster_flags(p)
    p.add_argument("--trace-dir", default=None)
    p.add_argument("--out", default="sim_compare.csv")
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("fig1", help="sorted bin counts of normal keys under each hash and the model")
    p.add_argument("--count", type=int, default=10240)
    p.add_argument("--bins", type=int, default=32)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--fanouts", type=_int_list, default=DEFAULT_FANOUTS)
    p.add_argument("--ring-size", type=int, default=DEFAULT_RING_SIZE)
    p.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)
    p.add_argument("--batch-size", type=int, default=DEFAULT_BATCH)
    p.add_argument("--no-model", action="store_true", help="hash series only")
    p.add_argument("--out", default="bins.csv")
    p.add_argument("--spread-out", default="spread.csv")
    _add_common(p)
    p.set_defaults(func=cmd_fig1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except (UsageError, errors.ValidationError, errors.BadSpec, errors.UnknownHash, FileNotFoundError) as exc:
        print(f"dlb {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _DATA_ERRORS as exc:
        print(f"dlb {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (errors.NumericalError, FloatingPointError) as exc:
        print(f"dlb {args.command}: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except errors.DLBError as exc:
        print(f"dlb {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
