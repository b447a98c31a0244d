"""Command-line entry point: ``blocksparse <command> ...``.

Exit codes: 0 success, 1 domain error (including a non-converged solve),
2 usage error.  Every command writes its resolved arguments as JSON next to
its outputs so a run can be repeated exactly.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BlockSparseError
from .io import atomic_write, load, save

log = logging.getLogger("blocksparse")

Q_CHOICES = ("1", "2", "inf")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _echo(args, path):
    """Write the resolved command configuration to ``path``."""
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg["version"] = __version__
    atomic_write(path, _dump(cfg))


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else x


# -- commands ------------------------------------------------------------------

def cmd_gen(args):
    from .core import generate_dictionary, plant_signal

    d = generate_dictionary(args.D, args.n, args.d, args.m, args.seed)
    obj = plant_signal(d, args.k, args.seed) if args.k else d
    save(obj, args.out)
    _echo(args, f"{args.out}.config.json")
    log.info("wrote %s", args.out)
    return 0


def _dictionary_of(obj):
    from .core import PlantedInstance

    return obj.dictionary if isinstance(obj, PlantedInstance) else obj


def cmd_coherence(args):
    from . import coherence

    d = _dictionary_of(load(args.input))
    out = Path(args.out_dir)
    prof = coherence.profile(d)
    report = {"profile": prof.to_dict(), "classical": coherence.classical(d).to_dict()}
    atomic_write(out / "coherence.json", _dump(report))
    P = prof.pairwise
    atomic_write(out / "pairwise.csv",
                 _csv([[_fmt(v) for v in row] for row in P], [f"S{j}" for j in range(d.n)]))
    _echo(args, out / "coherence.config.json")
    return 0


def cmd_isometry(args):
    from .isometry import isometry_constants

    d = _dictionary_of(load(args.input))
    qs = Q_CHOICES if args.q == "all" else (args.q,)
    out = [isometry_constants(d, q, enum_cap=args.enum_cap, samples=args.samples,
                              seed=args.seed).to_dict() for q in qs]
    atomic_write(args.out, _dump({"constants": out}))
    _echo(args, f"{args.out}.config.json")
    return 0


def _read_signal(path):
    p = Path(path)
    if p.suffix == ".npy":
        return np.load(p).astype(float).reshape(-1)
    return np.loadtxt(p, delimiter=None if p.suffix != ".csv" else ",", dtype=float).reshape(-1)


def cmd_solve(args):
    from .core import PlantedInstance
    from .oracle import oracle_solve
    from .solvers import SolveSpec, solve

    obj = load(args.input)
    d = _dictionary_of(obj)
    if args.signal is not None:
        y = _read_signal(args.signal)
    elif isinstance(obj, PlantedInstance):
        y = obj.signal
    else:
        raise UsageError("a dictionary file needs --signal")
    if args.oracle is not None:
        res = oracle_solve(d, y, args.oracle, args.family, args.q, work_cap=args.oracle_cap)
    else:
        spec = SolveSpec(family=args.family, q=args.q, delta=args.delta, corrupt=args.corrupt,
                         tol_primal=args.tol, tol_dual=args.tol, max_iter=args.max_iter,
                         rho=args.rho)
        res = solve(d, y, spec)
    atomic_write(args.out, _dump(res.to_dict()))
    _echo(args, f"{args.out}.config.json")
    if not res.converged:
        log.error("solve finished with status %s", res.status)
        return 1
    return 0


def cmd_check(args):
    from .conditions import ConditionInputs, max_certified_k, uniqueness_probe

    d = _dictionary_of(load(args.input))
    inputs = ConditionInputs.from_dictionary(d, args.q, enum_cap=args.enum_cap,
                                             samples=args.samples, seed=args.seed)
    rows = max_certified_k(inputs)
    out = Path(args.out_dir)
    atomic_write(out / "conditions.csv",
                 _csv([[r.condition, r.max_k, r.exactness, r.status] for r in rows],
                      ["condition", "max_k", "exactness", "status"]))
    report = {"q": args.q, "conditions": [r.to_dict() for r in rows],
              "constants": inputs.constants.to_dict(), "profile": inputs.profile.to_dict()}
    if args.probe_trials:
        report["uniqueness"] = uniqueness_probe(d, args.tau, args.probe_trials, args.seed).to_dict()
    atomic_write(out / "conditions.json", _dump(report))
    _echo(args, out / "check.config.json")
    return 0


def cmd_bench(args):
    from .experiments import BenchmarkConfig, run_benchmark

    cfg = BenchmarkConfig.load(args.config)
    if args.out_dir:
        cfg.output_dir = args.out_dir
    if args.workers:
        cfg.parallelism = args.workers
    report = run_benchmark(cfg)
    _echo(args, Path(cfg.output_dir) / "bench.config.json")
    n_bad = sum(1 for r in report.rows if not r[7])
    if n_bad:
        log.warning("%d trial(s) did not converge; they are flagged in results.csv", n_bad)
    return 0


def cmd_classify(args):
    from .classify import (accuracy, apply, build_labeled_dictionary, classify_many,
                           fit_reducer, ingest_images, nearest_subspace)
    from .solvers import SolveSpec

    X_tr, y_tr, shape = ingest_images(args.train)
    X_te, y_te, shape_te = ingest_images(args.test)
    if shape != shape_te:
        from .errors import InconsistentDimensions
        raise InconsistentDimensions(f"train images {shape} vs test images {shape_te}")
    reducer = fit_reducer(X_tr, args.reduce, args.dim, seed=args.seed, factor=args.factor,
                          image_shape=shape if args.reduce == "down" else None)
    labeled = build_labeled_dictionary(apply(reducer, X_tr), y_tr)
    Z = apply(reducer, X_te)
    spec = SolveSpec(family=args.family, q=args.q, delta=args.delta, certificate=False,
                     max_iter=args.max_iter)
    preds = classify_many(labeled, Z, spec)
    ns = [nearest_subspace(labeled, Z[:, t]) for t in range(Z.shape[1])]
    out = Path(args.out_dir)
    rows = [[int(t), p.label, int(p.flagged)] + [_fmt(r) for r in p.residuals]
            for t, p in zip(y_te, preds)]
    atomic_write(out / "predictions.csv",
                 _csv(rows, ["truth", "prediction", "flagged"]
                      + [f"residual_{c}" for c in labeled.labels]))
    summary = {"accuracy": accuracy(preds, y_te), "nearest_subspace_accuracy": accuracy(ns, y_te),
               "tests": int(len(y_te)), "flagged": int(sum(p.flagged for p in preds)),
               "features": int(reducer.dim)}
    atomic_write(out / "summary.json", _dump(summary))
    _echo(args, out / "classify.config.json")
    return 0


# -- parser --------------------------------------------------------------------

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _default_workers():
    from .experiments import default_parallelism
    return default_parallelism()


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--log-level", default="WARNING",
                        choices=("DEBUG", "INFO", "WARNING", "ERROR"))

    parser = _Parser(prog="blocksparse", description="Block-sparse recovery toolkit.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen", parents=[common], help="random dictionary or planted instance")
    for name in ("D", "n", "d", "m"):
        p.add_argument(f"--{name}", type=_positive_int, required=True)
    p.add_argument("--k", type=_positive_int, help="plant a k-block-sparse signal")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("coherence", parents=[common], help="subspace and classical coherence")
    p.add_argument("input")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_coherence)

    def isometry_flags(p):
        p.add_argument("--enum-cap", type=_positive_int, default=5000)
        p.add_argument("--samples", type=_positive_int, default=10_000)

    p = sub.add_parser("isometry", parents=[common], help="intra-block isometry constants")
    p.add_argument("input")
    p.add_argument("--q", choices=Q_CHOICES + ("all",), default="all")
    p.add_argument("--out", required=True)
    isometry_flags(p)
    p.set_defaults(func=cmd_isometry)

    def program_flags(p):
        p.add_argument("--family", choices=("p", "pprime"), default="pprime")
        p.add_argument("--q", choices=Q_CHOICES, default="2")

    p = sub.add_parser("solve", parents=[common], help="solve one recovery program")
    p.add_argument("input", help=".bsd instance, or dictionary with --signal")
    p.add_argument("--signal", help="signal vector (.npy, .csv or whitespace text)")
    program_flags(p)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--corrupt", action="store_true")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=_positive_int, default=10_000)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--oracle", type=_positive_int, metavar="K_MAX",
                   help="exhaustive search over supports of size <= K_MAX instead")
    p.add_argument("--oracle-cap", type=_positive_int, default=1_000_000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("check", parents=[common], help="certify recovery conditions")
    p.add_argument("input")
    p.add_argument("--q", choices=Q_CHOICES, default="2")
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--probe-trials", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    isometry_flags(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("bench", parents=[common], help="synthetic recovery benchmark")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir")
    p.add_argument("--workers", type=_positive_int, default=None,
                   help="worker processes (default: BLOCKSPARSE_WORKERS or config)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("classify", parents=[common], help="classify images by class residual")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--reduce", choices=("eigen", "rand", "down"), required=True)
    p.add_argument("--dim", type=_positive_int)
    p.add_argument("--factor", type=_positive_int)
    program_flags(p)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--max-iter", type=_positive_int, default=10_000)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_classify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(message)s")
    if args.command == "bench" and args.workers is None and "BLOCKSPARSE_WORKERS" in os.environ:
        args.workers = _default_workers()
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"blocksparse {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (BlockSparseError, OSError) as exc:
        print(f"blocksparse {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"blocksparse {args.command}: invalid value: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
