"""Synthetic block-sparse recovery benchmark and its error metrics."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .core import Dictionary, derive_seed, generate_dictionary, plant_signal
from .errors import NonRedundantOnly, ZeroSignal
from .io import atomic_write
from .norms import parse_q, q_label
from .solvers import SolveSpec, parse_family, solve_many

DEFAULT_VARIANTS = (("P", "1"), ("P", "2"), ("P", "inf"), ("P'", "1"), ("P'", "2"), ("P'", "inf"))
CSV_COLUMNS = ("family", "q", "k", "trial", "rec_err", "blk_err", "coef_err", "converged")
METRICS = ("rec_err", "blk_err", "coef_err")


# -- metrics ------------------------------------------------------------------

def _support_part(dictionary: Dictionary, c, support) -> np.ndarray:
    out = np.zeros(dictionary.D)
    for i in support:
        sl = dictionary.structure.slice(i)
        out += dictionary.matrix[:, sl] @ np.asarray(c)[sl]
    return out


def reconstruction_error(y, dictionary: Dictionary, c, support) -> float:
    """``||y - sum_{i in support} B[i] c[i]||_2 / ||y||_2``."""
    y = np.asarray(y, dtype=float)
    ny = np.linalg.norm(y)
    if ny == 0:
        raise ZeroSignal("reconstruction error is undefined for a zero signal")
    return float(np.linalg.norm(y - _support_part(dictionary, c, support)) / ny)


def block_contribution_error(dictionary: Dictionary, c, support) -> float:
    """Share of ``sum_i ||B[i] c[i]||_2`` coming from blocks outside ``support``.

    Defined as 1 when every block contribution is zero.
    """
    c = np.asarray(c, dtype=float)
    contrib = np.array([np.linalg.norm(dictionary.block(i) @ c[dictionary.structure.slice(i)])
                        for i in range(dictionary.n)])
    total = contrib.sum()
    if total <= 0:
        return 1.0
    inside = contrib[list(support)].sum() if len(support) else 0.0
    return float(min(1.0, max(0.0, 1.0 - inside / total)))


def coefficient_recovery_error(c, c_true, dictionary: Dictionary | None = None) -> float:
    """``||c - c_true||_2 / ||c_true||_2``; only meaningful for non-redundant blocks."""
    if dictionary is not None and dictionary.is_redundant:
        raise NonRedundantOnly("coefficient error needs non-redundant blocks (m = d)")
    c_true = np.asarray(c_true, dtype=float)
    nt = np.linalg.norm(c_true)
    if nt == 0:
        raise ZeroSignal("coefficient error is undefined for a zero coefficient vector")
    return float(np.linalg.norm(np.asarray(c, dtype=float) - c_true) / nt)


# -- configuration --------------------------------------------------------------

@dataclass
class BenchmarkConfig:
    """Synthetic sweep settings; ``L1`` dictionaries with ``L2`` signals each per ``k``."""

    D: int = 60
    n: int = 20
    d: int = 4
    m: int = 4
    k_range: list = field(default_factory=lambda: [1, 2, 3, 4, 5, 6])
    L1: int = 5
    L2: int = 100
    variants: list = field(default_factory=lambda: [list(v) for v in DEFAULT_VARIANTS])
    seed: int = 0
    parallelism: int = 1
    output_dir: str = "bench_out"
    tol: float = 1e-6
    max_iter: int = 10_000
    keep_trials: bool = True

    def __post_init__(self):
        self.k_range = [int(k) for k in self.k_range]
        self.variants = [[parse_family(f), q_label(q)] for f, q in self.variants]
        if not self.k_range or min(self.k_range) < 1 or max(self.k_range) > self.n:
            raise ValueError(f"k_range must lie in [1, {self.n}]")
        if self.L1 < 1 or self.L2 < 1:
            raise ValueError("L1 and L2 must be >= 1")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")

    @classmethod
    def from_json(cls, text: str) -> "BenchmarkConfig":
        data = json.loads(text)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "BenchmarkConfig":
        return cls.from_json(Path(path).read_text())

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


# -- execution ------------------------------------------------------------------

@lru_cache(maxsize=4)
def _dictionary(D, n, d, m, seed) -> Dictionary:
    return generate_dictionary(D, n, d, m, seed)


def _work_item(args):
    """All variants for one (dictionary draw, k): returns CSV-ready row tuples."""
    cfg_dict, l1, k = args
    cfg = BenchmarkConfig(**cfg_dict)
    dictionary = _dictionary(cfg.D, cfg.n, cfg.d, cfg.m, derive_seed(cfg.seed, l1))
    insts = [plant_signal(dictionary, k, derive_seed(cfg.seed, l1, k, l2)) for l2 in range(cfg.L2)]
    Y = np.column_stack([inst.signal for inst in insts])
    rows = []
    for family, q in cfg.variants:
        spec = SolveSpec(family=family, q=parse_q(q), tol_primal=cfg.tol, tol_dual=cfg.tol,
                         max_iter=cfg.max_iter, certificate=False)
        for l2, (inst, res) in enumerate(zip(insts, solve_many(dictionary, Y, spec))):
            c = res.coefficients.values
            coef = (coefficient_recovery_error(c, inst.truth.values)
                    if not dictionary.is_redundant else None)
            rows.append((family, q, k, l1 * cfg.L2 + l2,
                         reconstruction_error(inst.signal, dictionary, c, inst.support),
                         block_contribution_error(dictionary, c, inst.support),
                         coef, res.converged))
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RecoveryReport:
    """Per-trial rows plus per-(variant, k) means and standard errors."""

    rows: list
    summary: list

    def trials_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def summary_csv(self) -> str:
        cols = ["variant", "family", "q", "k", "trials", "converged_fraction"]
        for m in METRICS:
            cols += [f"{m}_mean", f"{m}_stderr"]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for row in self.summary:
            writer.writerow([_fmt(row.get(c)) for c in cols])
        return buf.getvalue()

    def mean(self, family, q, k, metric) -> float:
        family, q = parse_family(family), q_label(q)
        for row in self.summary:
            if row["family"] == family and row["q"] == q and row["k"] == k:
                return row[f"{metric}_mean"]
        raise KeyError((family, q, k))


def summarize(rows) -> list:
    groups = {}
    for row in rows:
        groups.setdefault((row[0], row[1], row[2]), []).append(row)
    out = []
    for (family, q, k), grp in sorted(groups.items()):
        entry = {"variant": f"{family}_l{q}", "family": family, "q": q, "k": k,
                 "trials": len(grp),
                 "converged_fraction": float(np.mean([r[7] for r in grp]))}
        for idx, metric in zip((4, 5, 6), METRICS):
            vals = np.array([r[idx] for r in grp if r[idx] is not None], dtype=float)
            if vals.size:
                entry[f"{metric}_mean"] = float(vals.mean())
                entry[f"{metric}_stderr"] = (float(vals.std(ddof=1) / math.sqrt(vals.size))
                                             if vals.size > 1 else 0.0)
            else:
                entry[f"{metric}_mean"] = entry[f"{metric}_stderr"] = None
        out.append(entry)
    return out


def default_parallelism() -> int:
    return max(1, int(os.environ.get("BLOCKSPARSE_WORKERS", "1")))


def run_benchmark(cfg: BenchmarkConfig, write: bool = True) -> RecoveryReport:
    """Run the sweep; with ``write`` also emit ``results.csv``, ``summary.csv`` and SVGs.

    Rows are ordered by (family, q, k, trial) whatever the worker schedule,
    and floats are written with ``repr``, so output bytes do not depend on
    ``parallelism``.
    """
    items = [(asdict(cfg), l1, k) for l1 in range(cfg.L1) for k in cfg.k_range]
    if cfg.parallelism > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallelism) as pool:
            chunks = list(pool.map(_work_item, items))
    else:
        chunks = [_work_item(item) for item in items]
    rows = sorted((r for chunk in chunks for r in chunk), key=lambda r: (r[0], r[1], r[2], r[3]))
    report = RecoveryReport(rows, summarize(rows))
    if write:
        write_report(report, cfg)
    return report


def write_report(report: RecoveryReport, cfg: BenchmarkConfig) -> list:
    from .plotting import write_metric_plots

    out = Path(cfg.output_dir)
    paths = [out / "summary.csv", out / "config.json"]
    if cfg.keep_trials:
        atomic_write(out / "results.csv", report.trials_csv())
        paths.insert(0, out / "results.csv")
    atomic_write(out / "summary.csv", report.summary_csv())
    atomic_write(out / "config.json", cfg.to_json())
    return paths + write_metric_plots(report.summary, out)
