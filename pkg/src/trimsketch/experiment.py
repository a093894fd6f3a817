"""Bucket-budget comparison of the level-set estimator against plain Count-Sketch.

For every (budget, seed) cell both methods sketch the same vector with the
same total number of counters. Ours splits the budget as
``levels x rows x buckets``; the baseline is a single Count-Sketch whose top-k
estimate is the sum of the ``k`` largest ``|point estimate|^p`` over the
observed coordinates, and it reports the best of every repetition count
``r <= max_reps`` that divides the budget.
"""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from trimsketch import oracle
from trimsketch.countsketch import CountSketchTable
from trimsketch.estimators import top_k_moment
from trimsketch.hashing import SketchSeed
from trimsketch.pipeline import SketchConfig, sketch_sizes
from trimsketch.streams import StreamFile, atomic_write_text, gen_synthetic, ingest_keycounts

CSV_HEADER = ["dataset", "method", "total_buckets", "reps", "relative_error", "seed", "wall_ms"]


@dataclass
class ExperimentSpec:
    """One sweep over budgets and seeds.

    ``dataset`` is ``"synthetic"`` (``n`` coordinates, ``heavy`` of them
    planted, default ``k``) or the path of a key-count file. The level-set
    constants default to the desk-scale tuning for the synthetic workload.
    ``timing=False`` leaves ``wall_ms`` empty so reruns are byte-identical.
    """

    dataset: str = "synthetic"
    n: int = 10**6
    k: int = 1000
    heavy: int | None = None
    p: float = 1.0
    eps: float = 0.05
    budgets: list[int] = field(default_factory=lambda: [10_000, 20_000, 30_000, 50_000])
    max_reps: int = 10
    levels: int = 2
    rows: int = 5
    seeds: list[int] = field(default_factory=lambda: [0])
    output: str | None = None
    C_z: float = 5e-4
    K: float = 0.0
    noise_mult: float = 3.0
    timing: bool = False
    workers: int = 1

    def __post_init__(self):
        if not self.budgets or any(b <= 0 for b in self.budgets):
            raise ValueError("budgets must be positive")
        if any(b2 <= b1 for b1, b2 in zip(self.budgets, self.budgets[1:])):
            raise ValueError("budgets must be strictly increasing")
        if self.max_reps < 1 or self.levels < 1 or self.rows < 1:
            raise ValueError("max_reps, levels and rows must be at least 1")
        for b in self.budgets:
            ours_buckets(b, self.levels, self.rows)

    @property
    def label(self) -> str:
        return "synthetic" if self.dataset == "synthetic" else Path(self.dataset).stem


@dataclass
class ResultRow:
    dataset: str
    method: str
    total_buckets: int
    reps: int
    relative_error: float
    seed: int
    wall_ms: int | None = None

    def as_csv(self) -> list[str]:
        return [
            self.dataset, self.method, str(self.total_buckets), str(self.reps),
            repr(float(self.relative_error)), str(self.seed),
            "" if self.wall_ms is None else str(self.wall_ms),
        ]


def ours_buckets(budget: int, levels: int, rows: int) -> int:
    """Buckets per table when ``budget`` is split across ``levels x rows``."""
    cells = levels * rows
    if budget % cells or budget < cells:
        raise ValueError(f"budget {budget} does not split into {levels} levels x {rows} rows of >= 1 bucket")
    return budget // cells


def baseline_reps(budget: int, max_reps: int) -> list[int]:
    reps = [r for r in range(1, max_reps + 1) if budget % r == 0]
    if not reps:
        raise ValueError(f"budget {budget} admits no repetition count")
    return reps


def load_dataset(spec: ExperimentSpec, seed: int) -> StreamFile:
    if spec.dataset == "synthetic":
        return gen_synthetic(spec.n, spec.heavy if spec.heavy is not None else spec.k, seed)
    stream, _ = ingest_keycounts(spec.dataset)
    return stream


def relative_error(estimate: float, exact) -> float:
    if exact <= 0:
        raise ValueError("relative error needs a positive exact value")
    return abs(float(estimate) - float(exact)) / float(exact)


def ours_config(spec: ExperimentSpec, budget: int) -> SketchConfig:
    return SketchConfig(
        rows=spec.rows, buckets=ours_buckets(budget, spec.levels, spec.rows), levels=spec.levels,
        eps=spec.eps, K=spec.K, C_z=spec.C_z, decoder="peel", noise_mult=spec.noise_mult,
    )


def estimate_ours(stream: StreamFile, spec: ExperimentSpec, budget: int, seed: int) -> float:
    cfg = ours_config(spec, budget)
    sizes = sketch_sizes(stream.indices, stream.deltas, stream.n, stream.m, cfg, seed)
    return top_k_moment(sizes, spec.k, spec.p).value


def baseline_top_k(table: CountSketchTable, observed: np.ndarray, k: int, p) -> float:
    est = np.abs(table.estimate_many(observed)).astype(np.float64)
    if est.size > k:
        est = np.partition(est, est.size - k)[est.size - k:]
    return float(np.sum(est ** float(p) if p != 0 else (est > 0)))


def estimate_baseline(stream: StreamFile, spec: ExperimentSpec, budget: int, seed: int, exact) -> tuple[int, float]:
    """Best ``(reps, relative_error)`` over the admissible repetition counts."""
    n = max(stream.n, 1)
    observed = np.unique(stream.indices)
    best = None
    for r in baseline_reps(budget, spec.max_reps):
        table = CountSketchTable(r, budget // r, n, SketchSeed(seed))
        table.update_many(stream.indices, stream.deltas)
        err = relative_error(baseline_top_k(table, observed, spec.k, spec.p), exact)
        if best is None or err < best[1]:
            best = (r, err)
    return best


def _run_cell(spec: ExperimentSpec, seed: int) -> list[ResultRow]:
    stream = load_dataset(spec, seed)
    exact = oracle.exact_top_k(stream.to_vector(), spec.k, spec.p)
    rows = []
    for budget in spec.budgets:
        t0 = time.perf_counter()
        err = relative_error(estimate_ours(stream, spec, budget, seed), exact)
        ms = round(1000 * (time.perf_counter() - t0)) if spec.timing else None
        rows.append(ResultRow(spec.label, "ours", budget, spec.rows, err, seed, ms))
        t0 = time.perf_counter()
        reps, err = estimate_baseline(stream, spec, budget, seed, exact)
        ms = round(1000 * (time.perf_counter() - t0)) if spec.timing else None
        rows.append(ResultRow(spec.label, "countsketch", budget, reps, err, seed, ms))
    return rows


def run_experiment(spec: ExperimentSpec) -> list[ResultRow]:
    """Run every (budget, method, seed) cell; write the CSV when ``spec.output`` is set."""
    if spec.workers > 1 and len(spec.seeds) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            per_seed = list(pool.map(_run_cell, [spec] * len(spec.seeds), spec.seeds))
    else:
        per_seed = [_run_cell(spec, s) for s in spec.seeds]
    rows = [row for chunk in per_seed for row in chunk]
    if spec.output:
        write_csv(spec.output, rows)
    return rows


def rows_to_csv(rows: list[ResultRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(row.as_csv())
    return out.getvalue()


def write_csv(path, rows: list[ResultRow]) -> None:
    atomic_write_text(path, rows_to_csv(rows))


def read_csv(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        return [
            ResultRow(d, m, int(b), int(r), float(e), int(s), int(w) if w else None)
            for d, m, b, r, e, s, w in reader
        ]


def summarize(rows: list[ResultRow]) -> dict[tuple[str, int], float]:
    """Mean relative error per ``(method, budget)``."""
    acc: dict[tuple[str, int], list[float]] = {}
    for row in rows:
        acc.setdefault((row.method, row.total_buckets), []).append(row.relative_error)
    return {key: math.fsum(v) / len(v) for key, v in acc.items()}
