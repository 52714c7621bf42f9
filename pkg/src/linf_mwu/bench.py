"""Benchmark harness: iteration counts and operation counts over an n-grid."""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .chebyshev import bruteforce_opt
from .mwu import SolverParams, run_algo
from .problem import Instance, generate, normalize

BENCH_COLUMNS = ["n", "seed", "algo", "backend", "eps", "status", "primal", "width", "iterations",
                 "residual", "resets", "partial_resets", "queries", "reset_ops", "partial_reset_ops",
                 "query_ops", "l3_primal_all", "l2_primal_max", "max_lazy_gap", "seconds"]


def bench_instance(n: int, seed: int, d_dim: int = 3, distribution: str = "gaussian") -> Instance:
    """Seeded instance normalized so that its optimum is 1."""
    inst = generate(seed, n, d_dim, distribution)
    return normalize(inst, bruteforce_opt(inst).opt)


def thread_cap(default: int = 1) -> int:
    raw = os.environ.get("LINF_MWU_THREADS")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        return default


def fit_slope(ns: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of log(values) against log(ns)."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class BenchResult:
    rows: List[dict] = field(default_factory=list)
    slopes: Dict[str, float] = field(default_factory=dict)
    means: Dict[str, Dict[int, float]] = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
            wr.writeheader()
            for row in self.rows:
                wr.writerow({k: (format(v, ".17g") if isinstance(v, float) else v) for k, v in row.items()})


def _cell(n, seed, algo, backend, eps, stop, d_dim, overrides, cache) -> dict:
    inst = cache[(n, seed)]
    p = SolverParams(epsilon=eps, seed=seed, stop_residual=stop, **overrides)
    t0 = time.perf_counter()
    try:
        run = run_algo(inst, p, algo, backend)
    except Exception as exc:  # failed cells are recorded, not fatal
        return dict(n=n, seed=seed, algo=algo, backend=backend, eps=eps, status=f"error:{type(exc).__name__}",
                    primal=0, width=0, iterations=0, residual=math.nan, resets=0, partial_resets=0, queries=0,
                    reset_ops=0, partial_reset_ops=0, query_ops=0, l3_primal_all=math.nan,
                    l2_primal_max=math.nan, max_lazy_gap=math.nan, seconds=time.perf_counter() - t0)
    ops = run.op_counts
    sr = run.stability_report
    return dict(n=n, seed=seed, algo=algo, backend=backend, eps=eps, status=run.status,
                primal=run.T_done, width=run.K_done, iterations=run.T_done + run.K_done,
                residual=inst.residual_inf(run.x_hat), resets=ops["resets"], partial_resets=ops["partial_resets"],
                queries=ops["queries"], reset_ops=ops["scalar_ops"]["reset"],
                partial_reset_ops=ops["scalar_ops"]["partial_reset"], query_ops=ops["scalar_ops"]["query"],
                l3_primal_all=float(sr.get("l3_primal_all_total", math.nan)),
                l2_primal_max=float(sr.get("l2_primal_max", math.nan)),
                max_lazy_gap=float(sr.get("max_lazy_gap", math.nan)), seconds=time.perf_counter() - t0)


def run_bench(ns: Iterable[int] = (32, 64, 128, 256), seeds: Iterable[int] = range(10),
              algos: Iterable[str] = ("monotone", "baseline-unaccelerated"), eps: float = 0.1,
              backend: str = "direct", target: Optional[float] = None, d_dim: int = 3,
              max_iters: int = 200_000, threads: Optional[int] = None, **overrides) -> BenchResult:
    """Iterations needed for the running average to reach ``target`` (default 1 + eps).

    The fitted slope per algorithm is taken over the per-n mean iteration count.
    """
    ns, seeds, algos = list(ns), list(seeds), list(algos)
    stop = 1 + eps if target is None else target
    cache = {(n, s): bench_instance(n, s, d_dim) for n in ns for s in seeds}
    overrides = dict(overrides, max_iters=max_iters)
    jobs = [(n, s, a) for a in algos for n in ns for s in seeds]
    workers = threads if threads is not None else thread_cap()
    work = lambda job: _cell(job[0], job[1], job[2], backend, eps, stop, d_dim, overrides, cache)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(work, jobs))
    else:
        rows = [work(j) for j in jobs]
    res = BenchResult(rows=rows)
    for a in algos:
        means = {n: float(np.mean([r["iterations"] for r in rows if r["algo"] == a and r["n"] == n]))
                 for n in ns}
        res.means[a] = means
        if len(ns) >= 2 and all(v > 0 for v in means.values()):
            res.slopes[a] = fit_slope(ns, [means[n] for n in ns])
    return res
