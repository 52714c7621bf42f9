"""Desk-scale invariant suite with per-check pass/fail and measured constants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from .bench import bench_instance
from .chebyshev import bruteforce_opt
from .inverse_maintenance import ImplicitInv, OneLevelInv, TwoLevelInv, UpdateBatch
from .l2_oracle import solve_direct
from .mwu import SolverParams, SolverRun, run_algo
from .potentials import psi_lower_bound
from .problem import Instance
from .sketching import CweSketch, iteration_seed

NUM_SLACK = 1e-6


@dataclass
class Check:
    name: str
    passed: bool
    measured: Dict[str, float] = field(default_factory=dict)
    note: str = ""

    def to_json(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "measured": self.measured, "note": self.note}


@dataclass
class VerifyReport:
    checks: List[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_json() for c in self.checks]}


# ---------------------------------------------------------------- inverse maintenance

def inverse_trace(seed: int, kind: str = "two-level", steps: int = 20, fault_inject: bool = False) -> float:
    """Replay one random update/reset/partial-reset/query trace.

    Returns the worst relative error of queried entries (and of query_sum for
    the implicit kind) against fresh dense inversion.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(8, 33))
    A = rng.standard_normal((n, n))
    M = A @ A.T / n + np.eye(n)
    v = rng.standard_normal(n)
    if kind == "one-level":
        inv = OneLevelInv(M, fault_inject=fault_inject)
    elif kind == "two-level":
        inv = TwoLevelInv(M, fault_inject=fault_inject)
    elif kind == "implicit":
        inv = ImplicitInv(M, v, fault_inject=fault_inject)
    else:
        raise ValueError(f"unknown maintainer kind {kind!r}")
    acc = np.linalg.solve(M, v)
    worst = 0.0
    for _ in range(steps):
        k = int(rng.integers(1, 4))
        U = 0.3 * rng.standard_normal((n, k))
        core = rng.uniform(0.1, 1.0, k) * (1.0 if rng.random() < 0.7 else -0.2)
        if rng.random() < 0.1:
            core = core * 1e-10
        V = U if rng.random() < 0.5 else 0.1 * rng.standard_normal((n, k))
        b = UpdateBatch(U, core, V)
        inv.update(b)
        M = M + b.dense()
        if kind == "implicit":
            acc = acc + np.linalg.solve(M, v)
        roll = rng.random()
        if roll < 0.1:
            inv.reset()
        elif roll < 0.3 and kind != "one-level":
            inv.partial_reset()
        rows = rng.choice(n, int(rng.integers(1, n + 1)), replace=False)
        cols = rng.choice(n, int(rng.integers(1, n + 1)), replace=False)
        ref = np.linalg.inv(M)
        err = np.max(np.abs(inv.query(rows, cols) - ref[np.ix_(rows, cols)])) / np.max(np.abs(ref))
        worst = max(worst, float(err))
        if kind == "implicit":
            worst = max(worst, float(np.max(np.abs(inv.query_sum() - acc)) / np.max(np.abs(acc))))
    return worst


def check_inverse_maintenance(traces: int = 90, seed: int = 0, fault_inject: bool = False, tol: float = 1e-8) -> Check:
    kinds = ("one-level", "two-level", "implicit")
    worst = 0.0
    fails = 0
    for t in range(traces):
        e = inverse_trace(seed * 100_003 + t, kinds[t % 3], fault_inject=fault_inject)
        worst = max(worst, e)
        fails += not e <= tol
    return Check("inverse maintenance matches fresh inversion", fails == 0,
                 {"traces": traces, "failures": fails, "worst_rel_error": worst, "tol": tol})


# ---------------------------------------------------------------- solver-run invariants

def run_checks(inst: Instance, run: SolverRun, eps: float) -> Dict[str, tuple]:
    """Measured slack of every per-step invariant on one run.

    Each entry maps a check name to (passed, measured value).
    """
    out: Dict[str, tuple] = {}
    sch = run.params_used
    if sch.get("short_circuit"):
        return out
    tr = run.trace
    phi, psi = tr.column("phi"), tr.column("psi")
    ii, kk = tr.column("i"), tr.column("k")
    delta = sch["delta"]
    monotone = run.algo in ("monotone", "baseline-unaccelerated")

    gap = run.stability_report.get("max_lazy_gap", 0.0)
    out["lazy resistances within delta"] = (gap <= delta + 1e-12, gap - delta)

    ratio = float(np.max((psi - 1e-8 * phi) / phi)) if phi.size else 0.0
    out["potential sandwich"] = (ratio <= math.exp(eps + delta) * (1 + NUM_SLACK), ratio / math.exp(eps + delta))

    if monotone:
        a, tau = sch["alpha"], sch["tau"]
        g = math.exp(eps + delta) * eps
        bound = phi[0] * (1 + g * a) ** ii * (1 + (g / tau if math.isfinite(tau) else 0.0)) ** kk
        worst = float(np.max(phi / bound))
        out["monotone Phi growth"] = (worst <= 1 + NUM_SLACK, worst)
        out["monotone Phi nondecreasing"] = (bool(np.all(np.diff(phi) >= 0)), float(np.min(np.diff(phi), initial=0)))
        psi0 = sch["psi0"]
        grow = 1 + eps ** 2 * tau ** 2 / (4 * inst.n) if math.isfinite(tau) else 1.0
        worst = float(np.min(psi / (psi0 * grow ** kk)))
        out["monotone Psi growth over width steps"] = (worst >= 1 - NUM_SLACK, worst)
        out["width-step budget"] = (run.K_done <= sch["K_cap"], run.K_done / sch["K_cap"])
    else:
        lower = psi[0] / (1 + 2 * eps) * math.exp(-delta)
        worst = float(np.min(psi / lower))
        out["non-monotone Psi lower bound"] = (worst >= 1 - NUM_SLACK, worst)
        wmin = run.stability_report.get("min_weight", 1.0)
        out["weight positivity"] = (wmin > 0, wmin)
        out["width-step budget"] = (run.K_done <= sch["K_cap"], run.K_done / sch["K_cap"])

    if run.delta_sum is not None and run.averaged_over:
        err = float(np.max(np.abs(run.x_hat * run.averaged_over - run.delta_sum)))
        out["averaging identity"] = (err <= 1e-9 * max(1.0, float(np.max(np.abs(run.delta_sum)))), err)
    if "implicit_gap" in run.diag:
        g = run.diag["implicit_gap"][0]
        out["implicit accumulation matches explicit sum"] = (g <= 1e-8, g)
    res = inst.residual_inf(run.x_hat)
    out["approximation 1+10eps"] = (res <= 1 + 10 * eps, res)
    return out


# ---------------------------------------------------------------- suite

def _oracle_checks(seed: int) -> List[Check]:
    checks = []
    two = Instance(np.array([[1.0], [1.0]]), np.array([0.0, 2.0]))
    res = bruteforce_opt(two)
    ok = abs(res.opt - 1) <= 1e-12 and abs(res.x_star[0] - 1) <= 1e-12
    worst = 0.0
    for s in range(5):
        rng = np.random.default_rng(seed + s)
        inst = Instance(rng.standard_normal((15, 2)), rng.standard_normal(15))
        r = bruteforce_opt(inst)
        worst = max(worst, abs(r.gap), abs(inst.residual_inf(r.x_star) - r.opt))
    checks.append(Check("reference oracle certificates agree", ok and worst <= 1e-9,
                        {"two_row_opt": res.opt, "worst_gap": worst}))
    rng = np.random.default_rng(seed)
    C, t = rng.standard_normal((30, 3)), rng.standard_normal(30)
    r = rng.uniform(0.5, 2.0, 30)
    sol = solve_direct(C, t, r)
    normal = float(np.max(np.abs(C.T @ (r * sol.residual_u))))
    lst = np.linalg.lstsq(C, t, rcond=None)[0]
    p0 = min(1.0, float(np.sum((C @ lst - t) ** 2)))
    p0_err = abs(psi_lower_bound(Instance(C, t)) - p0)
    checks.append(Check("weighted least squares normal equations", normal <= 1e-9 and p0_err <= 1e-9,
                        {"normal_residual": normal, "psi0_error": p0_err}))
    return checks


def _sketch_checks(seed: int) -> List[Check]:
    sk = CweSketch(40, 25, seed=iteration_seed(seed, 0))
    S = sk.matrix()
    diag = float(np.max(np.abs(np.sum(S * S, axis=0) - 1)))
    same = bool(np.array_equal(S, CweSketch(40, 25, seed=iteration_seed(seed, 0)).matrix()))
    return [Check("coordinate-wise embedding unit diagonal", diag <= 1e-12 and same,
                  {"max_diag_error": diag, "deterministic": float(same)})]


def run_verify(seed: int = 0, eps: float = 0.1, traces: int = 90, fault_inject: bool = False,
               instances: int = 2, progress: Optional[Callable[[str], None]] = None) -> VerifyReport:
    rep = VerifyReport()
    rep.checks.append(check_inverse_maintenance(traces, seed, fault_inject))
    rep.checks.extend(_oracle_checks(seed))
    rep.checks.extend(_sketch_checks(seed))
    agg: Dict[str, list] = {}
    runs = [("monotone", "direct"), ("monotone", "one-level"), ("stable", "direct"), ("robust", "two-level"),
            ("opt", "direct")]
    for j in range(instances):
        inst = bench_instance(24 + 8 * j, seed + j, 2 + j % 2)
        for algo, backend in runs:
            p = SolverParams(epsilon=eps, seed=seed + j, max_iters=400, fault_inject=fault_inject)
            run = run_algo(inst, p, algo, backend)
            for name, (ok, val) in run_checks(inst, run, eps).items():
                agg.setdefault(name, []).append((ok, float(val)))
            if progress:
                progress(f"{algo}/{backend} on instance {j}")
        # same lazy scheme on both backends gives the same iterates
        p = SolverParams(epsilon=eps, seed=seed + j, max_iters=200, lazy="l2")
        xa = run_algo(inst, p, "monotone", "direct").x_hat
        xb = run_algo(inst, p, "monotone", "one-level").x_hat
        rel = float(np.max(np.abs(xa - xb)) / max(1.0, float(np.max(np.abs(xa)))))
        agg.setdefault("backend invariance", []).append((rel <= 1e-7, rel))
    for name, vals in agg.items():
        ok = all(v[0] for v in vals)
        worst = [v[1] for v in vals]
        rep.checks.append(Check(name, ok, {"runs": len(vals), "min": min(worst), "max": max(worst)}))
    return rep
