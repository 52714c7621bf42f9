"""Acceptance suite: one test per criterion, each printing a single pass/fail line.

Solver runs for criteria 1-3 are cached per module so the invariant
criteria (6, 7) are checked on exactly those runs.
"""

import math
import time

import numpy as np
import pytest
from scipy.stats import skew

from linf_mwu.bench import bench_instance, fit_slope, run_bench
from linf_mwu.chebyshev import bruteforce_opt
from linf_mwu.inverse_maintenance import ImplicitInv, OneLevelInv, TwoLevelInv, UpdateBatch
from linf_mwu.lazy_update import ceil_log2
from linf_mwu.mwu import SolverParams, schedule, solve_monotone, solve_nonmonotone_robust, solve_nonmonotone_stable
from linf_mwu.potentials import psi_lower_bound
from linf_mwu.problem import generate, normalize
from linf_mwu.sketching import (CweSketch, HeavyHitterSketch, JlSketch, L3Sketch, default_b, hh_decode,
                                iteration_seed, jl_norm, l3_estimate, sketched_residual)

EPS = 0.1
SLACK = 1e-6
_RUNS = {}


def verdict(log, num, title, ok, detail):
    line = f"criterion {num:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    log[num] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def suite():
    rng = np.random.default_rng(20240607)
    out = []
    for j in range(50):
        n, d = int(rng.integers(20, 101)), int(rng.integers(2, 5))
        raw = generate(7000 + j, n, d)
        out.append(normalize(raw, bruteforce_opt(raw).opt))
    return out


def solver_runs(suite, key):
    if key not in _RUNS:
        t0 = time.perf_counter()
        if key == "monotone":
            runs = [(inst, solve_monotone(inst, SolverParams(epsilon=EPS))) for inst in suite]
        elif key == "stable":
            runs = [(inst, solve_nonmonotone_stable(inst, SolverParams(epsilon=EPS))) for inst in suite]
        else:
            runs = [(inst, solve_nonmonotone_robust(inst, SolverParams(epsilon=EPS, seed=s)))
                    for inst in suite[:10] for s in range(20)]
        _RUNS[key] = (runs, time.perf_counter() - t0)
    return _RUNS[key]


def step_invariants(run):
    """Worst-case ratio of every per-step potential inequality (<= 1 means it holds)."""
    sch = run.params_used
    tr = run.trace
    phi, psi = tr.column("phi"), tr.column("psi")
    i, k = tr.column("i"), tr.column("k")
    eps, delta = sch["epsilon"], sch["delta"]
    out = {"sandwich": float(np.max(psi / ((math.exp(eps + delta) + 1e-8) * phi)))}
    if run.algo == "monotone":
        g = math.exp(eps + delta) * eps
        bound = phi[0] * (1 + g * sch["alpha"]) ** i * (1 + g / sch["tau"]) ** k
        out["phi_growth"] = float(np.max(phi / bound))
        grow = (1 + eps ** 2 * sch["tau"] ** 2 / (4 * sch["n"])) ** k
        out["psi_growth"] = float(np.max(sch["psi0"] * grow / psi))
    else:
        # the trace holds Psi(rbar); rbar is within e^delta of r
        out["psi_lower"] = float(np.max(psi[0] / ((1 + 2 * eps) * math.exp(delta)) / psi))
        out["positivity"] = 0.0 if run.stability_report["min_weight"] > 0 else math.inf
    return out


def window_constant(run, m):
    """max over dyadic windows of (sum of update ranks) / ((log n / delta)^2 zeta2 4^l)."""
    ranks = np.asarray(run.diag["update_rank"][1:], dtype=float)
    l2 = np.asarray(run.diag["l2_primal"], dtype=float)
    if ranks.size == 0 or l2.size == 0 or l2.max() <= 0:
        return 0.0
    scale = (ceil_log2(m) / run.params_used["delta"]) ** 2 * float(l2.max())
    pre = np.concatenate([[0.0], np.cumsum(ranks)])
    worst = 0.0
    l = 0
    while 2 ** l <= ranks.size:
        w = 2 ** l
        sums = pre[w:] - pre[:-w]
        worst = max(worst, float(sums.max()) / (scale * 4 ** l))
        l += 1
    return worst


# ------------------------------------------------------------------ 1-3

def test_criterion_01_monotone_approximation(suite, acceptance_log):
    runs, secs = solver_runs(suite, "monotone")
    res = np.array([inst.residual_inf(r.x_hat) for inst, r in runs])
    ok = int(np.sum(res <= 2.0))
    verdict(acceptance_log, 1, "monotone residual <= 2 on 50/50, < 60 s", ok == 50 and secs < 60,
            f"{ok}/50 within 2.0, worst {res.max():.4f}, {secs:.1f} s")


def test_criterion_02_stable_approximation(suite, acceptance_log):
    runs, secs = solver_runs(suite, "stable")
    res = np.array([inst.residual_inf(r.x_hat) for inst, r in runs])
    ok = int(np.sum(res <= 2.0))
    verdict(acceptance_log, 2, "stable residual <= 2 on 50/50", ok == 50,
            f"{ok}/50 within 2.0, worst {res.max():.4f}, {secs:.1f} s")


def test_criterion_03_robust_approximation(suite, acceptance_log):
    runs, secs = solver_runs(suite, "robust")
    thr = 1 + 10 * EPS + 0.5 * EPS
    res = np.array([inst.residual_inf(r.x_hat) for inst, r in runs])
    frac = float(np.mean(res <= thr))
    verdict(acceptance_log, 3, f"robust residual <= {thr:.2f} in >= 95% of 200 runs", frac >= 0.95,
            f"{frac:.1%} within, worst {res.max():.4f}, {secs:.1f} s")


# ------------------------------------------------------------------ 4

def test_criterion_04_iteration_scaling(acceptance_log):
    ns = (32, 64, 128, 256)
    t0 = time.perf_counter()
    res = run_bench(ns=ns, seeds=range(10), algos=("monotone", "baseline-unaccelerated"), eps=EPS)
    secs = time.perf_counter() - t0
    sm, sb = res.slopes["monotone"], res.slopes["baseline-unaccelerated"]
    # informational: slopes after removing ln^2 n
    norm = {a: fit_slope(ns, [res.means[a][n] / math.log(n) ** 2 for n in ns]) for a in res.means}
    reached = sum(r["status"] == "ok" for r in res.rows)
    ok = 0.2 <= sm <= 0.45 and sm < sb and secs < 600
    verdict(acceptance_log, 4, "monotone iteration exponent in [0.2, 0.45] and below baseline", ok,
            f"monotone {sm:.3f}, baseline {sb:.3f}, difference {sb - sm:.3f}; "
            f"ln^2-normalized {norm['monotone']:.3f} / {norm['baseline-unaccelerated']:.3f}; "
            f"{reached}/{len(res.rows)} reached target; {secs:.0f} s")


# ------------------------------------------------------------------ 5

def _trace(seed):
    rng = np.random.default_rng(10_000 + seed)
    n = int(rng.integers(8, 33))
    kind = seed % 3
    A = rng.standard_normal((n, n))
    M = A @ A.T / n + np.eye(n)
    v = rng.standard_normal(n)
    inv = (OneLevelInv(M), TwoLevelInv(M), ImplicitInv(M, v))[kind]
    total = np.linalg.solve(M, v)
    worst = 0.0
    for _ in range(int(rng.integers(5, 25))):
        k = int(rng.integers(1, 5))
        U = 0.4 * rng.standard_normal((n, k))
        V = U if rng.random() < 0.5 else 0.2 * rng.standard_normal((n, k))
        core = rng.uniform(-0.3, 1.0, k)
        if rng.random() < 0.1:
            core = np.full(k, 1e-11)  # adversarially tiny core
        inv.update(UpdateBatch(U, core, V))
        M = M + U @ np.diag(core) @ V.T
        if kind == 2:
            total = total + np.linalg.solve(M, v)
        roll = rng.random()
        if roll < 0.15:
            inv.reset()
        elif roll < 0.35 and kind:
            inv.partial_reset()
        fresh = np.linalg.inv(M)
        rows = np.sort(rng.choice(n, int(rng.integers(1, n + 1)), replace=False))
        cols = np.sort(rng.choice(n, int(rng.integers(1, n + 1)), replace=False))
        got = inv.query(rows, cols)
        worst = max(worst, float(np.max(np.abs(got - fresh[np.ix_(rows, cols)])) / np.max(np.abs(fresh))))
        if kind == 2:
            worst = max(worst, float(np.max(np.abs(inv.query_sum() - total)) / np.max(np.abs(total))))
    return worst


def test_criterion_05_inverse_maintenance(acceptance_log):
    errs = np.array([_trace(s) for s in range(1000)])
    fails = int(np.sum(~(errs <= 1e-8)))
    verdict(acceptance_log, 5, "1000 maintenance traces match fresh inversion within 1e-8", fails == 0,
            f"{fails} failures, worst relative error {errs.max():.2e}")


# ------------------------------------------------------------------ 6-7

def _all_runs(suite):
    out = []
    for key in ("monotone", "stable", "robust"):
        out.extend(r for _, r in solver_runs(suite, key)[0])
    return out


def test_criterion_06_lazy_contract(suite, acceptance_log):
    runs = _all_runs(suite)
    excess = max(max(r.diag["gap"]) - r.params_used["delta"] for r in runs)
    K = max(window_constant(r, r.params_used["n"] * (1 if r.algo == "monotone" else 2)) for r in runs)
    verdict(acceptance_log, 6, "max |ln(rbar/r)| <= delta + 1e-12 on every iteration", excess <= 1e-12,
            f"{len(runs)} runs, worst gap - delta = {excess:.3e}; measured window rank constant K = {K:.3g}")


def test_criterion_07_potential_invariants(suite, acceptance_log):
    worst = {}
    for r in _all_runs(suite):
        for name, v in step_invariants(r).items():
            worst[name] = max(worst.get(name, -math.inf), v)
    ok = all(v <= 1 + SLACK for v in worst.values())
    verdict(acceptance_log, 7, "sandwich, Phi growth, Psi growth, Psi lower bound, positivity", ok,
            ", ".join(f"{k} {v:.4f}" for k, v in sorted(worst.items())))


# ------------------------------------------------------------------ 8

def test_criterion_08_sketch_statistics(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    n, b, trials = 64, 32, 10_000
    x = rng.standard_normal(n)
    g = rng.standard_normal(n)
    g /= np.linalg.norm(g)
    h = rng.standard_normal(n)
    h /= np.linalg.norm(h)
    C2 = math.ceil(math.log(n))
    rt = np.empty((trials, n))
    gh = np.empty(trials)
    fails = 0
    diag_ok = True
    for t in range(trials):
        sk = CweSketch(b, n, seed=iteration_seed(8, t))
        S = sk.matrix()
        diag_ok &= bool(np.all(np.abs(np.sum(S * S, axis=0) - 1) <= 1e-15))
        rt[t] = sk.roundtrip(x)
        Sg, Sh = S @ g, S @ h
        gh[t] = Sg @ Sh
        gg, hh = rng.standard_normal(n), rng.standard_normal(n)
        gg /= np.linalg.norm(gg)
        hh /= np.linalg.norm(hh)
        fails += abs((S @ gg) @ (S @ hh) - gg @ hh) > C2 / math.sqrt(b)
    mean_z = float(np.max(np.abs(rt.mean(0) - x) / (rt.std(0, ddof=1) / math.sqrt(trials))))
    var_ratio = float(np.var(gh, ddof=1) / (2 / b))
    var_coord = float(np.max(rt.var(0, ddof=1)) / (2 * (x @ x) / b))
    fail_rate = fails / trials
    r = rng.uniform(0.5, 2, n)
    u = rng.standard_normal(n)
    diffs = np.array([sketched_residual(u, r, CweSketch(b, n, seed=iteration_seed(9, t)))[0] - u[0]
                      for t in range(trials)])
    sk_ = abs(float(skew(diffs)))

    jl_ok = 0
    for t in range(1000):
        v = rng.standard_normal(n)
        jl_ok += abs(jl_norm(JlSketch(n, eps=0.2, seed=iteration_seed(10, t)), v) / np.linalg.norm(v) - 1) <= 0.2
    nh, eh, dfail = 256, 0.25, 0.01
    hits = 0
    for t in range(1000):
        v = 0.05 * rng.standard_normal(nh)
        heavy = rng.choice(nh, 3, replace=False)
        v[heavy] += rng.choice([-1, 1], 3) * 3
        true = np.flatnonzero(np.abs(v) >= eh * np.linalg.norm(v))
        sk = HeavyHitterSketch(nh, eh, fail=dfail, seed=iteration_seed(11, t))
        hits += set(true) <= set(hh_decode(sk, sk.sketch(v)).tolist())
    l3 = np.array([l3_estimate(L3Sketch(n, seed=iteration_seed(12, t)), x) for t in range(300)])
    l3 /= np.sum(np.abs(x) ** 3) ** (1 / 3)
    secs = time.perf_counter() - t0
    ok = (diag_ok and mean_z <= 4 and var_ratio <= 1 and var_coord <= 1 and fail_rate <= 0.01 and sk_ <= 0.1
          and jl_ok >= 990 and hits >= 1000 * (1 - dfail) and secs < 120)
    verdict(acceptance_log, 8, "CWE moments, concentration, symmetry, JL, heavy hitters", ok,
            f"diag exact {diag_ok}, mean max z {mean_z:.2f}, var/bound {var_ratio:.3f} (coord {var_coord:.3f}), "
            f"concentration failures {fail_rate:.2%}, skew {sk_:.3f}, JL {jl_ok}/1000, HH recall {hits}/1000, "
            f"l3 ratio range [{l3.min():.2f}, {l3.max():.2f}], {secs:.0f} s")


# ------------------------------------------------------------------ 9

def test_criterion_09_martingale_accumulation(acceptance_log):
    n, T, eps = 256, 64, EPS
    b = default_b(n, eps, 0.1)
    C1, C2 = 1, math.ceil(math.log(n))
    bound = 10 * (C1 + C2) * math.log(n) * math.sqrt(n * T / (b * eps))
    held, worst = 0, 0.0
    for rep in range(200):
        rng = np.random.default_rng(90_000 + rep)
        u = rng.standard_normal(n)
        u *= math.sqrt(n) / np.linalg.norm(u)
        prefix = np.zeros((T + 1, n))
        for t in range(T):
            uh = CweSketch(b, n, seed=iteration_seed(90_000 + rep, t)).roundtrip(u)
            prefix[t + 1] = prefix[t] + (uh - u)
        span = float(np.max(prefix.max(0) - prefix.min(0)))  # largest windowed sum over all windows
        worst = max(worst, span)
        held += span <= bound
    verdict(acceptance_log, 9, "windowed sketch-error sums within the bound in >= 99% of 200 replays",
            held >= 198, f"{held}/200 held; worst windowed sum {worst:.3f} vs bound {bound:.1f} (b={b})")


# ------------------------------------------------------------------ 10

def test_criterion_10_stability_trends(acceptance_log):
    ns = (32, 64, 128, 256)
    l3_all, l3_filtered, fake = [], [], []
    for n in ns:
        a, f, z = [], [], []
        for s in range(3):
            inst = bench_instance(n, s, 3)
            T = int(schedule("monotone", n, SolverParams(epsilon=0.3), psi_lower_bound(inst))["T"])
            run = solve_monotone(inst, SolverParams(epsilon=0.3, max_iters=T))
            a.append(run.stability_report["l3_primal_all_total"])
            f.append(run.stability_report["l3_primal_total"])
            rob = solve_nonmonotone_robust(inst, SolverParams(epsilon=EPS, seed=s, max_iters=200))
            z.append(float(np.mean(rob.diag["fake_l2"])))
        l3_all.append(np.mean(a))
        l3_filtered.append(np.mean(f))
        fake.append(np.mean(z))
    s3 = fit_slope(ns, l3_all)
    s2 = fit_slope(ns, fake)
    eta = 0.1
    ok = s3 <= 0.45 and s2 <= 2 * eta + 0.1
    verdict(acceptance_log, 10, "l3 primal mass exponent <= 0.45, fake-weight l2 exponent <= 2 eta + 0.1", ok,
            f"l3 exponent {s3:.3f} (filtered mass {max(l3_filtered):.2e}), fake l2 exponent {s2:.3f}")


# ------------------------------------------------------------------ 11

def test_criterion_11_operation_counts(acceptance_log):
    ns = (32, 64, 128, 256)
    a0 = 0.75
    rows = []
    for n in ns:
        inst = bench_instance(n, 0, 3)
        run = solve_monotone(inst, SolverParams(epsilon=EPS, a0=a0, max_iters=300), "one-level")
        steps = run.T_done + run.K_done
        rows.append((n, run.op_counts["resets"], steps, float(np.mean(run.diag["l2_primal"])),
                     run.params_used["delta"]))
    eta_p = 0.5 * fit_slope(ns, [r[3] for r in rows])
    cs = [res * n ** (a0 / 2 - eta_p) / steps for n, res, steps, _, _ in rows]
    c = max(cs)
    limit = max(math.log2(n) / delta for n, _, _, _, delta in rows)
    freq = fit_slope(ns, [res / steps for _, res, steps, _, _ in rows])
    verdict(acceptance_log, 11, "resets <= c (T+K) / n^(a0/2 - eta') with c reported", c <= limit,
            f"eta' = {eta_p:.3f}, c = {c:.3f} (limit log2 n / delta = {limit:.0f}), "
            f"reset fractions {[round(r[1] / r[2], 3) for r in rows]}, frequency exponent {freq:.3f}")
