"""Width-reduced MWU solvers for min_x ||Cx - d||_inf with OPT normalized to 1.

Four loops share this module:

* ``solve_monotone``: monotone weights, primal step when the width
  ||u||_inf <= tau, otherwise a width step on {|u| >= tau}.
* ``solve_nonmonotone_stable``: signed updates on the doubled instance,
  cubic-mass primal test and the stable width branch.
* ``solve_nonmonotone_robust``: as stable, but the weight update uses the
  sketched residual u_hat = R^{-1/2} S^T S R^{1/2} u.
* ``solve_nonmonotone_opt``: exact resistances, gamma-scaled extra coordinate.

All Theta(.) parameters use leading constant 1 and log = ln(max(n, 3)); every
one of them can be overridden through ``SolverParams``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Union

import numpy as np

from .l2_oracle import DEFAULT_RIDGE_FLOOR, MaintainedOracle, OracleResult, solve_direct
from .inverse_maintenance import OpCounter, reset_policy
from .lazy_update import (L3LazyState, LazyState, max_log_gap, note_width_update, select_vector,
                          select_vector_l3)
from .potentials import PotentialTrace, clamp_psi0
from .problem import DoubledInstance, Instance, double, normalize
from .sketching import (CweSketch, HeavyHitterSketch, JlSketch, L3Sketch, default_b, hh_decode,
                        iteration_seed, jl_norm, l3_estimate, sketched_residual)

ALGOS = ("monotone", "stable", "robust", "opt", "baseline-unaccelerated")
BACKENDS = ("direct", "one-level", "two-level")
STATUSES = ("ok", "iter-cap", "width-cap", "psi0-clamped", "degraded-woodbury", "search-failure")

# measured on the L3Sketch verification suite (n = 64, 200 seeds): estimates fall in
# [0.70, 1.67] * ||x||_3, so C3 = 1.67^3 covers both sides
PHI_LIMIT = 1e200
SKETCH_C3 = 4.7


class InvariantBreach(RuntimeError):
    """A weight became non-positive in a non-monotone solver."""


class SearchFailure(RuntimeError):
    pass


def _ln(n: float) -> float:
    return math.log(max(n, 3))


@dataclass
class SolverParams:
    epsilon: float = 0.1
    delta: Optional[float] = None
    eta: Optional[float] = None
    alpha: Optional[float] = None
    tau: Optional[float] = None
    rho: Optional[float] = None
    T: Optional[int] = None
    b: Optional[int] = None
    c_rho: Optional[int] = None
    C3: Optional[float] = None
    max_iters: Optional[int] = None
    seed: int = 0
    exact_l3: bool = True
    jl_psi: bool = False
    refresh_hh: bool = False
    a0: float = 0.75
    a1: float = 0.5
    lazy: Optional[str] = None  # "l2" (SelectVector) or "l3" (SelectVectorL3)
    zeta: Optional[float] = None  # cubic-mass budget for SelectVectorL3
    ridge_floor: float = DEFAULT_RIDGE_FLOOR
    fault_inject: bool = False
    stop_residual: Optional[float] = None  # stop once the running average reaches this residual
    K_cap: Optional[float] = None  # width-step budget override

    def __post_init__(self):
        if not 0 < self.epsilon < 0.5:
            raise ValueError(f"epsilon must lie in (0, 1/2), got {self.epsilon}")
        for name in ("delta", "alpha", "tau", "rho", "C3", "zeta", "K_cap"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("T", "b", "max_iters"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.eta is not None and not 0 <= self.eta < 0.5:
            raise ValueError("eta must lie in [0, 1/2)")
        if self.lazy not in (None, "l2", "l3"):
            raise ValueError("lazy must be 'l2' or 'l3'")


def schedule(algo: str, n: int, params: SolverParams, psi0: float) -> Dict[str, float]:
    """Resolve every parameter of ``algo`` for an instance with n rows (before doubling)."""
    if algo not in ALGOS:
        raise ValueError(f"unknown algorithm {algo!r}")
    eps = params.epsilon
    ln = _ln(n)
    lpsi = max(ln - math.log(min(psi0, 1.0)), 1.0)
    out: Dict[str, float] = {"epsilon": eps, "n": n, "psi0": psi0}
    if algo in ("monotone", "baseline-unaccelerated"):
        eta = params.eta if params.eta is not None else (1 / 6 if algo == "monotone" else 0.0)
        alpha = n ** (-0.5 + eta) * eps ** (1 / 3) / lpsi
        tau = n ** (1 / 3) * eps ** (-1 / 3) * lpsi if algo == "monotone" else math.inf
        rho = math.nan
        T = ln / (alpha * eps ** 2)
        delta = eps / 6
    elif algo == "stable":
        eta = params.eta if params.eta is not None else 0.1
        alpha = n ** (-0.5 + eta) * eps * ln ** (-4 / 3) * lpsi ** (-1 / 3) / 10
        tau = n ** (0.5 - eta) * eps ** -4 * ln ** 8 * lpsi ** 2
        rho = n ** (0.5 - 3 * eta) * eps ** -2 * ln ** 4 * lpsi
        T = ln / (alpha * eps ** 2)
        delta = eps / 100
    elif algo == "robust":
        eta = params.eta if params.eta is not None else 0.1
        alpha = n ** (-0.5 + eta) * eps
        tau = n ** (0.5 + eta) * eps ** -4
        rho = n ** (0.5 - 3 * eta) * eps ** -2
        T = ln / (alpha * eps ** 2)
        delta = eps / 100
    else:  # opt
        eta = params.eta if params.eta is not None else 1 / 6
        alpha = n ** (-0.5 + eta) * eps ** (1 / 3)
        tau = n ** (1 - 4 * eta) * eps ** (-1 / 3)
        rho = n ** (0.5 - 3 * eta)
        T = lpsi / (alpha * eps ** 2)
        delta = 0.0
    alpha = params.alpha if params.alpha is not None else alpha
    tau = params.tau if params.tau is not None else tau
    rho = params.rho if params.rho is not None else rho
    T = params.T if params.T is not None else max(1, math.ceil(T))
    delta = params.delta if params.delta is not None else delta
    out.update(eta=eta, alpha=alpha, alpha_minus=alpha / (1 + 2 * eps), tau=tau, rho=rho, T=int(T),
               delta=delta, log_n=ln, log_n_psi0=lpsi)
    if algo in ("monotone", "baseline-unaccelerated"):
        out["K_cap"] = tau / eps ** 2
    else:
        out["K_cap"] = n ** (1 / 3) * rho ** (1 / 3) * eps ** (-10 / 3) * ln ** 5 * lpsi
        if params.c_rho is not None:
            c_rho = params.c_rho
        else:
            c_rho = max(0, math.ceil(math.log2(math.sqrt(n / eps) / rho))) if rho > 0 else 0
        out["c_rho"] = c_rho
    if params.K_cap is not None:
        out["K_cap"] = params.K_cap
    if algo == "robust":
        out["b"] = params.b if params.b is not None else default_b(n, eps, eta)
        out["C3"] = params.C3 if params.C3 is not None else (1.0 if params.exact_l3 else SKETCH_C3)
    elif algo in ("stable", "opt"):
        out["C3"] = 1.0
    out["max_iters"] = params.max_iters if params.max_iters is not None else min(int(T), 50 * n)
    return out


@dataclass
class SolverRun:
    x_hat: np.ndarray
    iterations: tuple
    trace: PotentialTrace
    stability_report: dict
    op_counts: dict
    status: str
    params_used: dict
    diag: Dict[str, list] = field(default_factory=dict)
    averaged_over: int = 0
    delta_sum: Optional[np.ndarray] = None
    algo: str = ""

    @property
    def T_done(self) -> int:
        return self.iterations[0]

    @property
    def K_done(self) -> int:
        return self.iterations[1]


class _Oracle:
    """Direct or inverse-maintenance-backed oracle fed with the full rbar each step."""

    def __init__(self, C, d, rbar, backend: str, params: SolverParams, n_scale: int, implicit: bool = False):
        if backend not in BACKENDS:
            raise ValueError(f"unknown backend {backend!r}")
        self.C, self.d, self.backend, self.params = C, d, backend, params
        self.n_scale = n_scale
        self.prev = np.array(rbar, dtype=float)
        self.maint = None
        if backend != "direct":
            kind = "implicit" if (implicit and backend == "two-level") else backend
            self.maint = MaintainedOracle(C, d, rbar, kind=kind, ridge_floor=params.ridge_floor,
                                          fault_inject=params.fault_inject)
        self.actions = {"reset": 0, "partial_reset": 0, "none": 0}

    @property
    def implicit(self) -> bool:
        return self.maint is not None and self.maint.kind == "implicit"

    def solve(self, rbar: np.ndarray) -> tuple[OracleResult, int]:
        changed = np.flatnonzero(rbar != self.prev)
        self.prev[changed] = rbar[changed]
        if self.maint is None:
            return solve_direct(self.C, self.d, rbar, self.params.ridge_floor), int(changed.size)
        rank = self.maint.apply((changed, rbar[changed]))
        self.actions[reset_policy(self.maint.inv, self.n_scale, self.params.a0, self.params.a1)] += 1
        return self.maint.solve(), rank

    def op_counts(self) -> dict:
        if self.maint is None:
            return OpCounter().to_json()
        return self.maint.inv.ops.to_json()

    @property
    def degraded(self) -> bool:
        return self.maint is not None and bool(self.maint.inv.degraded)


def _exact_solution(C, d, ridge_floor) -> Optional[np.ndarray]:
    """Least-squares solution when it already fits the target exactly (OPT = 0)."""
    res = solve_direct(C, d, np.ones(C.shape[0]), ridge_floor)
    if np.max(np.abs(res.residual_u)) <= 1e-10 * max(1.0, float(np.max(np.abs(d)))):
        return res.delta
    return None


def _short_run(x, algo, params) -> SolverRun:
    return SolverRun(x_hat=x, iterations=(0, 0), trace=PotentialTrace(), stability_report={},
                     op_counts=OpCounter().to_json(), status="ok", params_used={"short_circuit": True},
                     averaged_over=1, delta_sum=x.copy(), algo=algo)


def _psi0(C, d, ridge_floor) -> tuple[float, bool]:
    res = solve_direct(C, d, np.ones(C.shape[0]), ridge_floor)
    return clamp_psi0(min(1.0, float(res.residual_u @ res.residual_u)))


class _Averager:
    """Tracks the running average x/i and the best one seen so far."""

    def __init__(self, C, d, stop: Optional[float]):
        self.C, self.d, self.stop = C, d, stop
        self.best = math.inf
        self.best_i = 0
        self.best_sum = None
        self.history: List[float] = []

    def observe(self, x_sum: np.ndarray, i: int) -> bool:
        res = float(np.max(np.abs(self.C @ (x_sum / i) - self.d)))
        self.history.append(res)
        if res < self.best:
            self.best, self.best_i, self.best_sum = res, i, x_sum.copy()
        return self.stop is not None and res <= self.stop


def _finish(avg: _Averager, x_sum: np.ndarray, i: int, T: int, stopped: bool) -> tuple[np.ndarray, int, np.ndarray, str]:
    if i >= T or stopped:
        return x_sum / i, i, x_sum.copy(), "ok"
    if avg.best_sum is None:
        return np.zeros_like(x_sum), 0, x_sum * 0, "iter-cap"
    return avg.best_sum / avg.best_i, avg.best_i, avg.best_sum, "ok" if stopped else "iter-cap"


def solve_monotone(inst: Instance, params: Optional[SolverParams] = None, backend: str = "direct",
                   *, baseline: bool = False) -> SolverRun:
    """Monotone width-reduced MWU; ``baseline`` switches to the primal-only eta = 0 schedule."""
    p = params or SolverParams()
    algo = "baseline-unaccelerated" if baseline else "monotone"
    C, d = inst.C, inst.target
    n = inst.n
    x0 = _exact_solution(C, d, p.ridge_floor)
    if x0 is not None:
        return _short_run(x0, algo, p)
    psi0, clamped = _psi0(C, d, p.ridge_floor)
    sch = schedule(algo, n, p, psi0)
    eps, alpha, tau, delta = sch["epsilon"], sch["alpha"], sch["tau"], sch["delta"]
    T, max_iters, K_cap = sch["T"], sch["max_iters"], sch["K_cap"]
    lazy = p.lazy or ("l3" if backend == "one-level" else "l2")
    sch["lazy"] = lazy

    w = np.ones(n)
    r = w + (eps / n) * w.sum()
    if lazy == "l3":
        zeta = p.zeta if p.zeta is not None else n * (2 * eps) ** 3
        sch["zeta"] = zeta
        state = L3LazyState(n, delta, zeta, max(max_iters, 2), keep_sets=False)
        select = select_vector_l3
    else:
        state = LazyState(n, delta, keep_sets=False)
        select = select_vector
    select(state, r, 0)
    oracle = _Oracle(C, d, state.rbar, backend, p, n)
    avg = _Averager(C, d, p.stop_residual)
    trace = PotentialTrace(psi0_clamped=clamped)
    diag: Dict[str, list] = {k: [] for k in ("gap", "l3_primal", "l3_primal_all", "l2_primal", "l3_width", "width_set",
                                             "update_rank")}
    x_sum = np.zeros(inst.d_dim)
    i = k = t = 0
    status = None
    stopped = False
    thr3 = 1 + 3 * eps * alpha
    while i < max_iters:
        if not w.sum() < PHI_LIMIT:
            status = "width-cap"  # weights overflowing: the run is mis-scaled
            break
        rbar = state.rbar
        res, rank = oracle.solve(rbar)
        u = res.residual_u
        au = np.abs(u)
        width = float(au.max())
        Phi = float(w.sum())
        diag["gap"].append(max_log_gap(rbar, r))
        diag["update_rank"].append(rank)
        if width <= tau:
            w_new = w * (1 + eps * alpha * au)
            r_new = w_new + (eps / n) * w_new.sum()
            q = r_new / r - 1
            big = r_new >= r * thr3
            diag["l3_primal"].append(float(np.sum(q[big] ** 3)))
            diag["l3_primal_all"].append(float(np.sum(q ** 3)))
            diag["l2_primal"].append(float(np.sum(np.log1p(q) ** 2)))
            trace.record(i, k, "primal", Phi, res.psi, 0, width, rank)
            x_sum += res.delta
            i += 1
            w, r = w_new, r_new
            t += 1
            select(state, r, t)
            if avg.observe(x_sum, i):
                stopped = True
                break
        else:
            S = np.flatnonzero(au >= tau)
            w_new = w.copy()
            w_new[S] = (1 + eps) * w[S] + (eps ** 2 / n) * Phi
            r_new = w_new + (eps / n) * w_new.sum()
            q = r_new[S] / r[S] - 1
            diag["l3_width"].append(float(np.sum(q ** 3)))
            diag["width_set"].append(int(S.size))
            trace.record(i, k, "width", Phi, res.psi, S.size, width, rank)
            k += 1
            w, r = w_new, r_new
            note_width_update(state, S, r)
            t += 1
            select(state, r, t)
            if k > K_cap:
                status = "width-cap"
                break
    diag["avg_residual"] = avg.history
    x_hat, count, dsum, st = _finish(avg, x_sum, i, T, stopped)
    status = status or st
    if status == "ok" and oracle.degraded:
        status = "degraded-woodbury"
    if status == "ok" and clamped:
        status = "psi0-clamped"
    stab = {
        "l3_primal_total": float(np.sum(diag["l3_primal"])),
        "l3_primal_all_total": float(np.sum(diag["l3_primal_all"])),
        "l3_width_total": float(np.sum(diag["l3_width"])),
        "l2_primal_max": float(np.max(diag["l2_primal"])) if diag["l2_primal"] else 0.0,
        "max_lazy_gap": float(np.max(diag["gap"])) if diag["gap"] else 0.0,
    }
    if lazy == "l3":
        stab["l3_step_mass_max"] = float(max(state.masses)) if state.masses else 0.0
    ops = oracle.op_counts()
    ops["policy"] = dict(oracle.actions)
    return SolverRun(x_hat=x_hat, iterations=(i, k), trace=trace, stability_report=stab, op_counts=ops,
                     status=status, params_used=sch, diag=diag, averaged_over=count, delta_sum=dsum,
                     algo=algo)


def baseline_unaccelerated(inst: Instance, params: Optional[SolverParams] = None,
                           backend: str = "direct") -> SolverRun:
    """Plain MWU: no width reduction, step size n^{-1/2} eps^{1/3} / log(n / Psi0)."""
    return solve_monotone(inst, params, backend, baseline=True)


def _as_doubled(inst: Union[Instance, DoubledInstance]) -> DoubledInstance:
    return double(inst) if isinstance(inst, Instance) else inst


def _greedy_H(S: np.ndarray, rbar: np.ndarray, budget: float) -> tuple[np.ndarray, np.ndarray]:
    """Maximal H in S with sum rbar <= budget, scanning by descending rbar then index.

    Returns (H, order) with order the scan order of S.
    """
    order = S[np.lexsort((S, -rbar[S]))]
    take = np.zeros(order.size, dtype=bool)
    total = 0.0
    for j, e in enumerate(order):
        if total + rbar[e] <= budget:
            total += rbar[e]
            take[j] = True
    return order[take], order


def zeta_sweep(H: np.ndarray, au: np.ndarray, rbar: np.ndarray, rho: float, c_rho: int, psi: float,
               n: int, eps: float) -> tuple[float, np.ndarray, bool]:
    """Pick the first dyadic bucket [zeta, 2 zeta) of H carrying enough cubic mass.

    Returns (zeta*, H_zeta*, found). When no bucket qualifies the bucket of
    largest mass is used, with the last bucket open to the right.
    """
    need = rho * psi / max(math.log(n / (eps * rho)) if n > eps * rho else 1.0, 1.0)
    vals = au[H]
    mass3 = rbar[H] * vals ** 3
    best_z, best_m, best_sel = rho, -1.0, None
    for c in range(c_rho + 1):
        z = rho * 2 ** c
        sel = (vals >= z) & (vals < 2 * z)
        m = float(mass3[sel].sum())
        if m >= need:
            return z, H[sel], True
        sel_open = (vals >= z) & ((vals < 2 * z) | (c == c_rho))
        m_open = float(mass3[sel_open].sum())
        if m_open > best_m:
            best_z, best_m, best_sel = z, m_open, sel_open
    return best_z, H[best_sel], False


def _nonmonotone(inst, params: Optional[SolverParams], backend: str, variant: str) -> SolverRun:
    p = params or SolverParams()
    dbl = _as_doubled(inst)
    Ct, dt = dbl.C_tilde, dbl.d_tilde
    n = dbl.n
    m = 2 * n
    x0 = _exact_solution(Ct[:n], dt[:n], p.ridge_floor)
    if x0 is not None:
        return _short_run(x0, variant, p)
    psi0, clamped = _psi0(Ct[:n], dt[:n], p.ridge_floor)
    sch = schedule(variant, n, p, psi0)
    eps, alpha, alpha_m = sch["epsilon"], sch["alpha"], sch["alpha_minus"]
    tau, rho, delta, C3 = sch["tau"], sch["rho"], sch["delta"], sch["C3"]
    T, max_iters, K_cap, c_rho = sch["T"], sch["max_iters"], sch["K_cap"], sch["c_rho"]
    robust = variant == "robust"
    exact_r = variant == "opt"
    if exact_r and backend != "direct":
        raise ValueError("the exact-resistance variant runs on the direct backend only")
    floor = eps / (2 * n)
    wstep = eps ** 2 / (n if exact_r else 2 * n)

    w = np.ones(m)
    r = w + floor * w.sum()
    state = None
    if not exact_r:
        state = LazyState(m, delta, keep_sets=False)
        select_vector(state, r, 0)
        rbar0 = state.rbar
    else:
        rbar0 = r
    oracle = _Oracle(Ct, dt, rbar0, backend, p, n, implicit=robust)
    avg = _Averager(Ct[:n], dt[:n], p.stop_residual)
    trace = PotentialTrace(psi0_clamped=clamped)
    keys = ("gap", "wmin", "l2_primal", "fake_l2", "H_size", "S_size", "gamma", "zeta", "zeta_found",
            "hh_missed", "update_rank", "l3_ratio", "gamma_r")
    diag: Dict[str, list] = {k: [] for k in keys}
    fake_cum = np.zeros(m)
    fake_hi = np.zeros(m)
    fake_lo = np.zeros(m)
    if robust:
        sch["hh_eps"] = min(0.5, math.sqrt(eps * math.exp(-eps - 2 * delta) / (2 * n)) * rho / (2 * C3))
    hh = None
    x_sum = np.zeros(Ct.shape[1])
    i = k = 0
    status = None
    stopped = False
    while i < max_iters:
        if not w.sum() < PHI_LIMIT:
            status = "width-cap"
            break
        rbar = r if exact_r else state.rbar
        res, rank = oracle.solve(rbar)
        u = res.residual_u
        au = np.abs(u)
        Phi = float(w.sum())
        psi = res.psi
        if p.jl_psi:
            psi = jl_norm(JlSketch(m, seed=iteration_seed(p.seed + 1, i + k)), np.sqrt(rbar) * u) ** 2
        if robust and not p.exact_l3:
            est = l3_estimate(L3Sketch(m, seed=iteration_seed(p.seed + 2, i + k)), np.cbrt(rbar) * u)
            cube = est ** 3
        else:
            cube = float(rbar @ au ** 3)
        diag["gap"].append(0.0 if exact_r else max_log_gap(rbar, r))
        diag["wmin"].append(float(w.min()))
        diag["update_rank"].append(rank)
        diag["l3_ratio"].append(cube / (rho * psi) if psi > 0 else 0.0)
        if cube <= (C3 if robust else 2.0) * rho * psi:
            if robust:
                sk = CweSketch(sch["b"], m, seed=iteration_seed(p.seed, i))
                uh = sketched_residual(u, rbar, sk)
                ea = eps * alpha * uh
                ab = np.where(uh >= 0, alpha * (1 + ea), alpha / (1 - ea))
                w_new = w * (1 + eps * ab * uh)
            else:
                ab = np.where(u >= 0, alpha, alpha_m)
                w_new = w * (1 + eps * ab * u)
            if np.any(~(w_new > 0)):
                raise InvariantBreach(f"non-positive weight at primal step {i}: min {w_new.min():.3e}")
            r_new = w_new + floor * w_new.sum()
            diag["l2_primal"].append(float(np.sum(np.log(r_new / r) ** 2)))
            if robust:
                r_fake = r_new - w * eps * alpha * (uh - u) * (1 + ab * uh) / (1 + alpha * uh)
                diag["fake_l2"].append(float(np.sum(np.log(r_fake / r) ** 2)))
                fake_cum += np.log(r_fake / r_new)
                np.maximum(fake_hi, fake_cum, out=fake_hi)
                np.minimum(fake_lo, fake_cum, out=fake_lo)
            trace.record(i, k, "primal", Phi, psi, 0, float(au.max()), rank)
            if oracle.implicit:
                oracle.maint.accumulate_step()
            x_sum += res.delta
            i += 1
            w, r = w_new, r_new
            if not exact_r:
                select_vector(state, r, i)
            if avg.observe(x_sum, i):
                stopped = True
                break
            continue
        # width step
        if robust:
            thr = rho / (2 * C3)
            S_exact = np.flatnonzero(au >= thr)
            if hh is None or p.refresh_hh:
                hh = HeavyHitterSketch(m, sch["hh_eps"], seed=iteration_seed(p.seed + 3, k if p.refresh_hh else 0))
            cand = hh_decode(hh, hh.sketch(np.sqrt(rbar) * u))
            S = cand[au[cand] >= thr]
            diag["hh_missed"].append(int(S_exact.size - S.size))
            if S.size == 0:
                S = S_exact
        else:
            S = np.flatnonzero(au >= rho)
        H, order = _greedy_H(S, rbar, psi / tau)
        w_new = w.copy()
        gamma = math.nan
        if exact_r:
            w_new[H] = (1 + eps) * w[H] + wstep * Phi
            touched = H
            if H.size != S.size:
                e_bar = order[~np.isin(order, H)][0]
                gamma = min(1.0, psi / (tau * r[e_bar]))
                diag["gamma_r"].append((gamma * r[e_bar], r[e_bar], psi / tau))
                w_new[e_bar] = (1 + eps * gamma) * w[e_bar] + wstep * gamma * Phi
                touched = np.append(H, e_bar)
            zeta = math.nan
        elif H.size != S.size:
            e_bar = order[~np.isin(order, H)][0]
            touched = np.append(H, e_bar)
            zeta = math.nan
        else:
            zeta, touched, found = zeta_sweep(H, au, rbar, rho, c_rho, psi, n, eps)
            diag["zeta_found"].append(found)
        if not exact_r:
            w_new[touched] = (1 + eps) * w[touched] + wstep * Phi
        r_new = w_new + floor * w_new.sum()
        diag["H_size"].append(int(H.size))
        diag["S_size"].append(int(S.size))
        diag["gamma"].append(gamma)
        diag["zeta"].append(zeta)
        trace.record(i, k, "width", Phi, psi, touched.size, float(au.max()), rank)
        k += 1
        w, r = w_new, r_new
        if not exact_r:
            note_width_update(state, touched, r)
        if k > K_cap:
            status = "width-cap"
            break
    if oracle.implicit:
        full = oracle.maint.step_sum()
        diag["implicit_gap"] = [float(np.max(np.abs(full - x_sum)) / max(1.0, float(np.max(np.abs(x_sum)))))]
    diag["avg_residual"] = avg.history
    x_hat, count, dsum, st = _finish(avg, x_sum, i, T, stopped)
    status = status or st
    if status == "ok" and oracle.degraded:
        status = "degraded-woodbury"
    if status == "ok" and clamped:
        status = "psi0-clamped"
    stab = {
        "l2_primal_max": float(np.max(diag["l2_primal"])) if diag["l2_primal"] else 0.0,
        "max_lazy_gap": float(np.max(diag["gap"])) if diag["gap"] else 0.0,
        "min_weight": float(min(diag["wmin"])) if diag["wmin"] else 1.0,
    }
    if robust:
        stab["fake_l2_max"] = float(np.max(diag["fake_l2"])) if diag["fake_l2"] else 0.0
        stab["fake_drift_max"] = float(np.max(fake_hi - fake_lo))
    ops = oracle.op_counts()
    ops["policy"] = dict(oracle.actions)
    return SolverRun(x_hat=x_hat, iterations=(i, k), trace=trace, stability_report=stab, op_counts=ops,
                     status=status, params_used=sch, diag=diag, averaged_over=count, delta_sum=dsum,
                     algo=variant)


def solve_nonmonotone_stable(inst, params: Optional[SolverParams] = None, backend: str = "direct") -> SolverRun:
    return _nonmonotone(inst, params, backend, "stable")


def solve_nonmonotone_robust(inst, params: Optional[SolverParams] = None, backend: str = "direct") -> SolverRun:
    return _nonmonotone(inst, params, backend, "robust")


def solve_nonmonotone_opt(inst, params: Optional[SolverParams] = None, backend: str = "direct") -> SolverRun:
    return _nonmonotone(inst, params, backend, "opt")


SOLVERS = {
    "monotone": solve_monotone,
    "stable": solve_nonmonotone_stable,
    "robust": solve_nonmonotone_robust,
    "opt": solve_nonmonotone_opt,
    "baseline-unaccelerated": baseline_unaccelerated,
}


def run_algo(inst: Instance, params: SolverParams, algo: str = "monotone", backend: str = "direct") -> SolverRun:
    if algo not in SOLVERS:
        raise ValueError(f"unknown algorithm {algo!r}")
    return SOLVERS[algo](inst, params, backend)


def solve_auto(inst: Instance, params: Optional[SolverParams] = None, algo: str = "monotone",
               backend: str = "direct") -> SolverRun:
    """Outer search for OPT on a geometric grid with ratio 1 + eps/4.

    The bracket [||r2||_2 / sqrt(n), ||r2||_inf] comes from the least-squares
    residual r2. A guess g is accepted when the solver's residual on the
    instance scaled by 1/g is at most 1 + 10 eps. The smallest accepted grid
    point is found by bisection; a scale hint, when present, is probed first.
    """
    p = params or SolverParams()
    eps = p.epsilon
    ls = solve_direct(inst.C, inst.target, np.ones(inst.n), p.ridge_floor)
    r2 = ls.residual_u
    hi = float(np.max(np.abs(r2)))
    if hi <= 1e-10 * max(1.0, float(np.max(np.abs(inst.target)))):
        run = _short_run(ls.delta, algo, p)
        run.params_used["probes"] = []
        return run
    lo = float(np.linalg.norm(r2)) / math.sqrt(inst.n)
    ratio = 1 + eps / 4
    J = max(0, math.ceil(math.log(hi / lo) / math.log(ratio))) if hi > lo else 0
    grid = lambda j: lo * ratio ** j
    probes: list = []
    cache: dict = {}

    def probe(g: float):
        key = float(g)
        if key not in cache:
            run = run_algo(normalize(inst, g), p, algo, backend)
            resid = float(np.max(np.abs(inst.C @ (run.x_hat * g) - inst.target)))
            ok = resid <= (1 + 10 * eps) * g
            probes.append({"guess": g, "residual": resid, "accepted": ok})
            cache[key] = (ok, run, resid)
        return cache[key]

    best = None  # (guess, run)
    a, b = 0, J
    hint = inst.scale_hint
    if hint is not None and lo <= hint <= hi * ratio:
        ok, run, _ = probe(hint)
        if ok:
            # a trusted hint keeps the search local: one step below, then stop
            best = (hint, run)
            ok2, run2, _ = probe(hint / ratio)
            if ok2:
                best = (hint / ratio, run2)
            a = b + 1
        else:
            a = max(a, math.ceil(math.log(hint / lo) / math.log(ratio)))
    while a <= b:
        mid = (a + b) // 2
        ok, run, _ = probe(grid(mid))
        if ok:
            if best is None or grid(mid) < best[0]:
                best = (grid(mid), run)
            b = mid - 1
        else:
            a = mid + 1
    if best is None:
        run = _short_run(ls.delta, algo, p)
        run.status = "search-failure"
        run.params_used["probes"] = probes
        return run
    g, run = best
    out = SolverRun(x_hat=run.x_hat * g, iterations=run.iterations, trace=run.trace,
                    stability_report=run.stability_report, op_counts=run.op_counts, status=run.status,
                    params_used=dict(run.params_used, guess=g, probes=probes), diag=run.diag,
                    averaged_over=run.averaged_over,
                    delta_sum=None if run.delta_sum is None else run.delta_sum * g, algo=algo)
    return out


def params_dict(p: SolverParams) -> dict:
    return asdict(p)
