"""Reference Chebyshev oracle used to normalize instances and certify solver output.

For d+1 rows A (a (d+1) x d block) and targets b, the cofactor vector
lam_i = (-1)^i det(A without row i) spans the null space of A^T, and

    min_x max_i |(Ax - b)_i| = |lam . b| / ||lam||_1.

The global optimum is the largest such value over all (d+1)-row subsets.
Every answer is checked with a primal point and a dual vector y
(C^T y = 0, ||y||_1 = 1, y . d = opt).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .problem import Instance

ENUM_LIMIT = 250_000
_CHUNK = 40_000


class OracleFailure(RuntimeError):
    """Neither route produced a certified optimum."""


@dataclass
class ChebyshevResult:
    opt: float
    x_star: np.ndarray
    y: np.ndarray  # dual certificate, length n
    gap: float
    method: str  # "enumeration" | "lp"

    def __iter__(self):
        # allows ``opt, x = bruteforce_opt(inst)``
        return iter((self.opt, self.x_star))


def _subset_values(C: np.ndarray, t: np.ndarray, idx: np.ndarray):
    A = C[idx]  # (m, d+1, d)
    b = t[idx]
    m, k, d = A.shape
    lam = np.empty((m, k))
    for i in range(k):
        minor = np.delete(A, i, axis=1)
        lam[:, i] = (-1) ** i * (np.linalg.det(minor) if d > 0 else 1.0)
    l1 = np.abs(lam).sum(axis=1)
    val = np.abs(np.einsum("mk,mk->m", lam, b))
    scale = np.abs(A).max(axis=(1, 2)) ** d + 1e-300
    ok = l1 > 1e-10 * scale
    out = np.full(m, -np.inf)
    out[ok] = val[ok] / l1[ok]
    return out, lam


def _subset_solution(C, t, rows, lam):
    A, b = C[rows], t[rows]
    c = -float(lam @ b) / float(np.abs(lam).sum())
    x, *_ = np.linalg.lstsq(A, b + c * np.sign(lam), rcond=None)
    s = float(lam @ b)
    y = np.zeros(C.shape[0])
    y[rows] = lam * (np.sign(s) if s != 0 else 1.0) / np.abs(lam).sum()
    return x, y


def _certify(C, t, x, y):
    primal = float(np.max(np.abs(C @ x - t)))
    dual = float(y @ t)
    feas = float(np.max(np.abs(C.T @ y))) if C.size else 0.0
    return primal, dual, feas


def _enumerate(inst: Instance, top: int = 8):
    C, t = inst.C, inst.target
    n, d = C.shape
    best_vals: list[tuple[float, tuple]] = []
    combos = itertools.combinations(range(n), d + 1)
    while True:
        chunk = list(itertools.islice(combos, _CHUNK))
        if not chunk:
            break
        idx = np.asarray(chunk)
        vals, _ = _subset_values(C, t, idx)
        k = min(top, len(vals))
        sel = np.argpartition(-vals, k - 1)[:k]
        best_vals.extend((float(vals[j]), tuple(idx[j])) for j in sel)
        best_vals.sort(key=lambda p: -p[0])
        del best_vals[top:]
    return best_vals


def _lp(inst: Instance):
    C, t = inst.C, inst.target
    n, d = C.shape
    A_ub = np.block([[C, -np.ones((n, 1))], [-C, -np.ones((n, 1))]])
    b_ub = np.concatenate([t, -t])
    cost = np.zeros(d + 1)
    cost[-1] = 1.0
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * (d + 1), method="highs")
    if res.status != 0:
        raise OracleFailure(f"LP failed: {res.message}")
    marg = -res.ineqlin.marginals  # nonnegative multipliers
    y = marg[n:] - marg[:n]
    if y @ t < 0:
        y = -y
    return res.x[:d], y


def bruteforce_opt(inst: Instance, method: str = "auto", tol: float = 1e-9) -> ChebyshevResult:
    """Exact optimum of min_x ||Cx - target||_inf with a certified dual.

    ``method`` is "enumeration", "lp" or "auto" (enumeration when the subset
    count is at most ENUM_LIMIT, LP otherwise). The LP route is polished by
    re-solving the equioscillation system on its dual support.
    """
    C, t = inst.C, inst.target
    n, d = C.shape
    scale = max(1.0, float(np.max(np.abs(t))), float(np.max(np.abs(C))))
    if method == "auto":
        method = "enumeration" if math.comb(n, d + 1) <= ENUM_LIMIT else "lp"

    # target in the column space: optimum is zero
    x_ls, *_ = np.linalg.lstsq(C, t, rcond=None)
    if np.max(np.abs(C @ x_ls - t)) <= 1e-12 * scale:
        return ChebyshevResult(0.0, x_ls, np.zeros(n), 0.0, "lstsq")

    candidates = []
    if method == "enumeration":
        if n < d + 1:
            raise OracleFailure("need at least d+1 rows")
        for val, rows in _enumerate(inst):
            if not math.isfinite(val):
                continue
            rows = np.asarray(rows)
            _, lam = _subset_values(C, t, rows[None, :])
            candidates.append(_subset_solution(C, t, rows, lam[0]))
    elif method == "lp":
        x_lp, y_lp = _lp(inst)
        support = np.flatnonzero(np.abs(y_lp) > 1e-9 * max(1.0, np.abs(y_lp).max()))
        if support.size == d + 1:
            _, lam = _subset_values(C, t, support[None, :])
            candidates.append(_subset_solution(C, t, support, lam[0]))
        y_lp = y_lp / max(np.abs(y_lp).sum(), 1e-300)
        candidates.append((x_lp, y_lp))
    else:
        raise ValueError(f"unknown method {method!r}")

    best = None
    for x, y in candidates:
        primal, dual, feas = _certify(C, t, x, y)
        gap = primal - dual
        if feas <= tol * scale * max(1, d) and gap <= tol * scale:
            return ChebyshevResult(primal, x, y, gap, method)
        if best is None or gap < best[2]:
            best = (x, y, gap, primal, feas)
    x, y, gap, primal, feas = best
    if method == "lp" and gap <= 1e-7 * scale and feas <= 1e-7 * scale:
        return ChebyshevResult(primal, x, y, gap, method)
    if method == "enumeration":
        # degenerate ties: certify through the LP route instead
        out = bruteforce_opt(inst, "lp", tol)
        out.method = "enumeration+lp"
        return out
    raise OracleFailure(f"could not certify optimum (gap={gap:.3e}, dual infeasibility={feas:.3e})")
