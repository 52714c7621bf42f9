"""Weighted least-squares oracle: Delta = argmin sum_e r_e (C Delta - d)_e^2."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .inverse_maintenance import ImplicitInv, OneLevelInv, TwoLevelInv, UpdateBatch

DEFAULT_RIDGE_FLOOR = 1e-12


class SingularOracleError(np.linalg.LinAlgError):
    def __init__(self, msg: str, cond: float):
        super().__init__(f"{msg} (condition estimate {cond:.3e})")
        self.cond = cond


class StaleMaintainerError(RuntimeError):
    pass


@dataclass
class OracleResult:
    delta: np.ndarray
    residual_u: np.ndarray
    psi: float
    ridge: float = 0.0


def ridge_for(M: np.ndarray, ridge_floor: float = DEFAULT_RIDGE_FLOOR) -> float:
    return max(0.0, ridge_floor) * float(np.trace(M)) / M.shape[0]


def normal_matrix(C: np.ndarray, rbar: np.ndarray) -> np.ndarray:
    return C.T @ (rbar[:, None] * C)


def solve_direct(C: np.ndarray, d: np.ndarray, rbar: np.ndarray,
                 ridge_floor: float = DEFAULT_RIDGE_FLOOR) -> OracleResult:
    """Solve the normal equations (C^T R C + lam I) Delta = C^T R d by Cholesky."""
    rbar = np.asarray(rbar, dtype=float)
    if rbar.shape != (C.shape[0],) or d.shape != (C.shape[0],):
        raise ValueError("dimension mismatch between C, d and rbar")
    if np.any(~(rbar > 0)):
        raise ValueError("rbar must be strictly positive")
    M = normal_matrix(C, rbar)
    lam = ridge_for(M, ridge_floor)
    if lam > 0:
        M[np.diag_indices_from(M)] += lam
    rhs = C.T @ (rbar * d)
    try:
        cf = sla.cho_factor(M, check_finite=False)
        delta = sla.cho_solve(cf, rhs, check_finite=False)
    except np.linalg.LinAlgError:
        cond = float(np.linalg.cond(M)) if np.all(np.isfinite(M)) else float("inf")
        raise SingularOracleError("normal matrix not positive definite after ridge", cond)
    if not np.all(np.isfinite(delta)):
        raise SingularOracleError("non-finite oracle step", float(np.linalg.cond(M)))
    u = C @ delta - d
    return OracleResult(delta, u, float(rbar @ (u * u)), lam)


class MaintainedOracle:
    """Oracle backed by an incrementally maintained inverse of C^T R C + lam I.

    The ridge lam is fixed at construction. Each change of ``rbar`` on a set
    S of coordinates is the factored update C_S^T diag(dr) C_S.
    """

    def __init__(self, C: np.ndarray, d: np.ndarray, rbar: np.ndarray, kind: str = "one-level",
                 ridge_floor: float = DEFAULT_RIDGE_FLOOR, fault_inject: bool = False):
        self.C = np.asarray(C, dtype=float)
        self.d = np.asarray(d, dtype=float)
        self.rbar = np.array(rbar, dtype=float)
        M = normal_matrix(self.C, self.rbar)
        self.ridge = ridge_for(M, ridge_floor)
        M[np.diag_indices_from(M)] += self.ridge
        if kind == "implicit":
            self.inv = ImplicitInv(M, np.zeros(M.shape[0]), fault_inject=fault_inject)
        elif kind in ("one-level", "two-level"):
            cls = OneLevelInv if kind == "one-level" else TwoLevelInv
            self.inv = cls(M, fault_inject=fault_inject)
        else:
            raise ValueError(f"unknown maintainer kind {kind!r}")
        self.kind = kind
        self.rhs = self.C.T @ (self.rbar * self.d)
        self.updates = 0

    def batch_for(self, coords: np.ndarray, new_vals: np.ndarray) -> UpdateBatch:
        dr = new_vals - self.rbar[coords]
        keep = dr != 0
        coords, dr = coords[keep], dr[keep]
        Cs = self.C[coords].T  # d_dim x s
        return UpdateBatch(Cs, dr, Cs, touched=coords)

    def apply(self, rbar_delta: Iterable[tuple[int, float]] | tuple[np.ndarray, np.ndarray]) -> int:
        """Apply (coordinate, new value) pairs; returns the update rank."""
        if isinstance(rbar_delta, tuple) and len(rbar_delta) == 2 and isinstance(rbar_delta[0], np.ndarray):
            coords, vals = rbar_delta
        else:
            pairs = list(rbar_delta)
            coords = np.array([p[0] for p in pairs], dtype=int)
            vals = np.array([p[1] for p in pairs], dtype=float)
        coords = np.asarray(coords, dtype=int)
        vals = np.asarray(vals, dtype=float)
        if coords.size == 0:
            return 0
        if np.any(~(vals > 0)):
            raise ValueError("rbar must stay strictly positive")
        if np.unique(coords).size != coords.size:
            raise ValueError("duplicate coordinates in rbar_delta")
        batch = self.batch_for(coords, vals)
        if batch.width:
            if self.kind == "implicit":
                self.inv.update(batch, accumulate=False)
            else:
                self.inv.update(batch)
            self.updates += 1
            self.rhs = self.rhs + self.C[batch.touched].T @ (batch.core_diag * self.d[batch.touched])
            self.rbar[coords] = vals
        return batch.width

    def accumulate_step(self) -> None:
        """Implicit kind only: add the current step (M^{-1} C^T R d) to the running sum."""
        self.inv.accumulate(self.rhs)

    def step_sum(self) -> np.ndarray:
        return self.inv.query_sum()

    def solve(self, query_rows: Optional[Sequence[int]] = None) -> OracleResult:
        n_dim = self.C.shape[1]
        all_idx = np.arange(n_dim)
        Minv = self.inv.query(all_idx, all_idx)
        delta = Minv @ self.rhs
        if query_rows is None:
            u = self.C @ delta - self.d
            psi = float(self.rbar @ (u * u))
        else:
            q = np.asarray(query_rows, dtype=int)
            u = self.C[q] @ delta - self.d[q]
            psi = float("nan")
        return OracleResult(delta, u, psi, self.ridge)


def solve_maintained(maintainer: MaintainedOracle, rbar_delta, query_rows=None) -> OracleResult:
    """Apply pending resistance changes, then answer from the maintained inverse.

    Returns delta and residual entries on ``query_rows`` (all rows when None;
    psi is only reported for the full query).
    """
    if maintainer.inv.t != maintainer.updates:
        raise StaleMaintainerError("maintainer counters are inconsistent")
    maintainer.apply(rbar_delta)
    return maintainer.solve(query_rows)
