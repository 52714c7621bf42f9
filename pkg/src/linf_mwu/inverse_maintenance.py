"""Incremental inverse maintenance under factored low-rank updates.

Every update is M_new - M_old = U diag-or-dense(core) V^T. All structures use
the form

    (A + U K V^T)^{-1} = A^{-1} - A^{-1} U (I + K V^T A^{-1} U)^{-1} K V^T A^{-1}

which never inverts the core, so tiny or zero core entries are harmless.

OneLevelInv keeps N = (M^{(t0)})^{-1} plus all factors since t0.
TwoLevelInv also keeps an intermediate snapshot at t1 in factored form:
(M^{(t1)})^{-1} = N - F B H with F = N U1, H = V1^T N, B = (I + K1 V1^T N U1)^{-1} K1.
ImplicitInv accumulates sum_i (M^{(i)})^{-1} v as u0 + N u1 + F u2.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

_COND_LIMIT = 1e12
_ids = itertools.count(1 << 40)


class SingularMatrixError(np.linalg.LinAlgError):
    pass


class _Degenerate(Exception):
    pass


@dataclass
class UpdateBatch:
    """M_new - M_old = U @ core @ V.T; ``core`` is a length-k diagonal or a k x k matrix."""

    U: np.ndarray
    core: np.ndarray
    V: np.ndarray
    touched: Optional[np.ndarray] = None

    def __post_init__(self):
        self.U = np.atleast_2d(np.asarray(self.U, dtype=float))
        self.V = np.atleast_2d(np.asarray(self.V, dtype=float))
        self.core = np.asarray(self.core, dtype=float)
        k = self.U.shape[1]
        if self.V.shape != self.U.shape:
            raise ValueError(f"U {self.U.shape} and V {self.V.shape} must have equal shape")
        if self.core.ndim == 1 and self.core.shape[0] != k or self.core.ndim == 2 and self.core.shape != (k, k):
            raise ValueError("core width does not match factor width")
        if self.touched is None:
            # generic updates get fresh identifiers, one per factor column
            self.touched = np.array([next(_ids) for _ in range(k)], dtype=np.int64)
        else:
            self.touched = np.asarray(self.touched, dtype=np.int64)

    @property
    def width(self) -> int:
        return self.U.shape[1]

    @property
    def core_diag(self) -> np.ndarray:
        if self.core.ndim != 1:
            raise ValueError("core is dense")
        return self.core

    def core_matrix(self) -> np.ndarray:
        return np.diag(self.core) if self.core.ndim == 1 else self.core

    def dense(self) -> np.ndarray:
        return self.U @ self.core_matrix() @ self.V.T


@dataclass
class OpCounter:
    resets: int = 0
    partial_resets: int = 0
    queries: int = 0
    reset_ops: int = 0
    partial_reset_ops: int = 0
    query_ops: int = 0

    def to_json(self) -> dict:
        return {
            "resets": self.resets,
            "partial_resets": self.partial_resets,
            "queries": self.queries,
            "scalar_ops": {"reset": self.reset_ops, "partial_reset": self.partial_reset_ops, "query": self.query_ops},
        }


def _block_diag(blocks):
    k = sum(b.shape[0] for b in blocks)
    out = np.zeros((k, k))
    o = 0
    for b in blocks:
        s = b.shape[0]
        out[o:o + s, o:o + s] = b
        o += s
    return out


def _solve_inner(K: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    if K.size == 0:
        return rhs
    if not np.all(np.isfinite(K)):
        raise _Degenerate
    sv = np.linalg.svd(K, compute_uv=False)
    # the floor at 1 also catches near-cancelling updates where K itself is tiny
    if sv[-1] * _COND_LIMIT <= max(sv[0], 1.0):
        raise _Degenerate
    return np.linalg.solve(K, rhs)


class _Factors:
    """Concatenated factor list U, K (block diagonal), V and touched ids."""

    def __init__(self, n: int):
        self.n = n
        self.U = np.zeros((n, 0))
        self.V = np.zeros((n, 0))
        self.K = np.zeros((0, 0))
        self.touched: set[int] = set()

    @property
    def width(self) -> int:
        return self.U.shape[1]

    def add(self, b: UpdateBatch) -> None:
        self.U = np.hstack([self.U, b.U])
        self.V = np.hstack([self.V, b.V])
        self.K = _block_diag([self.K, b.core_matrix()])
        self.touched.update(int(j) for j in b.touched)


class OneLevelInv:
    """Inverse snapshot N = (M^{(t0)})^{-1} plus pending factored updates."""

    def __init__(self, M0: np.ndarray, fault_inject: bool = False):
        M0 = np.array(M0, dtype=float)
        if M0.ndim != 2 or M0.shape[0] != M0.shape[1]:
            raise ValueError("M0 must be square")
        self.n = M0.shape[0]
        self.M = M0  # current matrix, kept for fallback and verification
        try:
            if np.linalg.cond(M0) > 1e14:
                raise np.linalg.LinAlgError
            self.N = np.linalg.inv(M0)
        except np.linalg.LinAlgError as exc:
            raise SingularMatrixError("initial matrix is singular") from exc
        self.t = 0
        self.t0 = 0
        self.pending = _Factors(self.n)
        self.ops = OpCounter()
        self.degraded = False
        self.fault_inject = fault_inject

    @property
    def k0(self) -> int:
        return self.pending.width

    @property
    def k1(self) -> int:
        return 0

    def _check(self, batch: UpdateBatch) -> None:
        if batch.U.shape[0] != self.n:
            raise ValueError(f"factor has {batch.U.shape[0]} rows, matrix is {self.n} x {self.n}")

    def update(self, batch: UpdateBatch) -> None:
        self._check(batch)
        if batch.width == 0:
            return
        self.pending.add(batch)
        self.M = self.M + batch.dense()
        self.t += 1

    def _fresh(self) -> np.ndarray:
        self.degraded = True
        return np.linalg.inv(self.M)

    def reset(self) -> None:
        k0 = self.k0
        if k0:
            P = self.pending
            NU = self.N @ P.U
            VN = P.V.T @ self.N
            try:
                inner = np.eye(k0) + P.K @ (P.V.T @ NU)
                corr = NU @ _solve_inner(inner, P.K @ VN)
                self.N = self.N + corr if self.fault_inject else self.N - corr
            except _Degenerate:
                self.N = self._fresh()
        self.ops.resets += 1
        self.ops.reset_ops += self.n * self.n * k0
        self.pending = _Factors(self.n)
        self.t0 = self.t

    def query(self, rows, cols) -> np.ndarray:
        rows = np.asarray(rows, dtype=int)
        cols = np.asarray(cols, dtype=int)
        k0 = self.k0
        self.ops.queries += 1
        self.ops.query_ops += k0 * self.k1 * max(self.k1, cols.size) + k0 * rows.size * cols.size
        out = self.N[np.ix_(rows, cols)]
        if k0 == 0:
            return out.copy()
        P = self.pending
        NU_r = self.N[rows] @ P.U
        VN_c = P.V.T @ self.N[:, cols]
        try:
            inner = np.eye(k0) + P.K @ (P.V.T @ (self.N @ P.U))
            return out - NU_r @ _solve_inner(inner, P.K @ VN_c)
        except _Degenerate:
            self.reset()
            return self.N[np.ix_(rows, cols)].copy()

    def inverse(self) -> np.ndarray:
        idx = np.arange(self.n)
        return self.query(idx, idx)


class TwoLevelInv(OneLevelInv):
    """Adds a partially reset level t0 <= t1 kept in factored form."""

    def __init__(self, M0: np.ndarray, fault_inject: bool = False):
        super().__init__(M0, fault_inject)
        self._clear_level1()

    def _clear_level1(self) -> None:
        n = self.n
        self.t1 = self.t0
        self.level1 = _Factors(n)
        self.F = np.zeros((n, 0))  # N U1
        self.H = np.zeros((0, n))  # V1^T N
        self.Kinv = np.zeros((0, 0))  # (I + K1 V1^T N U1)^{-1}
        self.B = np.zeros((0, 0))  # Kinv K1

    @property
    def J(self) -> set[int]:
        return self.level1.touched

    @property
    def E(self) -> np.ndarray:
        return self.B @ self.H

    @property
    def k0(self) -> int:
        return self.level1.width + self.pending.width

    @property
    def k1(self) -> int:
        return self.pending.width

    def _merge_pending(self) -> bool:
        """Fold the factors since t1 into the level-1 representation."""
        k1 = self.k1
        if not k1:
            return True
        P = self.pending
        NU2 = self.N @ P.U
        V2N = P.V.T @ self.N
        X = self.level1.K @ (self.H @ P.U)  # top-right block of the merged inner matrix
        Y = P.K @ (P.V.T @ self.F)  # bottom-left block
        D = np.eye(k1) + P.K @ (P.V.T @ NU2)
        try:
            KX = self.Kinv @ X
            Sinv = _solve_inner(D - Y @ KX, np.eye(k1))
        except _Degenerate:
            return False
        YK = Y @ self.Kinv
        self.Kinv = np.block([[self.Kinv + KX @ Sinv @ YK, -KX @ Sinv], [-Sinv @ YK, Sinv]])
        self.level1.add(UpdateBatch(P.U, P.K, P.V, touched=np.fromiter(P.touched, dtype=np.int64)))
        self.F = np.hstack([self.F, NU2])
        self.H = np.vstack([self.H, V2N])
        self.B = self.Kinv @ self.level1.K
        if self.fault_inject:
            self.B = self.B * (1 + 1e-3)
        self.pending = _Factors(self.n)
        return True

    def _hard_reset(self, k0: int) -> None:
        self.N = self._fresh()
        self.ops.resets += 1
        self.ops.reset_ops += self.n * self.n * k0
        self.pending = _Factors(self.n)
        self.t0 = self.t
        self._clear_level1()

    def partial_reset(self) -> None:
        k0, k1 = self.k0, self.k1
        self.ops.partial_resets += 1
        self.ops.partial_reset_ops += self.n * k0 * k1
        if not self._merge_pending():
            self._hard_reset(k0)
            return
        self.t1 = self.t

    def reset(self) -> None:
        k0 = self.k0
        if not self._merge_pending():
            self._hard_reset(k0)
            return
        if self.level1.width:
            corr = self.F @ (self.B @ self.H)
            self.N = self.N + corr if self.fault_inject else self.N - corr
        self.ops.resets += 1
        self.ops.reset_ops += self.n * self.n * k0
        self.pending = _Factors(self.n)
        self.t0 = self.t
        self._clear_level1()

    def query(self, rows, cols) -> np.ndarray:
        rows = np.asarray(rows, dtype=int)
        cols = np.asarray(cols, dtype=int)
        k0, k1 = self.k0, self.k1
        self.ops.queries += 1
        self.ops.query_ops += k0 * k1 * max(k1, cols.size) + k0 * rows.size * cols.size
        BH_c = self.B @ self.H[:, cols]
        out = self.N[np.ix_(rows, cols)] - self.F[rows] @ BH_c
        if k1 == 0:
            return out
        P = self.pending
        HU2 = self.H @ P.U
        V2F = P.V.T @ self.F
        N1U2_r = self.N[rows] @ P.U - self.F[rows] @ (self.B @ HU2)
        V2N1_c = P.V.T @ self.N[:, cols] - V2F @ BH_c
        V2N1U2 = P.V.T @ (self.N @ P.U) - V2F @ (self.B @ HU2)
        try:
            G = np.eye(k1) + P.K @ V2N1U2
            return out - N1U2_r @ _solve_inner(G, P.K @ V2N1_c)
        except _Degenerate:
            self.reset()
            return self.N[np.ix_(rows, cols)].copy()


class ImplicitInv(TwoLevelInv):
    """Maintains sum_{i<=t} (M^{(i)})^{-1} v as u0 + N u1 + F u2."""

    def __init__(self, M0: np.ndarray, v: np.ndarray, fault_inject: bool = False):
        super().__init__(M0, fault_inject)
        self.v = np.array(v, dtype=float)
        if self.v.shape != (self.n,):
            raise ValueError("v has wrong length")
        self.u0 = np.zeros(self.n)
        self.u1 = self.v.copy()
        self.u2 = np.zeros(0)

    def update(self, batch: UpdateBatch, accumulate: bool = True, v: Optional[np.ndarray] = None) -> None:
        super().update(batch)
        if accumulate:
            self.accumulate(v)

    def accumulate(self, v: Optional[np.ndarray] = None) -> None:
        """Add (M^{(t)})^{-1} v to the running sum (v defaults to the fixed vector)."""
        z = self.v if v is None else np.asarray(v, dtype=float)
        Hz = self.H @ z
        if self.k1 == 0:
            self.u1 = self.u1 + z
            self.u2 = self.u2 - self.B @ Hz
            return
        P = self.pending
        HU2 = self.H @ P.U
        V2F = P.V.T @ self.F
        V2N1z = P.V.T @ (self.N @ z) - V2F @ (self.B @ Hz)
        V2N1U2 = P.V.T @ (self.N @ P.U) - V2F @ (self.B @ HU2)
        try:
            y = _solve_inner(np.eye(self.k1) + P.K @ V2N1U2, P.K @ V2N1z)
        except _Degenerate:
            self.reset()
            self.u1 = self.u1 + z
            return
        self.u1 = self.u1 + z - P.U @ y
        self.u2 = self.u2 - self.B @ (Hz - HU2 @ y)

    def _merge_pending(self) -> bool:
        w_before = self.level1.width
        ok = super()._merge_pending()
        if ok and self.level1.width > w_before:
            self.u2 = np.concatenate([self.u2, np.zeros(self.level1.width - w_before)])
        return ok

    def _fold(self) -> None:
        self.u0 = self.query_sum()
        self.u1 = np.zeros(self.n)
        self.u2 = np.zeros(self.level1.width)

    def _hard_reset(self, k0: int) -> None:
        self._fold()
        super()._hard_reset(k0)
        self.u2 = np.zeros(0)

    def reset(self) -> None:
        self._fold()
        super().reset()
        self.u2 = np.zeros(0)

    def query_sum(self) -> np.ndarray:
        out = self.u0 + self.N @ self.u1
        if self.u2.size:
            out = out + self.F @ self.u2
        return out


def reset_policy(inv: OneLevelInv, n_scale: int, a0: float = 0.75, a1: float = 0.5) -> str:
    """Reset when k0 >= n^a0, partial reset when k1 >= n^a1; returns the action taken."""
    if inv.k0 >= n_scale ** a0:
        inv.reset()
        return "reset"
    if isinstance(inv, TwoLevelInv) and inv.k1 >= n_scale ** a1:
        inv.partial_reset()
        return "partial_reset"
    return "none"
