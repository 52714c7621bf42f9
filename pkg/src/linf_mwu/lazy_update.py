"""Lazily maintained resistances rbar ~ r with low-rank change schedules.

SelectVector compares r at iteration i against the snapshot 2^l iterations
back, for every dyadic level l dividing i, and refreshes coordinates whose
log-ratio crossed delta / (2 log n). SelectVectorL3 buckets iterations by
their cubic relative change and refreshes on dyadic windows inside each
bucket. Width steps refresh the coordinates they touch directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np


class LazyConsistencyError(RuntimeError):
    """select_vector was called out of order (a needed snapshot is missing)."""


class ContractViolation(RuntimeError):
    """SelectVectorL3 saw a decreasing resistance."""


class BudgetExceededError(RuntimeError):
    """An iteration's cubic mass exceeded the bucket budget zeta."""


def ceil_log2(x: float) -> int:
    return max(1, math.ceil(math.log2(max(x, 2))))


_NEVER = -(1 << 60)


@dataclass
class LazyState:
    """State for SelectVector.

    ``anchors[l]`` holds r at the most recent index divisible by 2^l, which is
    exactly the snapshot r^{(i - 2^l)} read at the next multiple.
    """

    n: int
    delta: float
    rbar: Optional[np.ndarray] = None
    counter: int = -1
    anchors: List[np.ndarray] = field(default_factory=list)
    last_width: Optional[np.ndarray] = None
    update_log: List[np.ndarray] = field(default_factory=list)
    keep_sets: bool = True

    def __post_init__(self):
        self.log_n = ceil_log2(self.n)
        self.threshold = self.delta / (2 * self.log_n)
        if self.last_width is None:
            self.last_width = np.full(self.n, _NEVER, dtype=np.int64)

    def _log(self, S: np.ndarray) -> None:
        self.update_log.append(S if self.keep_sets else np.empty(S.size, dtype=np.int64))


def select_vector(state: LazyState, r_new: np.ndarray, i: int) -> np.ndarray:
    """Refresh rbar for iteration ``i`` and return the refreshed coordinate set S."""
    r_new = np.asarray(r_new, dtype=float)
    if i == 0:
        state.rbar = r_new.copy()
        state.anchors = [r_new.copy() for _ in range(state.log_n + 1)]
        state.counter = 0
        S = np.arange(state.n)
        state._log(S)
        return S
    if i != state.counter + 1 or state.rbar is None:
        raise LazyConsistencyError(f"expected iteration {state.counter + 1}, got {i}")
    mask = np.zeros(state.n, dtype=bool)
    for lvl in range(state.log_n + 1):
        step = 1 << lvl
        if i % step:
            break  # i divisible by 2^l implies divisible by every smaller power
        if lvl == state.log_n:
            mask[:] = True
        else:
            ratio = np.abs(np.log(r_new / state.anchors[lvl]))
            mask |= (ratio >= state.threshold) & (state.last_width <= i - step)
    for lvl in range(state.log_n + 1):
        if i % (1 << lvl):
            break
        state.anchors[lvl] = r_new.copy()
    S = np.flatnonzero(mask)
    state.rbar[S] = r_new[S]
    state.counter = i
    state._log(S)
    return S


def note_width_update(state, coords: np.ndarray, r_now: np.ndarray) -> None:
    """A width step changed w on ``coords``: sync rbar exactly and stamp LastWidth."""
    coords = np.asarray(coords, dtype=int)
    state.rbar[coords] = r_now[coords]
    state.last_width[coords] = state.counter


def max_log_gap(rbar: np.ndarray, r: np.ndarray) -> float:
    return float(np.max(np.abs(np.log(rbar / r))))


@dataclass
class BucketDecomposition:
    zeta: float
    T: int
    buckets: List[List[int]] = field(default_factory=list)

    def __post_init__(self):
        if not self.zeta > 0:
            raise ValueError("zeta must be positive")
        self.log_T = ceil_log2(self.T)
        if not self.buckets:
            self.buckets = [[] for _ in range(self.log_T + 1)]


def classify_iteration(decomp: BucketDecomposition, m: float) -> int:
    """Bucket j with zeta/2^{j+1} < m <= zeta/2^j, or log T when m <= zeta/T."""
    z = decomp.zeta
    if m > z:
        raise BudgetExceededError(f"cubic mass {m:.4g} exceeds zeta={z:.4g}")
    if m <= z / decomp.T:
        return decomp.log_T
    j = int(math.floor(math.log2(z / m)))
    while j > 0 and m > z / 2 ** j:
        j -= 1
    while m <= z / 2 ** (j + 1):
        j += 1
    return min(j, decomp.log_T - 1)


@dataclass
class L3LazyState:
    """State for SelectVectorL3 (monotone resistances only)."""

    n: int
    delta: float
    zeta: float
    T: int
    rbar: Optional[np.ndarray] = None
    counter: int = -1
    prev: Optional[np.ndarray] = None
    last_width: Optional[np.ndarray] = None
    update_log: List[np.ndarray] = field(default_factory=list)
    keep_sets: bool = True
    masses: List[float] = field(default_factory=list)

    def __post_init__(self):
        self.log_n = ceil_log2(self.n)
        self.threshold = self.delta / (10 * self.log_n ** 2)
        self.decomp = BucketDecomposition(self.zeta, self.T)
        # per bucket: prefix sums of |r'/r - 1| over members, row 0 is the empty prefix
        self.prefix = [[np.zeros(self.n)] for _ in range(self.decomp.log_T + 1)]
        if self.last_width is None:
            self.last_width = np.full(self.n, _NEVER, dtype=np.int64)

    def _log(self, S: np.ndarray) -> None:
        self.update_log.append(S if self.keep_sets else np.empty(S.size, dtype=np.int64))


def select_vector_l3(state: L3LazyState, r_new: np.ndarray, t: int) -> np.ndarray:
    """Refresh rbar at step ``t`` after classifying step t-1 into its bucket."""
    r_new = np.asarray(r_new, dtype=float)
    if t == 0:
        state.rbar = r_new.copy()
        state.prev = r_new.copy()
        state.counter = 0
        S = np.arange(state.n)
        state._log(S)
        return S
    if t != state.counter + 1 or state.prev is None:
        raise LazyConsistencyError(f"expected iteration {state.counter + 1}, got {t}")
    if np.any(r_new < state.prev * (1 - 1e-14)):
        raise ContractViolation("SelectVectorL3 requires nondecreasing resistances")
    q = np.abs(r_new / state.prev - 1.0)
    m = float(np.sum(q ** 3))
    state.masses.append(m)
    j = classify_iteration(state.decomp, m)
    state.decomp.buckets[j].append(t - 1)
    pre = state.prefix[j]
    pre.append(pre[-1] + q)
    k = len(pre) - 1  # 1-based rank of step t-1 inside B_j
    mask = np.zeros(state.n, dtype=bool)
    lvl = 0
    while k % (1 << lvl) == 0 and (1 << lvl) <= k:
        lo = max(k - (1 << lvl) - 1, 0)  # window k-2^l .. k inclusive
        mask |= (pre[k] - pre[lo]) >= state.threshold
        lvl += 1
    S = np.flatnonzero(mask)
    state.rbar[S] = r_new[S]
    state.prev = r_new.copy()
    state.counter = t
    state._log(S)
    return S
