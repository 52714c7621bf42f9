"""Seeded random sketches: coordinate-wise embedding, JL, l3 estimator, count-sketch heavy hitters.

Every map is a pure function of (seed, input). Per-iteration sketches are
derived from a master seed with ``iteration_seed``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


def iteration_seed(master: int, counter: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master) & 0xFFFFFFFF, int(counter)])


def _signs(rng: np.random.Generator, shape) -> np.ndarray:
    """Uniform +-1 matrix built from packed random bits."""
    count = int(np.prod(shape))
    nbytes = (count + 7) // 8
    bits = np.unpackbits(rng.integers(0, 256, size=nbytes, dtype=np.uint8), count=count)
    out = bits.astype(np.float64)
    out *= 2.0
    out -= 1.0
    return out.reshape(shape)


def _check_dim(x: np.ndarray, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[0] != n:
        raise ValueError(f"input has length {x.shape[0]}, sketch expects {n}")
    return x


@dataclass(frozen=True)
class CweSketch:
    """b x n matrix with i.i.d. entries +-1/sqrt(b); every column has unit norm exactly."""

    b: int
    n: int
    seed: object = 0

    def matrix(self) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        return _signs(rng, (self.b, self.n)) / math.sqrt(self.b)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix() @ _check_dim(x, self.n)

    def roundtrip(self, x: np.ndarray) -> np.ndarray:
        """S^T S x."""
        x = _check_dim(x, self.n)
        rng = np.random.default_rng(self.seed)
        P = _signs(rng, (self.b, self.n))
        return (P.T @ (P @ x)) / self.b


def cwe_apply_roundtrip(sk: CweSketch, x: np.ndarray) -> np.ndarray:
    return sk.roundtrip(x)


def sketched_residual(u: np.ndarray, rbar: np.ndarray, sk: CweSketch) -> np.ndarray:
    """u_hat = R^{-1/2} S^T S R^{1/2} u."""
    sr = np.sqrt(rbar)
    return sk.roundtrip(sr * u) / sr


def default_b(n: int, eps: float, eta: float) -> int:
    return max(1, math.ceil(n ** (0.5 + eta) * eps ** -2))


@dataclass(frozen=True)
class JlSketch:
    """Dense Gaussian JL map with k = ceil(c eps^-2 log(m / fail)) rows."""

    n: int
    eps: float = 0.2
    m: int = 1
    fail: float = 0.01
    c: float = 8.0
    seed: object = 0

    @property
    def k(self) -> int:
        return max(1, math.ceil(self.c * self.eps ** -2 * math.log(max(self.m, 1) / self.fail)))

    def matrix(self) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        return rng.standard_normal((self.k, self.n)) / math.sqrt(self.k)


def jl_norm(sk: JlSketch, x: np.ndarray) -> float:
    return float(np.linalg.norm(sk.matrix() @ _check_dim(x, sk.n)))


@dataclass(frozen=True)
class L3Sketch:
    """Max-stability l3 estimator.

    Each repetition hashes coordinates into ``rows`` buckets with random signs
    after scaling coordinate i by E_i^{-1/3}, E_i ~ Exp(1). For nonnegative
    |x_i|^3 / E_i the maximum over i is ||x||_3^3 / Exp(1), so the bucket
    maximum concentrates around ||x||_3 up to the Exp(1)^{-1/3} law. The
    returned value is the median over repetitions divided by the median of
    that law, ln(2)^{-1/3}.
    """

    n: int
    c3: float = 1.0
    reps: Optional[int] = None
    seed: object = 0

    @property
    def rows(self) -> int:
        ln = math.log(max(self.n, 3))
        return max(1, math.ceil(self.c3 * self.n ** (1 / 3) * ln ** 3))

    @property
    def repetitions(self) -> int:
        return self.reps if self.reps is not None else max(3, 2 * math.ceil(math.log(max(self.n, 3))) + 1)

    def _tables(self):
        rng = np.random.default_rng(self.seed)
        R = self.repetitions
        buckets = rng.integers(0, self.rows, size=(R, self.n))
        signs = _signs(rng, (R, self.n))
        scale = rng.exponential(1.0, size=(R, self.n)) ** (-1.0 / 3.0)
        return buckets, signs, scale

    def estimates(self, x: np.ndarray) -> np.ndarray:
        x = _check_dim(x, self.n)
        buckets, signs, scale = self._tables()
        out = np.empty(buckets.shape[0])
        for r in range(buckets.shape[0]):
            y = np.zeros(self.rows)
            np.add.at(y, buckets[r], signs[r] * scale[r] * x)
            out[r] = np.max(np.abs(y))
        return out


L3_MEDIAN = math.log(2.0) ** (-1.0 / 3.0)


def l3_estimate(sk: L3Sketch, x: np.ndarray) -> float:
    return float(np.median(sk.estimates(x)) / L3_MEDIAN)


@dataclass(frozen=True)
class HeavyHitterSketch:
    """Count-sketch table (reps x buckets) with sign hashes.

    Decoding estimates every coordinate by the median of its signed bucket
    values and keeps those above (eps_heavy/2) * estimated ||x||_2, capped at
    ``cap`` entries ordered by estimate.
    """

    n: int
    eps_heavy: float
    fail: float = 0.01
    c: float = 4.0
    seed: object = 0

    @property
    def buckets(self) -> int:
        return max(4, math.ceil(self.c / self.eps_heavy ** 2))

    @property
    def reps(self) -> int:
        return max(3, 2 * math.ceil(math.log(self.n / self.fail) / 2) + 1)

    @property
    def rows(self) -> int:
        return self.buckets * self.reps

    @property
    def cap(self) -> int:
        return max(1, math.ceil(4.0 / self.eps_heavy ** 2))

    def _tables(self):
        rng = np.random.default_rng(self.seed)
        h = rng.integers(0, self.buckets, size=(self.reps, self.n))
        s = _signs(rng, (self.reps, self.n))
        return h, s

    def sketch(self, x: np.ndarray) -> np.ndarray:
        x = _check_dim(x, self.n)
        h, s = self._tables()
        y = np.zeros((self.reps, self.buckets))
        for r in range(self.reps):
            np.add.at(y[r], h[r], s[r] * x)
        return y


def hh_decode(sk: HeavyHitterSketch, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (sk.reps, sk.buckets):
        raise ValueError(f"sketch has shape {y.shape}, expected {(sk.reps, sk.buckets)}")
    h, s = sk._tables()
    est = np.median(s * np.take_along_axis(y, h, axis=1), axis=0)
    norm2 = math.sqrt(float(np.median(np.sum(y * y, axis=1))))
    keep = np.flatnonzero(np.abs(est) >= 0.5 * sk.eps_heavy * norm2)
    if keep.size > sk.cap:
        keep = keep[np.argsort(-np.abs(est[keep]), kind="stable")[: sk.cap]]
    return np.sort(keep)
