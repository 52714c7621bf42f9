"""Instance model for min_x ||Cx - d||_inf, sign doubling, scaling and generation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np


class InstanceError(ValueError):
    """Malformed instance data."""


class InvalidScaleError(ValueError):
    """Non-positive optimum scale passed to normalize."""


@dataclass(frozen=True)
class Instance:
    """Dense Chebyshev regression instance.

    ``C`` is n x d_dim, ``target`` has length n. ``scale_hint`` is an optional
    caller estimate of the optimum value.
    """

    C: np.ndarray
    target: np.ndarray
    scale_hint: Optional[float] = None

    def __post_init__(self):
        C = np.array(self.C, dtype=float)
        t = np.array(self.target, dtype=float).reshape(-1)
        if C.ndim != 2:
            raise InstanceError("C must be two dimensional")
        n, d = C.shape
        if n < 1 or d < 1:
            raise InstanceError("need n >= 1 and d_dim >= 1")
        if d > n:
            raise InstanceError(f"d_dim={d} exceeds n={n}")
        if t.shape[0] != n:
            raise InstanceError(f"target has length {t.shape[0]}, expected {n}")
        if not (np.all(np.isfinite(C)) and np.all(np.isfinite(t))):
            raise InstanceError("entries must be finite")
        if self.scale_hint is not None and not (self.scale_hint > 0 and math.isfinite(self.scale_hint)):
            raise InstanceError("scale_hint must be a positive finite float")
        C.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "target", t)

    @property
    def n(self) -> int:
        return self.C.shape[0]

    @property
    def d_dim(self) -> int:
        return self.C.shape[1]

    def residual(self, x: np.ndarray) -> np.ndarray:
        return self.C @ np.asarray(x, dtype=float) - self.target

    def residual_inf(self, x: np.ndarray) -> float:
        return float(np.max(np.abs(self.residual(x))))


@dataclass(frozen=True)
class DoubledInstance:
    """Rows of C followed by rows of -C, target followed by -target."""

    C_tilde: np.ndarray
    d_tilde: np.ndarray

    @property
    def n(self) -> int:
        """Row count of the original instance (half the doubled rows)."""
        return self.C_tilde.shape[0] // 2

    @property
    def d_dim(self) -> int:
        return self.C_tilde.shape[1]

    def residual(self, x: np.ndarray) -> np.ndarray:
        return self.C_tilde @ x - self.d_tilde


def double(inst: Instance) -> DoubledInstance:
    Ct = np.vstack([inst.C, -inst.C])
    dt = np.concatenate([inst.target, -inst.target])
    Ct.setflags(write=False)
    dt.setflags(write=False)
    return DoubledInstance(Ct, dt)


def normalize(inst: Instance, opt: float) -> Instance:
    """Divide C and target by ``opt`` so an instance with optimum ``opt`` gets optimum 1."""
    if not (opt > 0 and math.isfinite(opt)):
        raise InvalidScaleError(f"opt must be positive, got {opt!r}")
    hint = None if inst.scale_hint is None else inst.scale_hint / opt
    return Instance(inst.C / opt, inst.target / opt, hint)


DISTRIBUTIONS = ("gaussian", "uniform", "ill-conditioned")


def generate(seed: int, n: int, d_dim: int, distribution: str = "gaussian", kappa: float = 1e6) -> Instance:
    """Seeded random instance.

    ``ill-conditioned`` builds C = U diag(s) V^T with singular values spread
    geometrically between 1 and 1/kappa.
    """
    if not n >= d_dim >= 1:
        raise InstanceError("need n >= d_dim >= 1")
    rng = np.random.default_rng(seed)
    if distribution == "gaussian":
        C = rng.standard_normal((n, d_dim))
        t = rng.standard_normal(n)
    elif distribution == "uniform":
        C = rng.uniform(-1.0, 1.0, (n, d_dim))
        t = rng.uniform(-1.0, 1.0, n)
    elif distribution == "ill-conditioned":
        if kappa < 1:
            raise InstanceError("kappa must be >= 1")
        U, _ = np.linalg.qr(rng.standard_normal((n, d_dim)))
        V, _ = np.linalg.qr(rng.standard_normal((d_dim, d_dim)))
        s = np.geomspace(1.0, 1.0 / kappa, d_dim) if d_dim > 1 else np.ones(1)
        C = (U * s) @ V.T
        t = rng.standard_normal(n)
    else:
        raise InstanceError(f"unsupported distribution {distribution!r}; choose from {DISTRIBUTIONS}")
    return Instance(C, t)


def to_json(inst: Instance) -> dict:
    return {
        "n": inst.n,
        "d": inst.d_dim,
        "C": [float(v) for v in inst.C.reshape(-1)],
        "target": [float(v) for v in inst.target],
        "scale_hint": inst.scale_hint,
    }


def from_json(obj: dict) -> Instance:
    try:
        n, d = int(obj["n"]), int(obj["d"])
        flat, target = obj["C"], obj["target"]
        hint = obj.get("scale_hint")
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceError(f"malformed instance object: {exc}") from exc
    if len(flat) != n * d:
        raise InstanceError(f"C has {len(flat)} entries, expected n*d = {n * d}")
    if len(target) != n:
        raise InstanceError(f"target has {len(target)} entries, expected {n}")
    C = np.asarray(flat, dtype=float).reshape(n, d) if n * d else np.zeros((n, d))
    return Instance(C, np.asarray(target, dtype=float), None if hint is None else float(hint))


def read_instance(path) -> Instance:
    with open(Path(path)) as fh:
        return from_json(json.load(fh))


def write_instance(inst: Instance, path) -> None:
    with open(Path(path), "w") as fh:
        json.dump(to_json(inst), fh)
