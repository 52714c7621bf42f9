"""Potentials Phi(w) = ||w||_1 and Psi(r) = min_D sum_e r_e (C D - d)_e^2, plus run traces."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, astuple
from typing import List

import numpy as np

from .l2_oracle import DEFAULT_RIDGE_FLOOR, solve_direct
from .problem import Instance

PSI0_FLOOR = 1e-12
STEP_KINDS = ("primal", "width")
CSV_HEADER = ["iter_i", "iter_k", "step", "phi", "psi", "width_set_size", "max_abs_residual", "update_rank"]


def phi(w: np.ndarray) -> float:
    return float(np.sum(np.abs(w)))


def psi(C: np.ndarray, d: np.ndarray, r: np.ndarray, ridge_floor: float = DEFAULT_RIDGE_FLOOR) -> float:
    """Re-minimized Psi(r) (the solvers report sum r u^2 from their own step instead)."""
    return solve_direct(C, d, r, ridge_floor).psi


def psi_lower_bound(inst: Instance) -> float:
    """min{1, ||(I - P_C) d||^2} with P_C the projection onto range(C)."""
    res = solve_direct(inst.C, inst.target, np.ones(inst.n))
    return min(1.0, float(res.residual_u @ res.residual_u))


def clamp_psi0(psi0: float) -> tuple[float, bool]:
    return (psi0, False) if psi0 >= PSI0_FLOOR else (PSI0_FLOOR, True)


def fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class TraceRecord:
    i: int
    k: int
    step: str
    phi: float
    psi: float
    width_set_size: int = 0
    max_abs_residual: float = 0.0
    update_rank: int = 0


@dataclass
class PotentialTrace:
    records: List[TraceRecord] = field(default_factory=list)
    psi0_clamped: bool = False

    def __len__(self) -> int:
        return len(self.records)

    def record(self, i: int, k: int, step: str, phi: float, psi: float, width_set_size: int = 0,
               max_abs_residual: float = 0.0, update_rank: int = 0) -> None:
        if step not in STEP_KINDS:
            raise ValueError(f"step kind must be one of {STEP_KINDS}, got {step!r}")
        self.records.append(TraceRecord(int(i), int(k), step, float(phi), float(psi), int(width_set_size),
                                        float(max_abs_residual), int(update_rank)))

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(CSV_HEADER)
            for r in self.records:
                row = astuple(r)
                wr.writerow([row[0], row[1], row[2], fmt(row[3]), fmt(row[4]), row[5], fmt(row[6]), row[7]])

    @classmethod
    def from_csv(cls, path) -> "PotentialTrace":
        tr = cls()
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            if header != CSV_HEADER:
                raise ValueError(f"unexpected trace header {header}")
            for row in rd:
                tr.record(int(row[0]), int(row[1]), row[2], float(row[3]), float(row[4]), int(row[5]),
                          float(row[6]), int(row[7]))
        return tr


def record(trace: PotentialTrace, i: int, k: int, step: str, phi: float, psi: float, **extra) -> None:
    trace.record(i, k, step, phi, psi, **extra)
