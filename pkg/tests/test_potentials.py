import numpy as np
import pytest

from linf_mwu.l2_oracle import solve_direct
from linf_mwu.potentials import (CSV_HEADER, PotentialTrace, clamp_psi0, phi, psi, psi_lower_bound, record)
from linf_mwu.problem import Instance, generate


def test_phi_examples():
    assert phi(np.ones(4)) == 4
    assert phi(np.zeros(5)) == 0
    w = np.random.default_rng(0).uniform(0, 1, 10)
    assert phi(w) == pytest.approx(w.sum(), rel=1e-15)
    assert phi(np.array([-1.0, 2.0])) == 3


def test_psi_lower_bound_examples():
    C = generate(0, 7, 2).C
    assert psi_lower_bound(Instance(C, C @ np.array([1.0, 1.0]))) <= 1e-20
    assert psi_lower_bound(Instance([[1.0], [1.0]], [0.0, 2.0])) == 1.0


def test_psi_lower_bound_matches_lstsq():
    for seed in range(5):
        inst = generate(seed, 12, 3)
        inst = Instance(inst.C, inst.target * 0.2)
        x, *_ = np.linalg.lstsq(inst.C, inst.target, rcond=None)
        ref = min(1.0, float(np.sum((inst.C @ x - inst.target) ** 2)))
        assert abs(psi_lower_bound(inst) - ref) <= 1e-9


def test_psi_is_reminimized():
    inst = generate(3, 10, 2)
    r = np.linspace(1, 2, 10)
    assert psi(inst.C, inst.target, r) == pytest.approx(solve_direct(inst.C, inst.target, r).psi)


def test_clamp():
    assert clamp_psi0(0.5) == (0.5, False)
    assert clamp_psi0(0.0) == (1e-12, True)


def test_record_and_validation():
    tr = PotentialTrace()
    record(tr, 0, 0, "primal", 4.0, 1.0)
    assert len(tr) == 1
    with pytest.raises(ValueError):
        tr.record(1, 0, "sideways", 4.0, 1.0)


def test_csv_roundtrip(tmp_path):
    tr = PotentialTrace()
    tr.record(0, 0, "primal", 4.0, 1 / 3, 0, 0.1234567890123456789, 4)
    tr.record(1, 0, "width", 4.5, 2 / 3, 2, 7.0, 2)
    path = tmp_path / "trace.csv"
    tr.to_csv(path)
    assert path.read_text().splitlines()[0] == ",".join(CSV_HEADER)
    back = PotentialTrace.from_csv(path)
    assert back.records == tr.records


def test_csv_rejects_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n")
    with pytest.raises(ValueError):
        PotentialTrace.from_csv(path)
