import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from linf_mwu.sketching import (CweSketch, HeavyHitterSketch, JlSketch, L3Sketch, cwe_apply_roundtrip, default_b,
                                hh_decode, iteration_seed, jl_norm, l3_estimate, sketched_residual)


def test_cwe_unit_diagonal_exact():
    sk = CweSketch(37, 11, seed=5)
    S = sk.matrix()
    assert np.max(np.abs(np.sum(S * S, axis=0) - 1.0)) <= 1e-15
    for j in range(11):
        e = np.zeros(11)
        e[j] = 1
        # the roundtrip works on integer signs, so the diagonal is exact
        assert cwe_apply_roundtrip(sk, e)[j] == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 50), st.integers(1, 30))
def test_cwe_deterministic(seed, b, n):
    x = np.random.default_rng(seed).standard_normal(n)
    a = CweSketch(b, n, seed=iteration_seed(seed, 3))
    assert np.array_equal(a.roundtrip(x), CweSketch(b, n, seed=iteration_seed(seed, 3)).roundtrip(x))
    assert np.allclose(a.roundtrip(x), a.matrix().T @ a.apply(x), atol=1e-12)


def test_cwe_entries_are_signs():
    S = CweSketch(16, 9, seed=1).matrix() * 4
    assert set(np.unique(S)) <= {-1.0, 1.0}


def test_sketched_residual_identity_when_exact():
    # with b huge relative to n the roundtrip approaches identity; here check the algebra
    u = np.array([1.0, -2.0, 0.5])
    r = np.array([1.0, 4.0, 9.0])
    sk = CweSketch(5, 3, seed=0)
    S = sk.matrix()
    sr = np.sqrt(r)
    assert np.allclose(sketched_residual(u, r, sk), (S.T @ S @ (sr * u)) / sr)


def test_dimension_errors():
    with pytest.raises(ValueError):
        CweSketch(4, 3).apply(np.ones(4))
    with pytest.raises(ValueError):
        jl_norm(JlSketch(5), np.ones(4))
    with pytest.raises(ValueError):
        l3_estimate(L3Sketch(5), np.ones(6))
    hh = HeavyHitterSketch(10, 0.5)
    with pytest.raises(ValueError):
        hh_decode(hh, np.zeros((1, 1)))


def test_jl_examples():
    sk = JlSketch(20, eps=0.2, seed=3)
    assert jl_norm(sk, np.zeros(20)) == 0
    x = np.random.default_rng(0).standard_normal(20)
    assert jl_norm(sk, 2 * x) == 2 * jl_norm(sk, x)
    assert sk.k == math.ceil(8 * 0.2 ** -2 * math.log(1 / 0.01))


def test_jl_e1_mostly_within_band():
    e1 = np.zeros(30)
    e1[0] = 1
    ok = sum(abs(jl_norm(JlSketch(30, eps=0.2, seed=s), e1) - 1) <= 0.2 for s in range(200))
    assert ok >= 198


def test_l3_examples():
    sk = L3Sketch(40, seed=2)
    assert l3_estimate(sk, np.zeros(40)) == 0
    x = np.random.default_rng(1).standard_normal(40)
    assert l3_estimate(sk, 3 * x) == pytest.approx(3 * l3_estimate(sk, x), rel=1e-12)
    assert sk.rows == math.ceil(40 ** (1 / 3) * math.log(40) ** 3)


def test_l3_e1_within_measured_distortion():
    e1 = np.zeros(64)
    e1[0] = 1
    est = np.array([l3_estimate(L3Sketch(64, seed=s), e1) for s in range(300)])
    C3 = 4.7
    assert np.all((est >= C3 ** (-1 / 3)) & (est <= C3 ** (1 / 3)))


def test_heavy_hitter_recall_and_cap():
    n = 200
    hits = 0
    for s in range(200):
        rng = np.random.default_rng(s)
        x = 0.01 * rng.standard_normal(n)
        x[3] += 10
        sk = HeavyHitterSketch(n, 0.5, seed=s)
        L = hh_decode(sk, sk.sketch(x))
        assert L.size <= sk.cap
        hits += 3 in L
    assert hits >= 198


def test_heavy_hitter_zero_input_bounded():
    sk = HeavyHitterSketch(50, 0.3, seed=0)
    assert hh_decode(sk, sk.sketch(np.zeros(50))).size <= sk.cap


def test_default_b():
    assert default_b(256, 0.1, 0.1) == math.ceil(256 ** 0.6 * 100)
