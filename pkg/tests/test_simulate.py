import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spike_limits.errors import DegenerateVariance, DomainError
from spike_limits.model import SpikeSet, build_equicorrelation, build_general
from spike_limits.simulate import (
    NU4,
    SourceDistribution,
    derive_seed,
    draw_source,
    eig_stat,
    extract_spiked,
    observe,
    sample_corr,
    sample_cov,
    vec_stat,
)


@pytest.mark.parametrize("kind", sorted(NU4))
def test_sources_standardized(kind):
    X = draw_source(200, 500, kind, seed=11)
    assert abs(X.mean()) <= 4 / np.sqrt(X.size)
    assert abs(X.var() - 1) <= 0.05
    # fourth cumulant, loose Monte Carlo band
    assert abs(np.mean(X**4) - 3 - NU4[kind]) < 0.3


def test_rademacher_support_and_determinism():
    X = draw_source(30, 40, "rademacher", seed=5)
    assert set(np.unique(X)) == {-1.0, 1.0}
    assert np.array_equal(draw_source(30, 40, "laplace", 9), draw_source(30, 40, "laplace", 9))
    with pytest.raises(DomainError):
        SourceDistribution("cauchy")


def test_derive_seed_is_order_free():
    seeds = [derive_seed(2024, r) for r in range(50)]
    assert len(set(seeds)) == 50
    assert derive_seed(2024, 17) == seeds[17]
    assert derive_seed(2025, 17) != seeds[17]


def test_observe():
    m = build_general(5, [(3.0, 1)], [1.0] * 4)
    X = np.random.default_rng(0).standard_normal((5, 7))
    assert np.array_equal(observe(build_general(5, [(1.5, 1)], [1.0] * 4), np.zeros((5, 3))), np.zeros((5, 3)))
    assert np.allclose(observe(m, X)[1:], X[1:])


def test_observe_population_covariance():
    m = build_equicorrelation(10, 0.5)
    n = 20000
    Y = observe(m, draw_source(10, n, "gaussian", 3))
    S = sample_cov(Y, n)
    se = np.sqrt((1 + m.R**2) / n)
    assert np.all(np.abs(S - m.R) <= 5 * se)


def test_sample_cov_examples():
    y = np.array([1.0, 2.0, -1.0])
    assert np.array_equal(sample_cov(y, 1), np.outer(y, y))
    Q, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((8, 4)))
    assert np.allclose(sample_cov(Q.T * 2.0, 4), np.eye(4))
    S = sample_cov(np.random.default_rng(2).standard_normal((6, 9)))
    assert np.array_equal(S, S.T)


def test_sample_corr_examples():
    assert np.array_equal(sample_corr(np.diag([4.0, 9.0])), np.eye(2))
    assert np.allclose(sample_corr(np.array([[4.0, 3.0], [3.0, 9.0]])), [[1, 0.5], [0.5, 1]])
    with pytest.raises(DegenerateVariance):
        sample_corr(np.diag([0.0, 1.0]))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_sample_corr_scale_invariance(seed):
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((12, 30))
    D = rng.uniform(0.1, 10.0, 12)
    R1 = sample_corr(sample_cov(Y))
    R2 = sample_corr(sample_cov(D[:, None] * Y))
    assert np.max(np.abs(R1 - R2)) <= 1e-12
    assert np.all(np.diag(R1) == 1.0)
    assert np.linalg.eigvalsh(R1)[-1] <= 12 + 1e-10


def test_extract_spiked_examples():
    lam, Z = extract_spiked(np.diag([5.0, 1.0, 1.0]), SpikeSet(((5.0, 1),)))
    assert lam.tolist() == [5.0] and np.allclose(Z[:, 0], [1, 0, 0])
    m = build_equicorrelation(30, 0.4)
    lam, Z = extract_spiked(m.R, m.spikes)
    assert lam[0] == pytest.approx(1 + 29 * 0.4, rel=1e-12)
    assert np.allclose(Z[:, 0], 1 / np.sqrt(30))
    A = np.random.default_rng(4).standard_normal((20, 20))
    lam, Z = extract_spiked(A + A.T, 4)
    assert np.all(np.diff(lam) <= 0)
    assert np.max(np.abs(Z.T @ Z - np.eye(4))) <= 1e-10


def test_stats():
    assert eig_stat(4.2, 4.2, 400) == 0.0
    Z = np.eye(3)[:, :1]
    assert vec_stat(Z, [0], np.array([1.0, 0, 0])) == 1.0
    rng = np.random.default_rng(8)
    A = rng.standard_normal((10, 10))
    _, Z = np.linalg.eigh(A + A.T)
    P = rng.standard_normal(10)
    P /= np.linalg.norm(P)
    assert sum(vec_stat(Z, [j], P) for j in range(10)) == pytest.approx(1.0, abs=1e-10)
    c, s = np.cos(0.7), np.sin(0.7)
    Zr = Z.copy()
    Zr[:, :2] = Z[:, :2] @ np.array([[c, -s], [s, c]])
    assert abs(vec_stat(Z, [0, 1], P) - vec_stat(Zr, [0, 1], P)) <= 1e-12
    assert 0 <= vec_stat(Z, [3], P) <= 1
