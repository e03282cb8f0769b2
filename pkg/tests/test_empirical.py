import numpy as np
import pytest

from copulalab.copulas import Clayton
from copulalab.empirical import (
    EmpiricalCopula,
    Sample,
    SmoothedMarginal,
    StepCdf,
    default_grid,
    empirical_copula,
    g_copula,
    g_process,
    generalized_inverse,
    oracle_copula,
    smoothed_marginal,
)
from copulalab.grid import Grid
from scipy import stats


def brute_force_copula(data, grid):
    """Literal double loop over the plug-in definition."""
    n, d = data.shape
    out = np.zeros(grid.shape)
    ecdfs = [StepCdf(data[:, j]) for j in range(d)]
    for flat, p in enumerate(grid.nodes()):
        thr = [generalized_inverse(ecdfs[j], p[j]) if p[j] > 0 else -np.inf
               for j in range(d)]
        count = sum(
            1 for i in range(n) if all(data[i, j] <= thr[j] for j in range(d))
        )
        out[np.unravel_index(flat, grid.shape)] = count / n
    return out


def test_sample_validation():
    with pytest.raises(ValueError):
        Sample(np.array([[1.0, np.nan]]))
    s = Sample(np.arange(6.0).reshape(3, 2))
    assert s.n == 3 and s.d == 2


def test_stepcdf_quantile_is_generalized_inverse():
    pts = np.array([3.0, 1.0, 2.0, 2.0])
    F = StepCdf(pts)
    # inf{v : F(v) >= u}
    assert F.quantile(0.25) == 1.0
    assert F.quantile(0.26) == 2.0
    assert F.quantile(0.75) == 2.0
    assert F.quantile(0.76) == 3.0
    assert F.quantile(1.0) == 3.0
    assert F.quantile(0.0) == 1.0
    assert F(1.99) == 0.25 and F(2.0) == 0.75


def test_smoothed_marginal_roundtrip_and_deviation():
    F = smoothed_marginal(stats.norm.cdf, 50)
    u = np.linspace(0.001, 0.999, 101)
    q = F.quantile(u)
    assert np.max(np.abs(F(q) - u)) < 1e-12
    # mixture weight 1/n bounds the deviation from the base cdf
    x = np.linspace(-3, 3, 41)
    assert np.max(np.abs(F(x) - stats.norm.cdf(x))) <= 1.0 / 50 + 1e-12


def test_smoothed_marginal_zero_weight_is_base():
    F = SmoothedMarginal(stats.norm.cdf, 0.0)
    x = np.linspace(-2, 2, 11)
    assert np.array_equal(F(x), stats.norm.cdf(x))


def test_empirical_copula_matches_brute_force_with_ties():
    rng = np.random.default_rng(10)
    for d in (2, 3):
        for _ in range(10):
            n = int(rng.integers(2, 26))
            data = rng.integers(0, 5, size=(n, d)).astype(float)  # forced ties
            grid = Grid(d, 9)
            fast = empirical_copula(Sample(data), grid).values
            slow = brute_force_copula(data, grid)
            assert np.array_equal(fast, slow)


def test_empirical_copula_boundary_values():
    rng = np.random.default_rng(11)
    s = Sample(rng.standard_normal((40, 2)))
    c = empirical_copula(s, Grid(2, 11)).values
    assert np.all(c[0, :] == 0.0) and np.all(c[:, 0] == 0.0)
    assert c[-1, -1] == 1.0


def test_oracle_copula_is_empirical_on_errors():
    rng = np.random.default_rng(12)
    s = Sample(rng.standard_normal((30, 2)))
    assert np.array_equal(
        oracle_copula(s, Grid(2, 11)).values,
        empirical_copula(s, Grid(2, 11)).values,
    )


def test_g_copula_equals_empirical_copula_exactly():
    rng = np.random.default_rng(13)
    s = Sample(rng.standard_normal((60, 2)))
    marg = [smoothed_marginal(stats.norm.cdf, 60)] * 2
    grid = Grid(2, 21)
    assert np.array_equal(
        g_copula(s, marg, grid).values, empirical_copula(s, grid).values
    )


def test_g_process_approaches_true_copula():
    c = Clayton(2.0)
    rng = np.random.default_rng(14)
    n = 5000
    u = c.sample(n, rng)
    eps = stats.norm.ppf(u)
    marg = [smoothed_marginal(stats.norm.cdf, n)] * 2
    grid = Grid(2, 21)
    g = g_process(Sample(eps), marg, grid)
    truth = c.cdf(grid.nodes()).reshape(grid.shape)
    assert np.max(np.abs(g.values - truth)) < 0.03


def test_default_grid_resolution():
    assert default_grid(2).m == 101
    assert default_grid(3).m == 41
    assert default_grid(2, 51).m == 51


def test_estimator_wrapper():
    rng = np.random.default_rng(15)
    X = rng.standard_normal((50, 2))
    est = EmpiricalCopula(m=11).fit(X)
    assert est.get_params() == {"m": 11}
    assert est.n_features_in_ == 2
    direct = empirical_copula(Sample(X), Grid(2, 11))
    pts = rng.uniform(0, 1, size=(20, 2))
    assert np.array_equal(est.predict(pts), direct(pts))
    est.set_params(m=21)
    assert est.m == 21
    with pytest.raises(ValueError):
        est.set_params(bogus=1)
    with pytest.raises(RuntimeError):
        EmpiricalCopula().predict(pts)
