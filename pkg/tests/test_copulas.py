import numpy as np
import pytest

from copulalab.copulas import (
    FGM,
    Clayton,
    Frank,
    GaussianCopula,
    Gumbel,
    Independence,
    check_c2,
)

FAMILIES = [
    Independence(2),
    Independence(3),
    Clayton(2.0),
    Clayton(2.0, d=3),
    Gumbel(2.0),
    Frank(4.0),
    GaussianCopula(0.5),
    FGM(0.5),
]


@pytest.mark.parametrize("c", FAMILIES, ids=repr)
def test_frechet_bounds_and_uniform_margins(c):
    rng = np.random.default_rng(1)
    pts = rng.uniform(0.0, 1.0, size=(200, c.d))
    vals = c.cdf(pts)
    lower = np.maximum(pts.sum(axis=1) - (c.d - 1), 0.0)
    upper = pts.min(axis=1)
    assert np.all(vals >= lower - 1e-12)
    assert np.all(vals <= upper + 1e-12)
    # margins: set all other coordinates to 1
    u = np.linspace(0.0, 1.0, 21)
    for j in range(c.d):
        p = np.ones((21, c.d))
        p[:, j] = u
        assert np.allclose(c.cdf(p), u, atol=1e-12)


@pytest.mark.parametrize("c", FAMILIES, ids=repr)
def test_partial_matches_finite_differences(c):
    rng = np.random.default_rng(2)
    pts = rng.uniform(0.1, 0.9, size=(50, c.d))
    h = 1e-6
    for j in range(c.d):
        up = pts.copy()
        dn = pts.copy()
        up[:, j] += h
        dn[:, j] -= h
        fd = (c.cdf(up) - c.cdf(dn)) / (2 * h)
        assert np.max(np.abs(c.partial(j, pts) - fd)) < 1e-5


@pytest.mark.parametrize("c", FAMILIES, ids=repr)
def test_second_partial_matches_finite_differences(c):
    rng = np.random.default_rng(3)
    pts = rng.uniform(0.2, 0.8, size=(20, c.d))
    h = 1e-5
    for j in range(c.d):
        for k in range(c.d):
            pp = pts.copy(); pp[:, j] += h; pp[:, k] += h
            pm = pts.copy(); pm[:, j] += h; pm[:, k] -= h
            mp = pts.copy(); mp[:, j] -= h; mp[:, k] += h
            mm = pts.copy(); mm[:, j] -= h; mm[:, k] -= h
            fd = (c.cdf(pp) - c.cdf(pm) - c.cdf(mp) + c.cdf(mm)) / (4 * h * h)
            got = c.second_partial(j, k, pts)
            assert np.max(np.abs(got - fd)) < 1e-3


def test_clayton_mixed_second_partial_closed_form():
    # at (1/2, 1/2), theta = 2: value is 192 * 7**(-5/2)
    c = Clayton(2.0)
    got = float(c.second_partial(0, 1, np.array([[0.5, 0.5]]))[0])
    assert got == pytest.approx(192.0 * 7.0 ** -2.5, rel=1e-10)


def test_fgm_mixed_partial_bound():
    c = FGM(1.0)
    rep = check_c2(c, beta=0.0, m=201)
    # interior lattice stops one step short of the corners
    assert rep.max_ratio == pytest.approx(2.0, abs=0.03)
    assert rep.passed


@pytest.mark.parametrize("c", FAMILIES, ids=repr)
def test_sampling_matches_cdf(c):
    rng = np.random.default_rng(4)
    x = c.sample(20000, rng)
    assert x.shape == (20000, c.d)
    assert np.all((x > 0.0) & (x < 1.0))
    pts = np.random.default_rng(5).uniform(0.1, 0.9, size=(30, c.d))
    emp = np.array([np.mean(np.all(x <= p, axis=1)) for p in pts])
    assert np.max(np.abs(emp - c.cdf(pts))) < 0.02


def test_check_c2_separates_clayton_regimes():
    c = Clayton(2.0)
    good = check_c2(c, beta=0.5, m=101)
    bad = check_c2(c, beta=0.0, m=101)
    assert good.passed and not bad.passed
    # corner blow-up grows with refinement when unweighted
    worse = check_c2(c, beta=0.0, m=201)
    assert worse.max_ratio > 1.5 * bad.max_ratio


def test_parameter_validation():
    with pytest.raises(ValueError):
        Clayton(0.0)
    with pytest.raises(ValueError):
        Gumbel(0.5)
    with pytest.raises(ValueError):
        Frank(0.0)
    with pytest.raises(ValueError):
        GaussianCopula(1.0)
    with pytest.raises(ValueError):
        FGM(1.5)
