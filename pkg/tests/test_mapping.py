import numpy as np
import pytest

from copulalab.copulas import Clayton, Independence
from copulalab.grid import Grid, GridFunction
from copulalab.mapping import (
    PerturbationA,
    PerturbationB,
    PerturbationBAlpha,
    RateParams,
    copula_map,
    derivative_kills_B,
    hadamard_derivative,
    is_valid_cdf,
    parabola_components,
    product_bump,
    stretch_direction,
    verify_quantile_lemma,
    verify_theorem_1,
    verify_theorem_2,
)


def test_map_fixes_copulas():
    for c in (Independence(2), Clayton(2.0), Clayton(2.0, d=3)):
        m = 41 if c.d == 3 else 101
        grid = Grid(c.d, m)
        cg = GridFunction.from_callable(grid, c.cdf)
        assert (copula_map(cg) - cg).sup_norm() < 1e-10


def test_map_extracts_dependence_from_nonuniform_margins():
    # H(u, v) = u^2 v has margins u^2 and v; its copula is u v exactly
    grid = Grid(2, 101)
    H = GridFunction.from_callable(grid, lambda p: p[..., 0] ** 2 * p[..., 1])
    got = copula_map(H)
    want = GridFunction.from_callable(grid, lambda p: p[..., 0] * p[..., 1])
    assert (got - want).sup_norm() < 1e-12


def test_derivative_identity_for_independence():
    # at the product copula: derivative of h(u,v) = u v is
    # h(u,v) - v h(u,1) - u h(1,v) = -u v
    grid = Grid(2, 101)
    c = Independence(2)
    h = GridFunction.from_callable(grid, lambda p: p[..., 0] * p[..., 1])
    got = hadamard_derivative(c, h)
    want = GridFunction.from_callable(grid, lambda p: -p[..., 0] * p[..., 1])
    assert (got - want).sup_norm() < 1e-12


def test_derivative_linear_up_to_rounding():
    grid = Grid(2, 101)
    c = Clayton(2.0)
    rng = np.random.default_rng(20)
    h1 = GridFunction(grid, rng.standard_normal(grid.shape))
    h2 = GridFunction(grid, rng.standard_normal(grid.shape))
    lhs = hadamard_derivative(c, 2.0 * h1 + (-3.0) * h2)
    rhs = 2.0 * hadamard_derivative(c, h1) + (-3.0) * hadamard_derivative(c, h2)
    assert (lhs - rhs).sup_norm() < 1e-13


def test_derivative_sup_bound():
    grid = Grid(2, 101)
    c = Clayton(2.0)
    rng = np.random.default_rng(21)
    for _ in range(5):
        h = GridFunction(grid, rng.standard_normal(grid.shape))
        assert hadamard_derivative(c, h).sup_norm() <= 3.0 * h.sup_norm() + 1e-12


def test_perturbation_a_validation():
    grid = Grid(2, 51)
    with pytest.raises(ValueError):
        PerturbationA(GridFunction.from_callable(grid, lambda p: p[..., 0]))
    bump = product_bump(grid, 0.1)
    assert bump.bound <= 0.1 + 1e-12


def test_perturbation_b_envelope_validation():
    with pytest.raises(ValueError):
        PerturbationB(
            parabola_components(2, 2.0), envelope=lambda u: u * (1.0 - u)
        )
    ok = PerturbationB(
        parabola_components(2, 1.0), envelope=lambda u: u * (1.0 - u)
    )
    assert ok.d == 2


def test_derivative_kills_margin_perturbations():
    for c in (Independence(2), Clayton(2.0)):
        hb = PerturbationB(parabola_components(2, 1.0))
        assert derivative_kills_B(c, hb, m=101) <= 1e-8


def test_derivative_does_not_kill_nonvanishing_components():
    # components g(u) = u do not vanish at 1; sup is 2 for the product copula
    c = Independence(2)
    hb = PerturbationB([lambda u: np.asarray(u, float)] * 2)
    assert derivative_kills_B(c, hb, m=101) == pytest.approx(2.0, abs=1e-9)


def test_rate_params_regimes():
    p = RateParams(beta=0.5, alpha=0.5, gamma=0.0)
    assert p.vartheta == 1.0
    # generic regime with s = 2 finite moments
    p2 = RateParams(beta=0.5, alpha=0.5, gamma=0.1, s=2)
    assert p2.vartheta == pytest.approx(0.8)
    with pytest.raises(ValueError):
        RateParams(beta=0.5, alpha=0.5, gamma=-0.1)
    t = 0.04
    assert p.t_tilde(t) == pytest.approx(np.sqrt(t) / np.log(1.0 / t))


def test_is_valid_cdf_rejects_nonmonotone():
    grid = Grid(2, 21)
    good = GridFunction.from_callable(grid, lambda p: p[..., 0] * p[..., 1])
    assert is_valid_cdf(good)
    bad = GridFunction.from_callable(
        grid, lambda p: p[..., 0] * p[..., 1] + 0.5 * np.sin(
            2 * np.pi * p[..., 0]
        )
    )
    assert not is_valid_cdf(bad)


T_SEQ = (0.2, 0.1, 0.05, 0.025)


def test_quotient_full_cube_independence():
    c = Independence(2)
    grid = Grid(2, 101)
    table = verify_theorem_1(
        c, product_bump(grid, 0.1), PerturbationB(parabola_components(2, 1.0)),
        T_SEQ, m=101,
    )
    assert table.passed
    errs = [r.sup_error for r in table.rows]
    assert errs[-1] < errs[0]


def test_quotient_full_cube_zero_direction_passes():
    c = Clayton(2.0)
    grid = Grid(2, 101)
    zero = PerturbationA(GridFunction(grid, np.zeros(grid.shape)))
    table = verify_theorem_1(c, zero, None, T_SEQ, m=101)
    assert table.passed
    assert all(r.sup_error <= 1e-10 for r in table.rows)


def test_quotient_shrinking_region_clayton():
    c = Clayton(2.0)
    grid = Grid(2, 101)
    params = RateParams(beta=0.5, alpha=0.5, gamma=0.0)
    hb = PerturbationBAlpha(parabola_components(2, 1.0), 0.5, 1.0, 1.0)
    table = verify_theorem_2(
        c, stretch_direction(c, grid), hb, params, T_SEQ, m=101
    )
    assert table.passed


def test_quantile_lemma_bundled():
    params = RateParams(beta=0.5, alpha=0.5, gamma=0.0)
    h = lambda u: 0.25 * np.sin(np.pi * np.asarray(u, float))
    hb = lambda u: 0.5 * np.asarray(u, float) * (1.0 - np.asarray(u, float))
    rep = verify_quantile_lemma(h, hb, params, T_SEQ)
    assert rep.passed
    assert all(r.sandwich_holds for r in rep.rows)


def test_quantile_lemma_zero_perturbation():
    params = RateParams(beta=0.5, alpha=0.5, gamma=0.0)
    zero = lambda u: np.zeros_like(np.asarray(u, float))
    rep = verify_quantile_lemma(zero, zero, params, T_SEQ)
    assert rep.passed
    assert all(r.sup_xi_minus_u < 1e-9 for r in rep.rows)


def test_csv_lines_schema():
    c = Independence(2)
    grid = Grid(2, 51)
    table = verify_theorem_1(
        c, product_bump(grid, 0.1), None, (0.2, 0.1), m=51
    )
    lines = list(table.to_csv_lines())
    assert lines[0] == "# schema=1"
    assert lines[1].startswith("t,")
    assert len(lines) == 4
