import numpy as np
import pytest

from copulalab.copulas import Clayton
from copulalab.grid import Grid, GridFunction, shrink_region
from copulalab.mc import (
    STAT_FULL,
    STAT_REPR,
    STAT_RESTRICTED,
    ExperimentConfig,
    build_processes,
    check_representation,
    rate_slope,
    replication_rng,
    run_equivalence,
)
from copulalab.models import LinearModelIID, simulate


def _model():
    return LinearModelIID(Clayton(2.0), k=2)


def test_config_validation():
    m = _model()
    with pytest.raises(ValueError):
        ExperimentConfig(m, (200, 200), 5, seed=0)
    with pytest.raises(ValueError):
        ExperimentConfig(m, (200, 400), 1, seed=0)
    with pytest.raises(ValueError):
        ExperimentConfig(m, (200, 400), 5, seed=0, checks=("bogus",))


def test_replication_rng_streams_are_distinct_and_stable():
    a = replication_rng(7, 200, 0).standard_normal(4)
    b = replication_rng(7, 200, 1).standard_normal(4)
    c = replication_rng(7, 200, 0).standard_normal(4)
    assert not np.allclose(a, b)
    assert np.array_equal(a, c)


def test_rate_slope():
    pts = [(100, 1.0), (400, 0.5), (1600, 0.25)]
    assert rate_slope(pts) == pytest.approx(-0.5)
    assert np.isnan(rate_slope(pts[:2]))
    assert np.isnan(rate_slope([(100, 1.0), (400, 0.0), (1600, 0.25)]))


def test_forced_oracle_is_degenerate_zero():
    cfg = ExperimentConfig(
        _model(), (200, 800), 2, seed=3,
        checks=(STAT_FULL, STAT_REPR),
        force_true_fit=True, exact_marginals=True,
    )
    rep = run_equivalence(cfg)
    for agg in rep.aggregates:
        assert agg.medians[STAT_FULL] == 0.0
        assert agg.medians[STAT_REPR] < 1e-9
    assert rep.passed == {STAT_FULL: True, STAT_REPR: True}


def test_small_run_decreases():
    cfg = ExperimentConfig(
        _model(), (100, 400, 1600), 15, seed=11, checks=(STAT_FULL,)
    )
    rep = run_equivalence(cfg)
    meds = [a.medians[STAT_FULL] for a in rep.aggregates]
    assert meds[2] < meds[1] < meds[0]
    assert rep.passed[STAT_FULL]
    assert rep.failure_rate == 0.0


def test_restricted_statistic_bounded_by_full():
    cfg = ExperimentConfig(
        _model(), (100, 400), 4, seed=12,
        checks=(STAT_FULL, STAT_RESTRICTED), vartheta=0.5,
    )
    rep = run_equivalence(cfg)
    for rec in rep.records:
        assert rec.stats[STAT_RESTRICTED] <= rec.stats[STAT_FULL] + 1e-12


def test_representation_error_smaller_than_processes():
    model = _model()
    rng = replication_rng(5, 800, 0)
    sim = simulate(model, 800, rng)
    fitres = model.fit(sim.covariates, sim.responses)
    pseudo = model.residuals(fitres, sim.covariates, sim.responses)
    grid = Grid(2, 51)
    c_grid = GridFunction.from_callable(grid, model.copula.cdf)
    fresh = model.sample_covariates(2000, rng)
    pair = build_processes(model, fitres, sim.errors, fresh, 800, grid, c_grid)
    region = shrink_region(1.0, 800, 1.0)
    err = check_representation(
        model, fitres, pseudo, pair, 800, grid, c_grid, region
    )
    # the first-order expansion must explain most of the raw process
    raw = np.sqrt(800) * np.max(np.abs(
        (pair.a * (1 / np.sqrt(800))).values
    ))
    assert err < 2.0
    assert err >= 0.0
    assert raw > 0.0


def test_csv_lines_deterministic():
    cfg = ExperimentConfig(_model(), (100, 400), 3, seed=9)
    lines1 = list(run_equivalence(cfg).to_csv_lines())
    lines2 = list(run_equivalence(cfg).to_csv_lines())
    assert lines1 == lines2
    assert lines1[0] == "# schema=1"


def test_failure_cap(monkeypatch):
    model = _model()
    from copulalab import mc
    from copulalab.models import FitError

    calls = {"i": 0}
    orig = LinearModelIID.fit

    def flaky(self, covariates, responses):
        calls["i"] += 1
        if calls["i"] % 2 == 0:
            raise FitError("synthetic failure")
        return orig(self, covariates, responses)

    monkeypatch.setattr(LinearModelIID, "fit", flaky)
    cfg = ExperimentConfig(model, (100, 400), 4, seed=13)
    rep = run_equivalence(cfg)
    assert rep.failure_rate > 0.02
    assert rep.passed[STAT_FULL] is False
