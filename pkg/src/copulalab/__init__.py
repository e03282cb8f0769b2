"""Numerical laboratory for empirical copula processes built from residuals."""

from .copulas import (
    FGM,
    C2Report,
    Clayton,
    CopulaModel,
    Frank,
    GaussianCopula,
    Gumbel,
    Independence,
    check_c2,
)
from .empirical import (
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
from .grid import Grid, GridFunction, Region, shrink_region
from .mapping import (
    ConvergenceTable,
    PerturbationA,
    PerturbationB,
    PerturbationBAlpha,
    QuantileLemmaReport,
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
from .mc import (
    ExperimentConfig,
    ExperimentReport,
    ProcessPair,
    build_processes,
    check_representation,
    rate_slope,
    replication_rng,
    run_equivalence,
)
from .models import (
    FitError,
    FunctionalLinearModel,
    LinearModelIID,
    LinearModelMixing,
    LSSModel,
    MarginalModel,
    ZProcess,
    ZRateReport,
    check_z_assumption,
    fit,
    pseudo_observations,
    simulate,
    skew_normal_cdf,
    skew_normal_pdf,
    skew_normal_quantile,
    z_process,
)

__version__ = "0.1.0"
