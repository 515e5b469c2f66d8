"""imclab: interacting tempering MCMC with exact finite-state asymptotics.

A small laboratory for adaptive/interacting Monte Carlo: run the interacting
tempering chain, compute every quantity entering its central limit behaviour
exactly on finite state spaces, and verify the distributional claims with
replicated experiments.
"""

from .asymptotics import (
    LimitAnalysis,
    PerturbationBoundReport,
    PoissonSolution,
    VarianceReport,
    analyze_limit,
    check_perturbation_bounds,
    fluctuation_function,
    fluctuation_variance,
    linearization_residual,
    poisson_operator,
    poisson_solve,
    step_variance,
    total_asymptotic_variance,
    within_chain_variance,
)
from .errors import (
    ConfigurationError,
    InconsistencyError,
    NonGeometricDecayError,
    ReducibleChainError,
)
from .experiments import (
    CLTReport,
    DiagnosticSeries,
    assumption_diagnostics,
    batch_means_variance,
    clt_experiment,
    ks_distance,
    lln_experiment,
    martingale_clt_experiment,
    pi_fluctuation_experiment,
    replication_sums,
    report_from_sums,
    stationary_mean_path,
    step_variance_path,
    vstat_moment_check,
)
from .kernels import (
    DriftCertificate,
    ErgodicityConstants,
    FiniteFunction,
    FiniteKernel,
    FiniteMeasure,
    apply_kernel,
    fit_drift,
    fit_ergodicity_constants,
    iterate_kernel,
    kernel_from_json,
    kernel_to_json,
    measure_from_json,
    measure_to_json,
    stationary_distribution,
    v_distance_kernels,
    v_norm_function,
    v_norm_measure,
    v_operator_norm,
)
from .reference import reference_config, reference_f, reference_target
from .streams import chain_stream, derive_stream
from .suite import ExperimentSpec, ExperimentSuite, load_suite, run_suite, save_suite
from .targets import (
    ContinuousTarget,
    FiniteTarget,
    auxiliary_target_measure,
    continuous_target,
    drift_function,
    metropolis_kernel_finite,
    srwm_step,
    target_from_json,
    target_to_json,
    tempered_measure,
    uniform_proposal,
)
from .tempering import (
    ChainState,
    EmpiricalMeasure,
    TemperingConfig,
    Trajectory,
    acceptance_ratio,
    interaction_kernel,
    run_chain,
    step_chain,
    uniform_draw,
    update_empirical,
)

__version__ = "0.1.0"
