"""Counterfactual GP mixtures for irregularly sampled action/outcome traces.

The package splits into data structures (:mod:`cfgp.traces`), covariance and
mean building blocks (:mod:`cfgp.kernels`), mixture-of-GP inference
(:mod:`cfgp.gp`), likelihood-based fitting (:mod:`cfgp.learning`), a
marked-point-process simulator (:mod:`cfgp.simulator`), evaluation metrics
(:mod:`cfgp.evaluation`), JSON model persistence (:mod:`cfgp.model_io`), and
a CLI plus HTTP service on top.
"""

from .errors import (
    CfgpError,
    ConfigurationError,
    DegenerateDataError,
    DomainError,
    InitializationError,
    NumericalError,
    OptimizationError,
    ParseError,
    TraceValidationError,
)
from .evaluation import (
    BootstrapCI,
    RiskReport,
    StabilityReport,
    auc,
    factual_absolute_errors,
    kendall_tau,
    load_test_bundle,
    mae_by_horizon,
    pivotal_bootstrap,
    render_stability_csv,
    render_stability_text,
    risk_scores,
    stability_report,
)
from .gp import (
    EventActionModel,
    GPComponent,
    MixtureModel,
    PosteriorPrediction,
    class_posterior,
    component_log_likelihood,
    component_mean_vector,
    mixture_log_likelihood,
    predict,
    trailing_mean_feature,
)
from .kernels import (
    IOU,
    Additive,
    BSplineMean,
    CholFactor,
    Matern32,
    QuadPoly,
    ResponseParams,
    Saturating,
    SumKernel,
    WhiteNoise,
    Zero,
    bspline_design,
    bspline_mean,
    cholesky_with_jitter,
    cumulative_response,
    kernel_cross,
    kernel_eval,
    kernel_matrix,
    response,
    split_noise,
    uniform_clamped_knots,
)
from .learning import (
    AdjustedObjective,
    FitConfig,
    FitResult,
    assemble_adjusted_objective,
    fit_baseline,
    fit_cgp,
    fit_event_action_model,
    init_parameters,
)
from .model_io import (
    FORMAT_VERSION,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
)
from .optim import MinimizeResult, minimize, numerical_gradient
from .simulator import (
    SimConfig,
    SimTrace,
    TestBundle,
    TreatmentPolicy,
    icu_config,
    make_test_set,
    policy_a,
    policy_b,
    policy_by_name,
    policy_c,
    policy_never,
    read_truth,
    sample_gp_path,
    sample_measurement_times,
    simulate_regime,
    simulate_trace,
    true_mixture_model,
    write_truth,
)
from .traces import (
    ActionPlan,
    Dataset,
    Event,
    History,
    Trace,
    parse_traces,
    truncate_history,
    write_traces,
)

__version__ = "0.1.0"
