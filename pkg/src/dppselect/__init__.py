"""Diverse Bayesian feature selection with determinantal point processes."""

from .baselines import BaselineResult, forward_select, meanfield_select, omp
from .dpp import (
    LEnsemble,
    MarginalKernel,
    SimilarityFactor,
    Subset,
    build_lensemble,
    calibrate_theta0,
    elementary_symmetric,
    exact_map_enumerate,
    expected_cardinality,
    greedy_map,
    inclusion_probabilities,
    log_normalizer,
    marginal_kernel,
    sample,
    sample_k,
    subset_log_prob,
)
from .errors import DataError, NumericalError
from .learner import (
    LearnerConfig,
    LearnerReport,
    LearnerState,
    init_state,
    run,
    select,
    solve_linear,
    step,
)
from .metrics import metrics_diversity
from .regression import (
    BernoulliPrior,
    DppPrior,
    RestrictedPosterior,
    SpikeSlabModel,
    bernoulli_log_prior,
    credible_interval,
    dpp_log_prior,
    joint_log,
    mc_evidence_oracle,
    posterior_beta,
    predict,
    restricted_marginal_loglik,
)
from .report import SelectionReport
from .similarity import SimilaritySpec, build_similarity
from .spatial import SpatialConfig

__version__ = "0.1.0"

__all__ = [
    "BaselineResult",
    "BernoulliPrior",
    "DataError",
    "DppPrior",
    "LEnsemble",
    "LearnerConfig",
    "LearnerReport",
    "LearnerState",
    "MarginalKernel",
    "NumericalError",
    "RestrictedPosterior",
    "SelectionReport",
    "SimilarityFactor",
    "SimilaritySpec",
    "SpatialConfig",
    "SpikeSlabModel",
    "Subset",
    "bernoulli_log_prior",
    "build_lensemble",
    "build_similarity",
    "calibrate_theta0",
    "credible_interval",
    "dpp_log_prior",
    "elementary_symmetric",
    "exact_map_enumerate",
    "expected_cardinality",
    "forward_select",
    "greedy_map",
    "inclusion_probabilities",
    "init_state",
    "joint_log",
    "log_normalizer",
    "marginal_kernel",
    "mc_evidence_oracle",
    "meanfield_select",
    "metrics_diversity",
    "omp",
    "posterior_beta",
    "predict",
    "restricted_marginal_loglik",
    "run",
    "sample",
    "sample_k",
    "select",
    "solve_linear",
    "step",
    "subset_log_prob",
]
