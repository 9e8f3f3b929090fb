"""Local approximate Gaussian-process emulation.

Dense separable-Gaussian GP core, greedy local designs driven by variance
reduction, set-wise (path) designs with analytic search gradients, block
Latin hypercube subsampling for global lengthscales, and the experiment
pipeline behind the ``localgp`` command line tool.
"""

from .gp import (
    DEFAULT_NUGGET,
    GPModel,
    Hyperparams,
    NumericalError,
    Prediction,
    build_gp,
    chol_psd,
    correlation,
    corr_matrix,
    cross_corr,
    extend_gp,
    log_marginal_likelihood,
    loglik_and_gradient,
    mle_lengthscales,
    predict_joint,
    predict_point,
)
from .design import (
    CandidateRejected,
    LocalDesign,
    SearchConfig,
    alc_reduction,
    greedy_alc_design,
    local_mle_and_redesign,
    nn_design,
    predict_surface,
)
from .path import (
    PathSearchConfig,
    greedy_joint_design,
    init_stack,
    joint_alc_gradient,
    joint_alc_reduction,
    optimize_candidate,
    sample_paths,
    snap_to_candidate,
)
from .subsample import (
    GlobalScale,
    SubsampleSpec,
    blhs_subsample,
    bootstrap_lengthscales,
    choose_m,
    prescale,
    random_subsample,
)
from .metrics import (
    PARTICLE_MASSES_AMU,
    SPECIES_ORDER,
    SpeciesMixture,
    mahalanobis,
    mixture_drag,
    proper_score,
    rmse,
    rmspe,
)
from .pipeline import (
    ALL_METHODS,
    FitOutcome,
    MethodSpec,
    cv_experiment,
    ensemble_species,
    estimate_global_scale,
    fit_predict,
    format_method,
    parse_method,
)
from . import benchmarks

__version__ = "0.1.0"
