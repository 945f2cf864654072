"""Rank-breaking then composite marginal likelihood (RBCML) for random utility models."""

from .adaptive import AdaptiveConfig, adaptive_rbcml, heuristic_w_pl
from .breaking import (
    BreakingGraph,
    expected_kappa,
    is_uniform,
    is_weighted_union_of_position_k,
    kappa_stats,
    position_k_breaking,
    uniform_breaking,
    weighted_union,
)
from .consistency import (
    ConsistencyVerdict,
    check_consistency_pl,
    check_consistency_symmetric_rum,
    empirical_consistency_trend,
    expected_gradient,
)
from .experiments import ExperimentConfig, cramer_rao_trace_pl, n_mse, pl_full_mle, run_experiment
from .model import (
    CustomSymmetric,
    Gaussian,
    PlackettLuce,
    Profile,
    as_theta,
    convolve_logcdf,
    convolve_logpdf,
    log_concavity_probe,
    pairwise_prob,
    pairwise_prob_grad,
    ranking_prob,
)
from .objective import FitResult, cll, cll_grad, cll_hessian, maximize_cll, uniform_weights, wg_product
from .sampling import sample_ground_truth, sample_profile, sample_ranking

__version__ = "0.1.0"
