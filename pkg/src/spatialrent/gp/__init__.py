"""OLS baseline, dense kriging reference and the conjugate NNGP."""
from .covariance import CovarianceSpec
from .dense import (dense_conjugate_fit, dense_conjugate_predict, exact_gp_loglik_and_predict)
from .nngp import (ConjugateNNGP, NIGPosterior, NIGPrior, PredictiveT, VecchiaFactors,
                   build_neighbor_sets, conjugate_nngp_fit, conjugate_nngp_predict,
                   vecchia_factors, xy_ordering)
from .ols import OLSRegressor, OLSResult, ols_fit
from .tuning import grid_search_alpha_phi

__all__ = [
    "CovarianceSpec", "ConjugateNNGP", "NIGPosterior", "NIGPrior", "OLSRegressor", "OLSResult",
    "PredictiveT", "VecchiaFactors", "build_neighbor_sets", "conjugate_nngp_fit",
    "conjugate_nngp_predict", "dense_conjugate_fit", "dense_conjugate_predict",
    "exact_gp_loglik_and_predict", "grid_search_alpha_phi", "ols_fit", "vecchia_factors",
    "xy_ordering",
]
