"""Bayesian inference for the planted multi-section stochastic block model.

Exact and sampled posteriors over constrained labelling spaces, the
closed-form contraction and testing bounds, and a Monte Carlo harness
that checks them at small ``n``.
"""

from .bounds import (BoundReport, hellinger_affinity, model_selection_bound, phase_example_bounds,
                     point_bound, posterior_set_bound, ring_bound, test_power_bound)
from .core import EdgeProbs, Graph, Labelling, ModelFamily, log_likelihood, log_likelihood_ratio, sample_graph
from .errors import AssumptionViolation, EnumerationInfeasible, OverlapError, SBMError, UndefinedOdds
from .harness import ExperimentConfig, MonteCarloReport, run_experiment
from .inference import (CredibleSet, ConfidenceStatement, confidence_from_credible, enlarge, hpd_credible_set,
                        odds_test)
from .metrics import enumerate_space, m_distance, r_distance
from .posterior import PosteriorTable, Prior, build_prior, exact_posterior, mcmc_posterior, posterior_odds

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolation", "BoundReport", "ConfidenceStatement", "CredibleSet", "EdgeProbs",
    "EnumerationInfeasible", "ExperimentConfig", "Graph", "Labelling", "ModelFamily", "MonteCarloReport",
    "OverlapError", "PosteriorTable", "Prior", "SBMError", "UndefinedOdds", "build_prior",
    "confidence_from_credible", "enlarge", "enumerate_space", "exact_posterior", "hellinger_affinity",
    "hpd_credible_set", "log_likelihood", "log_likelihood_ratio", "m_distance", "mcmc_posterior",
    "model_selection_bound", "odds_test", "phase_example_bounds", "point_bound", "posterior_odds",
    "posterior_set_bound", "r_distance", "ring_bound", "run_experiment", "sample_graph", "test_power_bound",
]
