"""Sample-efficient alpha-rank estimation with information-gain and transport-based query selection."""

from .core import (PayoffTensor, SolverError, alpha_rank, alpha_rank_batch, build_transition_finite_alpha,
                   build_transition_single_pop, stationary_distribution)
from .belief import GaussianBelief, KernelSpec, condition, condition_repeated, prior
from .ranks import RankSampleSet, aggregate, mode, prob_of, sample_ranks
from .estimators import entropy_binning, entropy_nsb, rank_count_upper_bound, wasserstein_tv
from .games import GameEnv, gaussian_game, good_bad_game, observe, separability
from .theory import TheoryParams, binary_entropy, entropy_upper_bound, regret_bound, regret_exponent_g

__version__ = "0.1.0"

__all__ = [
    "PayoffTensor", "SolverError", "alpha_rank", "alpha_rank_batch", "build_transition_finite_alpha",
    "build_transition_single_pop", "stationary_distribution", "GaussianBelief", "KernelSpec", "condition",
    "condition_repeated", "prior", "RankSampleSet", "aggregate", "mode", "prob_of", "sample_ranks",
    "entropy_binning", "entropy_nsb", "rank_count_upper_bound", "wasserstein_tv", "GameEnv", "gaussian_game",
    "good_bad_game", "observe", "separability", "TheoryParams", "binary_entropy", "entropy_upper_bound",
    "regret_bound", "regret_exponent_g",
]
