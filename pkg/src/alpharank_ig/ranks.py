"""Empirical belief over alpha-ranks induced by a payoff belief."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .belief import GaussianBelief, sample_matrices, sample_pair_differences
from .core import DEFAULT_EPSILON, SolverError, alpha_rank_batch, codes_from_differences, ranks_for_codes

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class RankSampleSet:
    """Alpha-rank samples, one simplex point per row."""

    samples: np.ndarray
    epsilon: float = DEFAULT_EPSILON
    precision: int = 3

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if samples.shape[0] == 0:
            raise ValueError("rank sample set must be nonempty")
        if np.any(samples < -SIMPLEX_TOL) or np.any(np.abs(samples.sum(axis=1) - 1.0) > SIMPLEX_TOL):
            raise ValueError("every sample must be a point on the simplex")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.shape[0]


def sample_ranks(belief: GaussianBelief, n: int, epsilon: float = DEFAULT_EPSILON,
                 rng: Optional[np.random.Generator] = None, precision: int = 3) -> RankSampleSet:
    """Map ``n`` independent payoff draws through the alpha-rank function.

    Square beliefs draw only the pair differences that the infinite-alpha
    chain depends on.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    rng = np.random.default_rng() if rng is None else rng
    if len(belief.shape) == 2:
        codes = codes_from_differences(sample_pair_differences(belief, n, rng))
        return RankSampleSet(ranks_for_codes(codes, belief.shape[0], epsilon), epsilon, precision)
    try:
        ranks = alpha_rank_batch(sample_matrices(belief, n, rng), epsilon)
    except SolverError:
        ranks = alpha_rank_batch(sample_matrices(belief, n, rng), epsilon)
    return RankSampleSet(ranks, epsilon, precision)


def rounded_keys(samples: np.ndarray, decimal_places: int) -> np.ndarray:
    """Integer grid coordinates of each sample after rounding (exact atom identity)."""
    return np.rint(np.asarray(samples) * 10 ** decimal_places).astype(np.int64)


def atom_counts(samples: np.ndarray, decimal_places: int) -> tuple[np.ndarray, np.ndarray]:
    """Distinct rounded atoms (lexicographically sorted, as integer keys) and their counts."""
    keys, counts = np.unique(rounded_keys(samples, decimal_places), axis=0, return_counts=True)
    return keys, counts


def aggregate(rank_set: RankSampleSet, decimal_places: Optional[int] = None) -> list[tuple[tuple, int]]:
    """Histogram of rounded rank vectors as ``[(atom, count), ...]``."""
    dp = rank_set.precision if decimal_places is None else decimal_places
    if dp < 1:
        raise ValueError("decimal_places must be positive")
    keys, counts = atom_counts(rank_set.samples, dp)
    scale = 10.0 ** dp
    return [(tuple(float(v) for v in k / scale), int(c)) for k, c in zip(keys, counts)]


def mode(rank_set: RankSampleSet, decimal_places: Optional[int] = None) -> np.ndarray:
    """Most frequent rounded atom; ties go to the lexicographically smallest."""
    dp = rank_set.precision if decimal_places is None else decimal_places
    keys, counts = atom_counts(rank_set.samples, dp)
    return keys[int(np.argmax(counts))] / 10.0 ** dp


def prob_of(rank_set: RankSampleSet, target, tol: float = 0.01,
            decimal_places: Optional[int] = None) -> float:
    """Fraction of samples within L1 distance ``tol`` (strict) of ``target``.

    With ``decimal_places`` set, samples are rounded first.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    samples = rank_set.samples
    if decimal_places is not None:
        samples = rounded_keys(samples, decimal_places) / 10.0 ** decimal_places
    dist = np.abs(samples - np.asarray(target, dtype=float)).sum(axis=1)
    return float(np.mean(dist < tol))
