"""Closed-form quantities from the regret analysis: entropy bounds and g(T)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class TheoryParams:
    """Inputs of the payoff-information-gain regret bound.

    ``prior_cov`` defaults to ``sigma02 * I`` over ``n_entries`` entries.
    """

    delta_sep: float = 0.1
    sigma_a2: float = 0.5
    sigma_02: float = 1.0
    n_entries: int = 16
    m_star_norm2: float = 8.0
    prior_cov: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if self.delta_sep <= 0 or self.sigma_a2 <= 0 or self.sigma_02 <= 0:
            raise ValueError("separation and variances must be positive")
        if self.n_entries < 1:
            raise ValueError("n_entries must be positive")
        if self.m_star_norm2 < 0:
            raise ValueError("m_star_norm2 must be nonnegative")
        if self.prior_cov is not None:
            cov = np.asarray(self.prior_cov, dtype=float)
            if cov.shape != (self.n_entries, self.n_entries):
                raise ValueError("prior_cov must be n_entries x n_entries")
            if np.min(np.linalg.eigvalsh(0.5 * (cov + cov.T))) < -1e-8:
                raise ValueError("prior_cov must be positive semidefinite")

    def kernel(self) -> np.ndarray:
        if self.prior_cov is None:
            return self.sigma_02 * np.eye(self.n_entries)
        return np.asarray(self.prior_cov, dtype=float)


def binary_entropy(p: float) -> float:
    """``-(p log p + (1-p) log(1-p))`` in nats, 0 at the endpoints."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if p in (0.0, 1.0):
        return 0.0
    return -(p * math.log(p) + (1.0 - p) * math.log1p(-p))


def entropy_upper_bound(p_i: float, n: int) -> float:
    """Bound on the entropy of any n-outcome distribution giving one outcome mass ``p_i``."""
    if n < 2:
        raise ValueError("n must be >= 2")
    return binary_entropy(p_i) + (1.0 - p_i) * math.log(n - 1)


def information_capacity(params: TheoryParams) -> float:
    """``0.5 * log det(I + K / sigma_a2)``, the bound on the maximum information gain."""
    sign, logdet = np.linalg.slogdet(np.eye(params.n_entries) + params.kernel() / params.sigma_a2)
    if sign <= 0:
        raise ValueError("degenerate prior: I + K / sigma_a2 is not positive definite")
    return 0.5 * logdet


def _cube_root_argument(params: TheoryParams, t: float) -> float:
    half_gap = (params.delta_sep / 2.0) ** 2
    shrink = (params.sigma_a2 + (t / params.n_entries - 1.0) * params.sigma_02) / (params.sigma_a2 * params.sigma_02)
    rkhs = 2.0 * params.sigma_02 * params.m_star_norm2
    capacity = information_capacity(params)
    if capacity <= 0:
        raise ValueError("nonpositive log-det term; the prior carries no information")
    return (half_gap * shrink - rkhs) / (300.0 * capacity)


def regret_exponent_g(params: TheoryParams, t: float) -> float:
    """The explicit exponent g(T); positive (vacuous) below :func:`vacuous_threshold`."""
    if t < 1:
        raise ValueError("T must be >= 1")
    return -float(np.cbrt(_cube_root_argument(params, t)))


def vacuous_threshold(params: TheoryParams) -> float:
    """Smallest T at which the cube-root argument becomes positive."""
    half_gap = (params.delta_sep / 2.0) ** 2
    rkhs = 2.0 * params.sigma_02 * params.m_star_norm2
    needed = rkhs * params.sigma_a2 * params.sigma_02 / half_gap
    return params.n_entries * (1.0 + (needed - params.sigma_a2) / params.sigma_02)


def regret_bound(params: TheoryParams, t: float) -> float:
    """``T * exp(g(T))`` capped at 1 (a probability bound is trivially at most 1)."""
    arg = _cube_root_argument(params, t)
    if arg <= 0:
        return 1.0
    log_value = math.log(t) - float(np.cbrt(arg))
    return 1.0 if log_value >= 0 else math.exp(log_value)


def regret_bound_curve(params: TheoryParams, horizons) -> list[tuple[float, float]]:
    return [(float(t), regret_bound(params, t)) for t in horizons]
