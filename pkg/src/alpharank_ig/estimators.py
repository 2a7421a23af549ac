"""Entropy and optimal-transport estimates over rank sample sets."""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate, special
from scipy.spatial.distance import cdist

from .ranks import RankSampleSet, atom_counts

BINNING_DECIMALS = 2
NSB_REL_TOL = 1e-6

# POT probes every installed array backend on import; only numpy is used here.
for _backend in ("TENSORFLOW", "PYTORCH", "JAX", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")


class EstimationError(RuntimeError):
    """NSB quadrature failed.  ``fallback`` carries the plug-in estimate."""

    def __init__(self, message: str, fallback: float):
        super().__init__(message)
        self.fallback = fallback


@dataclass(frozen=True)
class EntropyEstimate:
    value: float
    estimator: str
    atom_bound_used: Optional[int] = None


def plugin_entropy(counts) -> float:
    """Maximum-likelihood entropy ``-sum p log p`` (nats) of a histogram."""
    c = np.asarray(counts, dtype=float)
    c = c[c > 0]
    p = c / c.sum()
    return float(max(-np.sum(p * np.log(p)), 0.0))


def entropy_binning(rank_set: RankSampleSet, decimal_places: int = BINNING_DECIMALS) -> EntropyEstimate:
    """Histogram entropy after rounding every coordinate to ``decimal_places``."""
    _, counts = atom_counts(rank_set.samples, decimal_places)
    return EntropyEstimate(plugin_entropy(counts), "binning")


# --------------------------------------------------------------------------
# NSB
# --------------------------------------------------------------------------


_STIRLING_FROM = 1e6
_ASYMPTOTIC_DXI_FROM = 1e3


def _log_rising(x: np.ndarray, n) -> np.ndarray:
    """``log Gamma(x + n) - log Gamma(x)`` without cancellation at large ``x``."""
    x, n = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(n, dtype=float))
    out = np.empty(x.shape)
    small = x < _STIRLING_FROM
    out[small] = special.gammaln(x[small] + n[small]) - special.gammaln(x[small])
    xs, ns = x[~small], n[~small]
    out[~small] = ((xs - 0.5) * np.log1p(ns / xs) + ns * np.log(xs + ns) - ns
                   + 1.0 / (12.0 * (xs + ns)) - 1.0 / (12.0 * xs))
    return out


def _dxi_dbeta(beta: np.ndarray, k: float) -> np.ndarray:
    """Derivative of the prior expected entropy ``psi(k b + 1) - psi(b + 1)``."""
    out = np.empty(beta.shape)
    big = beta > _ASYMPTOTIC_DXI_FROM
    b = beta[~big]
    out[~big] = k * special.polygamma(1, k * b + 1.0) - special.polygamma(1, b + 1.0)
    b = beta[big]
    out[big] = (1.0 - 1.0 / k) / (2.0 * b**2) - (1.0 - 1.0 / k**2) / (6.0 * b**3)
    return out


def _nsb_log_weight(u: np.ndarray, counts: np.ndarray, k: float) -> np.ndarray:
    """Log posterior density of ``log(beta)`` under the NSB prior (unnormalised)."""
    beta = np.exp(np.asarray(u, dtype=float))
    n = counts.sum()
    dxi = _dxi_dbeta(beta, k)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_dxi = np.where(dxi > 0, np.log(np.where(dxi > 0, dxi, 1.0)), -np.inf)
    lik = -_log_rising(k * beta, n)
    lik = lik + np.sum(_log_rising(beta[:, None], counts[None, :]), axis=1)
    return log_dxi + lik + u


def _nsb_mean_entropy(beta: float, counts: np.ndarray, k: float) -> float:
    """Posterior mean entropy given the Dirichlet concentration ``beta``."""
    n = counts.sum()
    total = n + k * beta
    observed = np.sum((counts + beta) * special.digamma(counts + beta + 1.0))
    unseen = (k - counts.size) * beta * special.digamma(beta + 1.0)
    return float(special.digamma(total + 1.0) - (observed + unseen) / total)


def nsb_from_counts(counts, atom_bound: float) -> float:
    """NSB entropy estimate (nats) from observed atom counts and alphabet size."""
    counts = np.asarray(counts, dtype=float)
    counts = counts[counts > 0]
    k = float(atom_bound)
    if counts.size == 0:
        raise ValueError("need at least one observation")
    if counts.size > k:
        raise ValueError(f"atom_bound {atom_bound} is below the {counts.size} observed atoms")
    if k <= 1:
        return 0.0

    grid = np.linspace(-60.0, 30.0, 1801)
    logw = _nsb_log_weight(grid, counts, k)
    top = int(np.nanargmax(logw))
    peak = logw[top]
    keep = np.nonzero(logw > peak - 40.0)[0]
    lo = grid[max(keep[0] - 1, 0)]
    hi = grid[min(keep[-1] + 1, grid.size - 1)]
    u_peak = grid[top]

    def weight(u):
        return float(np.exp(_nsb_log_weight(np.array([u]), counts, k)[0] - peak))

    def weighted_entropy(u):
        return weight(u) * _nsb_mean_entropy(float(np.exp(u)), counts, k)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            kwargs = dict(epsrel=NSB_REL_TOL, epsabs=0.0, limit=200)
            if lo < u_peak < hi:
                kwargs["points"] = [u_peak]
            norm, _ = integrate.quad(weight, lo, hi, **kwargs)
            num, _ = integrate.quad(weighted_entropy, lo, hi, **kwargs)
        except integrate.IntegrationWarning as exc:
            raise EstimationError(f"NSB quadrature did not converge: {exc}", plugin_entropy(counts)) from exc
    if not norm > 0:
        raise EstimationError("NSB posterior normaliser vanished", plugin_entropy(counts))
    return float(np.clip(num / norm, 0.0, np.log(k)))


def entropy_nsb(rank_set: RankSampleSet, atom_bound: int,
                decimal_places: int = BINNING_DECIMALS) -> EntropyEstimate:
    """Nemenman-Shafee-Bialek estimate over the rounded rank atoms."""
    _, counts = atom_counts(rank_set.samples, decimal_places)
    return EntropyEstimate(nsb_from_counts(counts, atom_bound), "nsb", int(atom_bound))


def rank_count_upper_bound(num_populations: int, strategies: int) -> int:
    """``2 ** (S**k * k * (S - 1))``: distinct transition matrices in the infinite-alpha limit."""
    if num_populations < 1 or strategies < 1:
        raise ValueError("inputs must be >= 1")
    return 2 ** rank_count_exponent(num_populations, strategies)


def rank_count_exponent(num_populations: int, strategies: int) -> int:
    k, s = num_populations, strategies
    return s ** k * (k * (s - 1))


# --------------------------------------------------------------------------
# Wasserstein under the total-variation ground cost
# --------------------------------------------------------------------------


def tv_cost(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return 0.5 * cdist(np.atleast_2d(x), np.atleast_2d(y), metric="cityblock")


def wasserstein_atoms(atoms_p, weights_p, atoms_q, weights_q) -> float:
    """Exact transport cost between two weighted point sets under the TV cost."""
    import ot

    a = np.asarray(weights_p, dtype=float)
    b = np.asarray(weights_q, dtype=float)
    a = a / a.sum()
    b = b / b.sum()
    cost = tv_cost(atoms_p, atoms_q)
    if cost.size == 1:
        return float(cost[0, 0])
    value = ot.emd2(a, b, cost, numItermax=1_000_000)
    return float(np.clip(value, 0.0, 1.0))


def collapse(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Merge identical points; transport cost is unchanged by merging coincident mass."""
    atoms, counts = np.unique(np.asarray(samples) + 0.0, axis=0, return_counts=True)
    return atoms, counts


def wasserstein_tv(p: RankSampleSet, q: RankSampleSet) -> float:
    """Optimal-transport distance between two empirical rank beliefs, cost ``0.5 * L1``."""
    ap, wp = collapse(p.samples)
    aq, wq = collapse(q.samples)
    return wasserstein_atoms(ap, wp, aq, wq)
