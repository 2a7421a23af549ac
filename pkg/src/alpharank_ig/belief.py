"""Gaussian belief over the entries of a payoff matrix.

Entries are addressed by their flat row-major index into the ``S x S`` matrix
(a ``(row, col)`` tuple is accepted wherever an entry is expected).  Beliefs
are immutable: every conditioning step returns a new object.
"""

from __future__ import annotations

import functools
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .core import PayoffTensor, pair_indices

JITTER = 1e-9
SYMMETRY_TOL = 1e-10
KERNEL_KINDS = ("independent", "block_antisymmetric")

Entry = Union[int, Sequence[int]]


class BeliefError(RuntimeError):
    """Covariance could not be factorised, even after jitter."""


@dataclass(frozen=True)
class KernelSpec:
    """Prior covariance recipe.

    ``independent`` gives ``sigma0_sq * I``.  ``block_antisymmetric`` builds
    ``(k')^T k' / scale`` from a block-indicator kernel over the good/bad
    partition, where ``k'`` folds in the transpose of both arguments so that
    ``M(x, y)`` and ``M(y, x)`` are anti-correlated about the prior mean.

    ``top_left`` controls the good-vs-good block of the base kernel:
    ``"identity"`` correlates each entry only with itself, ``"constant"``
    makes the whole block a single constant (which leaves that block with zero
    prior variance after the anti-symmetrisation).
    """

    kind: str = "independent"
    mu0: float = 0.5
    sigma0_sq: float = 1.0
    n_good: Optional[int] = None
    n_bad: Optional[int] = None
    scale: float = 500.0
    top_left: str = "identity"

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "independent" and self.sigma0_sq <= 0:
            raise ValueError("sigma0_sq must be positive")
        if self.kind == "block_antisymmetric":
            if not self.n_good or not self.n_bad or self.n_good < 1 or self.n_bad < 1:
                raise ValueError("block kernel needs positive n_good and n_bad")
            if self.scale <= 0:
                raise ValueError("scale divisor must be positive")
            if self.top_left not in ("identity", "constant"):
                raise ValueError(f"unknown top_left mode {self.top_left!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "KernelSpec":
        return cls(**doc)


def block_of(x: int, y: int, n_good: int) -> int:
    """Block label 1..4 of entry ``(x, y)`` (0-based indices)."""
    if x < n_good and y < n_good:
        return 1
    if x < n_good:
        return 2
    if y < n_good:
        return 3
    return 4


def transpose_permutation(s: int) -> np.ndarray:
    """``perm[e]`` is the flat index of the transpose of entry ``e``."""
    return np.arange(s * s).reshape(s, s).T.ravel()


def block_antisymmetric_kernel(n_good: int, n_bad: int, scale: float = 500.0,
                               top_left: str = "identity") -> np.ndarray:
    s = n_good + n_bad
    rows, cols = np.divmod(np.arange(s * s), s)
    blocks = np.array([block_of(x, y, n_good) for x, y in zip(rows, cols)])
    k = (blocks[:, None] != blocks[None, :]).astype(float)
    top = (blocks == 1)
    if top_left == "identity":
        k[np.ix_(top, top)] = np.eye(int(top.sum()))
    else:
        k[np.ix_(top, top)] = 1.0
    t = transpose_permutation(s)
    k_prime = k + k[np.ix_(t, t)] - k[:, t] - k[t, :]
    cov = k_prime.T @ k_prime / scale
    return 0.5 * (cov + cov.T)


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    """Multivariate normal belief over payoff entries plus observation noise."""

    mean: np.ndarray
    cov: np.ndarray
    obs_noise_var: float
    shape: tuple = ()
    independent: Optional[bool] = field(default=None)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match {mean.size} entries")
        if self.obs_noise_var <= 0:
            raise ValueError("obs_noise_var must be positive")
        if np.max(np.abs(cov - cov.T), initial=0.0) > SYMMETRY_TOL:
            raise ValueError("covariance must be symmetric")
        shape = tuple(self.shape) or _square_shape(mean.size)
        if int(np.prod(shape)) != mean.size:
            raise ValueError(f"layout {shape} does not hold {mean.size} entries")
        independent = self.independent
        if independent is None:
            independent = not np.any(cov[~np.eye(mean.size, dtype=bool)])
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "independent", bool(independent))

    @property
    def num_entries(self) -> int:
        return self.mean.size

    @property
    def variances(self) -> np.ndarray:
        return np.diag(self.cov)

    @functools.cached_property
    def factor(self) -> np.ndarray:
        """Lower factor ``L`` with ``L L^T`` equal to the covariance (up to jitter)."""
        if self.independent:
            return np.diag(np.sqrt(np.clip(np.diag(self.cov), 0.0, None)))
        try:
            return np.linalg.cholesky(self.cov)
        except np.linalg.LinAlgError:
            pass
        try:
            return np.linalg.cholesky(self.cov + JITTER * np.eye(self.num_entries))
        except np.linalg.LinAlgError as exc:
            raise BeliefError(f"covariance not factorisable after jitter: {exc}") from exc

    def entry_index(self, entry: Entry) -> int:
        if isinstance(entry, (int, np.integer)):
            idx = int(entry)
        else:
            idx = int(np.ravel_multi_index(tuple(int(e) for e in entry), self.shape))
        if not 0 <= idx < self.num_entries:
            raise IndexError(f"entry {entry} out of range")
        return idx


def _square_shape(n: int) -> tuple:
    s = int(round(np.sqrt(n)))
    return (s, s) if s * s == n else (n,)


def prior(spec: KernelSpec, entry_count: int, obs_noise_var: float) -> GaussianBelief:
    """Prior belief with constant mean ``spec.mu0`` and the kernel's covariance."""
    if entry_count < 1:
        raise ValueError("entry_count must be positive")
    if obs_noise_var <= 0:
        raise ValueError("obs_noise_var must be positive")
    mean = np.full(entry_count, float(spec.mu0))
    if spec.kind == "independent":
        return GaussianBelief(mean, spec.sigma0_sq * np.eye(entry_count), obs_noise_var, independent=True)
    s = spec.n_good + spec.n_bad
    if entry_count != s * s:
        raise ValueError(f"block kernel for {s} agents needs {s * s} entries, got {entry_count}")
    cov = block_antisymmetric_kernel(spec.n_good, spec.n_bad, spec.scale, spec.top_left)
    return GaussianBelief(mean, cov, obs_noise_var, shape=(s, s))


def _update(belief: GaussianBelief, idx: int, observation: float, noise_var: float) -> GaussianBelief:
    if not np.isfinite(observation):
        raise ValueError(f"observation must be finite, got {observation}")
    cov = belief.cov
    if belief.independent:
        var = cov[idx, idx]
        mean = belief.mean.copy()
        mean[idx] = (noise_var * mean[idx] + var * observation) / (var + noise_var)
        new_cov = cov.copy()
        new_cov[idx, idx] = var * noise_var / (var + noise_var)
        return GaussianBelief(mean, new_cov, belief.obs_noise_var, belief.shape, independent=True)
    k = cov[:, idx]
    denom = cov[idx, idx] + noise_var
    mean = belief.mean + k * ((observation - belief.mean[idx]) / denom)
    new_cov = cov - np.outer(k, k) / denom
    new_cov = 0.5 * (new_cov + new_cov.T)
    return GaussianBelief(mean, new_cov, belief.obs_noise_var, belief.shape, independent=False)


def condition(belief: GaussianBelief, entry: Entry, observation: float) -> GaussianBelief:
    """Posterior after one noisy observation of ``entry``."""
    return _update(belief, belief.entry_index(entry), float(observation), belief.obs_noise_var)


def condition_repeated(belief: GaussianBelief, entry: Entry, observation: float, times: int) -> GaussianBelief:
    """Posterior after observing the same value ``times`` times.

    ``times`` identical observations with noise variance ``s`` carry exactly
    the information of one observation with variance ``s / times``, so this is
    a single update.
    """
    if times < 1:
        raise ValueError("times must be >= 1")
    return _update(belief, belief.entry_index(entry), float(observation), belief.obs_noise_var / times)


def condition_many(belief: GaussianBelief, entry: Entry, observations: Iterable[float]) -> GaussianBelief:
    """Posterior after several observations of one entry (their mean with noise ``s/n``)."""
    obs = np.asarray(list(observations), dtype=float)
    if obs.size == 0:
        return belief
    if not np.all(np.isfinite(obs)):
        raise ValueError("observations must be finite")
    return _update(belief, belief.entry_index(entry), float(obs.mean()), belief.obs_noise_var / obs.size)


def sample_entries(belief: GaussianBelief, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` joint draws of all entries, shape ``(n, E)``."""
    z = rng.standard_normal((n, belief.num_entries))
    if belief.independent:
        return belief.mean + z * np.sqrt(np.clip(np.diag(belief.cov), 0.0, None))
    return belief.mean + z @ belief.factor.T


def pair_slots(s: int) -> tuple[np.ndarray, np.ndarray]:
    """Flat indices of ``M(i, j)`` and ``M(j, i)`` for every pair ``i < j``."""
    i, j = pair_indices(s)
    return i * s + j, j * s + i


def pair_difference_root(cov: np.ndarray, s: int) -> np.ndarray:
    """Square root ``R`` (``R R^T = C``) of the covariance ``C`` of ``M(j, i) - M(i, j)``.

    Built from an eigendecomposition with negative round-off clipped, so no
    jitter is needed and pinned differences stay exactly zero.
    """
    lo, hi = pair_slots(s)
    c = cov[np.ix_(hi, hi)] - cov[np.ix_(hi, lo)] - cov[np.ix_(lo, hi)] + cov[np.ix_(lo, lo)]
    w, v = np.linalg.eigh(0.5 * (c + c.T))
    return v * np.sqrt(np.clip(w, 0.0, None))


def sample_pair_differences(belief: GaussianBelief, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` joint draws of ``M(j, i) - M(i, j)`` over pairs ``i < j``, shape ``(n, P)``.

    Alpha-ranks in the infinite-alpha regime depend on nothing else.
    """
    if len(belief.shape) != 2 or belief.shape[0] != belief.shape[1]:
        raise ValueError("pair differences need a square entry layout")
    s = belief.shape[0]
    lo, hi = pair_slots(s)
    z = rng.standard_normal((n, lo.size))
    if belief.independent:
        var = np.clip(belief.variances, 0.0, None)
        return belief.mean[hi] - belief.mean[lo] + np.sqrt(var[hi] + var[lo]) * z
    return (belief.mean[hi] - belief.mean[lo]) + z @ pair_difference_root(belief.cov, s).T


def sample_matrices(belief: GaussianBelief, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` payoff draws reshaped to the entry layout, shape ``(n, *shape)``."""
    return sample_entries(belief, n, rng).reshape((n,) + belief.shape)


def sample_payoff(belief: GaussianBelief, rng: np.random.Generator) -> PayoffTensor:
    return PayoffTensor.from_matrix(sample_matrices(belief, 1, rng)[0])


def hallucinate_observation(belief: GaussianBelief, entry: Entry, rng: np.random.Generator) -> float:
    """Draw from the predictive distribution of a noisy observation of ``entry``."""
    idx = belief.entry_index(entry)
    scale = np.sqrt(max(belief.cov[idx, idx], 0.0) + belief.obs_noise_var)
    return float(rng.normal(belief.mean[idx], scale))


def posterior_mean(belief: GaussianBelief) -> PayoffTensor:
    return PayoffTensor.from_matrix(belief.mean.reshape(belief.shape))
