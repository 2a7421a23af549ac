"""Query-selection strategies.

Bayesian selectors (``alpha_ig``, ``alpha_wass``, ``payoff_ig``) read the
Gaussian payoff belief in :class:`SamplerState`; ``rg_ucb`` works from
per-entry empirical means and Hoeffding intervals.  ``uniform`` ignores
everything.

The hallucination loop draws its randomness from per-(entry, repeat)
generators seeded from one base value taken from the caller's generator, so
the score of a candidate never depends on which other candidates were scored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import functools

import numpy as np

from .belief import (GaussianBelief, condition_many, condition_repeated, hallucinate_observation,
                     pair_difference_root, pair_slots, sample_matrices, sample_pair_differences)
from .core import _TABLE_LIMIT, DEFAULT_EPSILON, _code_table, codes_from_differences, comparison_codes, ranks_for_codes
from .estimators import (BINNING_DECIMALS, EstimationError, nsb_from_counts, plugin_entropy,
                         rank_count_upper_bound, wasserstein_atoms)
from .ranks import rounded_keys

DEFAULT_DELTA_GRID = (0.4, 0.3, 0.2, 0.1, 0.05, 0.01, 0.001)
ESTIMATORS = ("binning", "nsb")


@dataclass(frozen=True)
class Hyperparameters:
    """Selection hyperparameters.

    n_e: hallucinations per candidate entry.
    n_b: rank samples per belief.
    n_r: real observations per selected entry.
    n_c: times each hallucinated value is conditioned on.
    """

    n_e: int = 20
    n_b: int = 1000
    n_r: int = 10
    n_c: int = 100
    delta: float = 0.4
    bounds: tuple = (0.0, 1.0)
    epsilon: float = DEFAULT_EPSILON
    estimator: str = "binning"
    atom_bound: Optional[int] = None

    def __post_init__(self):
        for name in ("n_e", "n_b", "n_r", "n_c"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        lo, hi = self.bounds
        if not lo < hi:
            raise ValueError("bounds must satisfy lower < upper")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError("lower must not exceed upper")

    def overlaps(self, other: "ConfidenceInterval") -> bool:
        return not (self.upper < other.lower or other.upper < self.lower)

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)


@dataclass
class SamplerState:
    """Everything a selector may look at between rounds.

    ``counts`` holds real queries per entry.  ``stat_counts``/``sums`` feed the
    RG-UCB means and also absorb pseudo-samples.
    """

    num_strategies: int
    params: Hyperparameters = field(default_factory=Hyperparameters)
    belief: Optional[GaussianBelief] = None
    pseudo_n_good: Optional[int] = None
    counts: np.ndarray = field(init=False)
    stat_counts: np.ndarray = field(init=False)
    sums: np.ndarray = field(init=False)
    resolved: set = field(init=False, default_factory=set)
    rounds: int = field(init=False, default=0)

    def __post_init__(self):
        n = self.num_entries
        self.counts = np.zeros(n, dtype=np.int64)
        self.stat_counts = np.zeros(n, dtype=np.int64)
        self.sums = np.zeros(n)
        if self.belief is not None and self.belief.num_entries != n:
            raise ValueError("belief does not match the number of entries")

    @property
    def num_entries(self) -> int:
        return self.num_strategies ** 2

    @property
    def total_queries(self) -> int:
        return int(self.counts.sum())

    def record(self, entry: int, observations) -> None:
        """Commit real observations of one entry (belief, counts and RG-UCB statistics)."""
        obs = np.asarray(observations, dtype=float).ravel()
        self.counts[entry] += obs.size
        self._add_statistics(entry, obs)
        if self.belief is not None:
            self.belief = condition_many(self.belief, entry, obs)
        if self.pseudo_n_good is not None:
            for value in obs:
                for other, pseudo in inject_pseudo_samples((entry, value), self.pseudo_n_good, self.num_strategies):
                    self._add_statistics(other, np.array([pseudo]))
        self.rounds += 1

    def _add_statistics(self, entry: int, obs: np.ndarray) -> None:
        self.stat_counts[entry] += obs.size
        self.sums[entry] += obs.sum()

    def empirical_means(self) -> np.ndarray:
        """Per-entry sample means; unsampled entries sit at the midpoint of the bounds."""
        lo, hi = self.params.bounds
        means = np.full(self.num_entries, 0.5 * (lo + hi))
        seen = self.stat_counts > 0
        means[seen] = self.sums[seen] / self.stat_counts[seen]
        return means


# --------------------------------------------------------------------------
# hallucination machinery
# --------------------------------------------------------------------------


def _substream(base: int, entry: int, repeat: int) -> np.random.Generator:
    return np.random.default_rng([base, entry, repeat])


def draw_codes(belief: GaussianBelief, n: int, rng: np.random.Generator) -> np.ndarray:
    """Comparison codes of ``n`` payoff draws from ``belief``."""
    if len(belief.shape) != 2:
        return comparison_codes(sample_matrices(belief, n, rng))
    return codes_from_differences(sample_pair_differences(belief, n, rng))


def _hallucinated_codes(belief: GaussianBelief, entry: int, params: Hyperparameters, base: int) -> np.ndarray:
    """Rank-sample codes for every hallucination of ``entry``, shape ``(n_e, n_b)``.

    Repeat ``i`` draws its hallucinated value and then its payoff samples from
    ``_substream(base, entry, i)``.
    """
    if belief.independent and len(belief.shape) == 2:
        return _hallucinated_codes_independent(belief, entry, params, base)
    if len(belief.shape) == 2:
        return _hallucinated_codes_correlated(belief, entry, params, base)
    out = np.empty((params.n_e, params.n_b), dtype=np.int64)
    for i in range(params.n_e):
        rng = _substream(base, entry, i)
        value = hallucinate_observation(belief, entry, rng)
        posterior = condition_repeated(belief, entry, value, params.n_c)
        out[i] = draw_codes(posterior, params.n_b, rng)
    return out


def _hallucinated_codes_correlated(belief: GaussianBelief, entry: int, params: Hyperparameters,
                                   base: int) -> np.ndarray:
    # The hallucinated posterior covariance does not depend on the hallucinated
    # value, so one factor serves every repeat; only the mean shifts.  Only the
    # pair differences are drawn, from their exact joint covariance.
    s = belief.shape[0]
    lo, hi = pair_slots(s)
    anchor = condition_repeated(belief, entry, belief.mean[entry], params.n_c)
    gain = belief.cov[:, entry] / (belief.cov[entry, entry] + belief.obs_noise_var / params.n_c)
    root_t = pair_difference_root(anchor.cov, s).T
    out = np.empty((params.n_e, params.n_b), dtype=np.int64)
    for r in range(params.n_e):
        rng = _substream(base, entry, r)
        value = hallucinate_observation(belief, entry, rng)
        mean = belief.mean + gain * (value - belief.mean[entry])
        out[r] = codes_from_differences((mean[hi] - mean[lo]) + rng.standard_normal((params.n_b, lo.size)) @ root_t)
    return out


def _hallucinated_codes_independent(belief: GaussianBelief, entry: int, params: Hyperparameters,
                                    base: int) -> np.ndarray:
    # Same draws as the generic loop; only the one pair touching ``entry`` moves.
    lo, hi = pair_slots(belief.shape[0])
    var = np.clip(belief.variances, 0.0, None)
    prior_mean, prior_var = belief.mean[entry], var[entry]
    noise = belief.obs_noise_var / params.n_c
    post_var = prior_var * noise / (prior_var + noise)
    pred_sd = np.sqrt(prior_var + belief.obs_noise_var)

    n_pairs = lo.size
    z = np.empty((params.n_e, params.n_b, n_pairs))
    values = np.empty(params.n_e)
    for r in range(params.n_e):
        rng = _substream(base, entry, r)
        values[r] = rng.normal(prior_mean, pred_sd)
        z[r] = rng.standard_normal((params.n_b, n_pairs))

    means = np.tile(belief.mean, (params.n_e, 1))
    means[:, entry] = (noise * prior_mean + prior_var * values) / (prior_var + noise)
    variances = var.copy()
    variances[entry] = post_var
    diff = (means[:, hi] - means[:, lo])[:, None, :] + np.sqrt(variances[hi] + variances[lo]) * z
    return codes_from_differences(diff)


@functools.lru_cache(maxsize=16)
def _binned_atom_table(s: int, epsilon: float, decimals: int) -> np.ndarray:
    keys = rounded_keys(_code_table(s, epsilon), decimals)
    _, ids = np.unique(keys, axis=0, return_inverse=True)
    ids = ids.ravel()
    ids.setflags(write=False)
    return ids


_MEMO_LIMIT = 1_000_000
_atom_memo: dict = {}


def _pack_keys(keys: np.ndarray, decimals: int) -> np.ndarray:
    """One sortable scalar per row of integer keys in ``[0, 10**decimals]``.

    Up to two 53-bit words fit exactly in a complex128; wider rows fall back
    to byte strings.
    """
    bits = int(10 ** decimals).bit_length()
    per_word = 53 // bits
    n_words = -(-keys.shape[1] // per_word)
    if n_words > 2:
        return np.array([k.tobytes() for k in keys], dtype=object)
    shifts = bits * np.arange(per_word, dtype=np.int64)
    words = [np.sum(keys[:, w * per_word:(w + 1) * per_word] << shifts[:min(per_word, keys.shape[1] - w * per_word)],
                    axis=1) for w in range(n_words)]
    packed = words[0].astype(np.float64)
    return packed + 1j * (words[1].astype(np.float64) if n_words == 2 else 0.0)


def _atom_ids(codes: np.ndarray, s: int, epsilon: float, decimals: int) -> np.ndarray:
    """Rounded-atom label of every code (labels only identify atoms, nothing more).

    Small games use a precomputed table.  Larger ones memoise code -> atom
    across calls, since beliefs revisit the same comparison patterns.
    """
    codes = np.asarray(codes, dtype=np.int64)
    p = s * (s - 1) // 2
    if 3 ** p <= _TABLE_LIMIT:
        return _binned_atom_table(s, float(epsilon), decimals)[codes]
    code_map, key_map = _atom_memo.setdefault((s, float(epsilon), decimals), ({}, {}))
    if len(code_map) > _MEMO_LIMIT:
        code_map.clear()
    uniq, inverse = np.unique(codes.ravel(), return_inverse=True)
    uniq_list = uniq.tolist()
    ids = np.fromiter((code_map.get(c, -1) for c in uniq_list), dtype=np.int64, count=len(uniq_list))
    miss = np.nonzero(ids < 0)[0]
    if miss.size:
        keys = _pack_keys(rounded_keys(ranks_for_codes(uniq[miss], s, epsilon), decimals), decimals)
        distinct, back = np.unique(keys, return_inverse=True)
        labels = np.array([key_map.setdefault(k, len(key_map)) for k in distinct.tolist()], dtype=np.int64)
        new = labels[back.ravel()]
        ids[miss] = new
        code_map.update(zip(uniq[miss].tolist(), new.tolist()))
    return ids[inverse.ravel()].reshape(codes.shape)


def _nonzero_counts(ids: np.ndarray) -> np.ndarray:
    return np.unique(ids, return_counts=True)[1]


def _rank_atoms(codes: np.ndarray, s: int, epsilon: float) -> tuple[np.ndarray, np.ndarray]:
    uniq, counts = np.unique(codes, return_counts=True)
    return ranks_for_codes(uniq, s, epsilon), counts


def _estimate_entropy(atom_counts: np.ndarray, params: Hyperparameters, s: int) -> float:
    if params.estimator == "binning":
        return plugin_entropy(atom_counts)
    bound = params.atom_bound or rank_count_upper_bound(1, s)
    try:
        return nsb_from_counts(atom_counts, bound)
    except EstimationError as exc:
        return exc.fallback


def _require_belief(state: SamplerState) -> GaussianBelief:
    if state.belief is None:
        raise ValueError("this selector needs a payoff belief")
    return state.belief


def alpha_ig_scores(state: SamplerState, rng: np.random.Generator, estimator: Optional[str] = None,
                    candidates=None) -> np.ndarray:
    """Average entropy of the hallucinated rank belief, one value per entry.

    Non-candidate entries get ``inf``.
    """
    belief = _require_belief(state)
    params = state.params if estimator is None else _with(state.params, estimator=estimator)
    s = state.num_strategies
    base = int(rng.integers(2**63))
    entries = range(state.num_entries) if candidates is None else candidates
    scores = np.full(state.num_entries, np.inf)
    for a in entries:
        ids = _atom_ids(_hallucinated_codes(belief, a, params, base), s, params.epsilon, BINNING_DECIMALS)
        scores[a] = np.mean([_estimate_entropy(_nonzero_counts(row), params, s) for row in ids])
    return scores


def alpha_ig_select(state: SamplerState, estimator: Optional[str] = None,
                    rng: Optional[np.random.Generator] = None) -> int:
    """Entry whose observation is expected to leave the lowest rank-belief entropy."""
    rng = np.random.default_rng() if rng is None else rng
    return int(np.argmin(alpha_ig_scores(state, rng, estimator)))


def alpha_wass_scores(state: SamplerState, rng: np.random.Generator, candidates=None) -> np.ndarray:
    """Average transport distance between current and hallucinated rank beliefs.

    Non-candidate entries get ``-inf``.
    """
    belief = _require_belief(state)
    params = state.params
    s = state.num_strategies
    base = int(rng.integers(2**63))
    current = draw_codes(belief, params.n_b, _substream(base, state.num_entries, 0))
    cur_atoms, cur_weights = _rank_atoms(current, s, params.epsilon)
    entries = range(state.num_entries) if candidates is None else candidates
    scores = np.full(state.num_entries, -np.inf)
    for a in entries:
        distances = []
        for codes in _hallucinated_codes(belief, a, params, base):
            atoms, weights = _rank_atoms(codes, s, params.epsilon)
            distances.append(wasserstein_atoms(cur_atoms, cur_weights, atoms, weights))
        scores[a] = np.mean(distances)
    return scores


def alpha_wass_select(state: SamplerState, rng: Optional[np.random.Generator] = None) -> int:
    rng = np.random.default_rng() if rng is None else rng
    return int(np.argmax(alpha_wass_scores(state, rng)))


def payoff_ig_select(state: SamplerState) -> int:
    """Greedy information gain on the payoffs themselves.

    With an independent prior this is the least-observed entry; otherwise the
    entry with the largest posterior variance.
    """
    belief = _require_belief(state)
    if belief.independent:
        return int(np.argmin(state.counts))
    return int(np.argmax(belief.variances))


def uniform_select(state: SamplerState, rng: np.random.Generator) -> int:
    return int(rng.integers(state.num_entries))


def _with(params: Hyperparameters, **changes) -> Hyperparameters:
    doc = dict(params.__dict__)
    doc.update(changes)
    return Hyperparameters(**doc)


# --------------------------------------------------------------------------
# ResponseGraphUCB
# --------------------------------------------------------------------------


def hoeffding_interval(mean: float, n: int, delta: float, range_width: float) -> ConfidenceInterval:
    """``mean -/+ sqrt(log(2/delta) * range_width / (2 n))``."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if n < 1:
        raise ValueError("n must be >= 1")
    if range_width <= 0:
        raise ValueError("range_width must be positive")
    half = np.sqrt(np.log(2.0 / delta) * range_width / (2.0 * n))
    return ConfidenceInterval(mean - half, mean + half)


def interval_arrays(state: SamplerState) -> tuple[np.ndarray, np.ndarray]:
    """Per-entry Hoeffding bounds; unsampled entries span the whole payoff range."""
    lo, hi = state.params.bounds
    n = state.stat_counts
    lower = np.full(state.num_entries, lo, dtype=float)
    upper = np.full(state.num_entries, hi, dtype=float)
    seen = n > 0
    means = state.empirical_means()
    half = np.sqrt(np.log(2.0 / state.params.delta) * (hi - lo) / (2.0 * n[seen]))
    lower[seen] = means[seen] - half
    upper[seen] = means[seen] + half
    return lower, upper


def ordering_pairs(s: int) -> np.ndarray:
    """Entry pairs ``(M(i, j), M(j, i))`` compared when building the chain, shape ``(P, 2)``."""
    i, j = np.triu_indices(s, k=1)
    return np.stack([i * s + j, j * s + i], axis=1)


def update_resolved(state: SamplerState) -> set:
    """Mark every pair whose intervals no longer overlap; resolved pairs stay resolved."""
    lower, upper = interval_arrays(state)
    pairs = ordering_pairs(state.num_strategies)
    a, b = pairs[:, 0], pairs[:, 1]
    disjoint = (upper[a] < lower[b]) | (upper[b] < lower[a])
    state.resolved.update(int(p) for p in np.nonzero(disjoint)[0])
    return state.resolved


def rg_ucb_step(state: SamplerState) -> Optional[int]:
    """Next entry to sample, or ``None`` once every relevant ordering is resolved.

    Among entries of unresolved pairs the least-sampled one is chosen (ties to
    the lowest index).
    """
    update_resolved(state)
    pairs = ordering_pairs(state.num_strategies)
    open_pairs = [p for p in range(len(pairs)) if p not in state.resolved]
    if not open_pairs:
        return None
    entries = np.unique(pairs[open_pairs].ravel())
    return int(entries[np.argmin(state.stat_counts[entries])])


def rg_ucb_interval_belief(state: SamplerState) -> tuple[np.ndarray, np.ndarray]:
    """Independent uniform belief per entry on its interval, clipped to the payoff bounds."""
    lo, hi = state.params.bounds
    lower, upper = interval_arrays(state)
    return np.clip(lower, lo, hi), np.clip(upper, lo, hi)


def sample_uniform_intervals(lower, upper, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent draws, uniform on ``[lower[e], upper[e]]`` per entry, shape ``(n, E)``."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(lower > upper):
        raise ValueError("lower must not exceed upper")
    return lower + (upper - lower) * rng.random((n, lower.size))


def sample_interval_matrices(state: SamplerState, n: int, rng: np.random.Generator) -> np.ndarray:
    lower, upper = rg_ucb_interval_belief(state)
    s = state.num_strategies
    return sample_uniform_intervals(lower, upper, n, rng).reshape(n, s, s)


def inject_pseudo_samples(observation, n_good: int, num_strategies: int) -> list[tuple[int, float]]:
    """Pseudo-observations encoding anti-symmetry and block equality.

    For a real payoff ``p`` at ``(x, y)``: ``1 - p`` at ``(y, x)``, and ``p`` at
    every other entry of the same block unless the block is good-vs-good.
    Self-play entries are their own transpose and get no transpose sample.
    """
    entry, p = observation
    if p not in (0, 1, 0.0, 1.0):
        raise ValueError(f"pseudo-samples need binary payoffs, got {p}")
    from .belief import block_of

    s = num_strategies
    x, y = divmod(int(entry), s)
    out = []
    if x != y:
        out.append((y * s + x, 1.0 - float(p)))
    block = block_of(x, y, n_good)
    if block != 1:
        for other in range(s * s):
            ox, oy = divmod(other, s)
            if other != entry and block_of(ox, oy, n_good) == block:
                out.append((other, float(p)))
    return out
