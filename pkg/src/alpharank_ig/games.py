"""Synthetic games with known expected payoffs and noisy observations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import PayoffTensor

OBSERVATION_MODELS = ("bernoulli", "clipped_gaussian")


@dataclass(frozen=True, eq=False)
class GameEnv:
    """Ground-truth payoff matrix plus an observation model.

    ``clipped_gaussian`` draws ``N(x, noise_sd**2)`` and clips it to
    ``[x - clip, x + clip]``.
    """

    ground_truth: np.ndarray
    observation_model: str = "bernoulli"
    noise_sd: float = 1.0
    clip: float = 1.0
    name: str = "custom"
    groups: dict = field(default_factory=dict)

    def __post_init__(self):
        gt = np.asarray(self.ground_truth, dtype=float)
        if gt.ndim != 2 or gt.shape[0] != gt.shape[1]:
            raise ValueError("ground truth must be a square matrix")
        if self.observation_model not in OBSERVATION_MODELS:
            raise ValueError(f"unknown observation model {self.observation_model!r}")
        if self.observation_model == "bernoulli" and (gt.min() < 0 or gt.max() > 1):
            raise ValueError("Bernoulli observations need payoffs in [0, 1]")
        gt.setflags(write=False)
        object.__setattr__(self, "ground_truth", gt)

    @property
    def num_strategies(self) -> int:
        return self.ground_truth.shape[0]

    @property
    def num_entries(self) -> int:
        return self.ground_truth.size

    @property
    def payoffs(self) -> PayoffTensor:
        return PayoffTensor.from_matrix(self.ground_truth)


def good_bad_game(n_good: int, n_bad: int, p_top: float = 0.55) -> GameEnv:
    """Good agents always beat bad ones; among good agents, higher index wins.

    Good agent ``i`` beats good agent ``j < i`` with probability
    ``0.5 + (p_top - 0.5) * (i - j)`` (capped at 1), so the last good agent is
    the unique best.  Diagonal and bad-vs-bad entries are 0.5.
    """
    if n_good < 2 or n_bad < 1:
        raise ValueError("need n_good >= 2 and n_bad >= 1")
    if not 0.5 < p_top < 1.0:
        raise ValueError(f"p_top must lie in (0.5, 1), got {p_top}")
    s = n_good + n_bad
    m = np.full((s, s), 0.5)
    m[:n_good, n_good:] = 1.0
    m[n_good:, :n_good] = 0.0
    for i in range(n_good):
        for j in range(i):
            win = min(0.5 + (p_top - 0.5) * (i - j), 1.0)
            m[i, j] = win
            m[j, i] = 1.0 - win
    return GameEnv(m, "bernoulli", name=f"{n_good}good{n_bad}bad", groups=good_bad_groups(n_good, n_bad))


def good_bad_groups(n_good: int, n_bad: int) -> dict:
    """Entry groups used for sampling-proportion analysis.

    ``red``: good-vs-good off-diagonal entries (these decide the ranking among
    the good agents).  ``green``: self-play diagonal.  ``purple``: bad-vs-bad
    off-diagonal.  ``good_bad``: the remaining cross-block entries.
    """
    s = n_good + n_bad
    rows, cols = np.divmod(np.arange(s * s), s)
    good_r, good_c = rows < n_good, cols < n_good
    diag = rows == cols
    return {
        "red": np.nonzero(good_r & good_c & ~diag)[0].tolist(),
        "green": np.nonzero(diag)[0].tolist(),
        "purple": np.nonzero(~good_r & ~good_c & ~diag)[0].tolist(),
        "good_bad": np.nonzero(good_r != good_c)[0].tolist(),
    }


def gaussian_game(s: int, rng: np.random.Generator, noise_sd: float = 1.0, clip: float = 1.0) -> GameEnv:
    """Entries uniform on [0, 1); observations clipped Gaussians around them."""
    if s < 2:
        raise ValueError("need at least two strategies")
    return GameEnv(rng.random((s, s)), "clipped_gaussian", noise_sd=noise_sd, clip=clip, name=f"gaussian{s}x{s}")


def matrix_game(matrix, observation_model: str = "bernoulli", **kwargs) -> GameEnv:
    return GameEnv(np.asarray(matrix, dtype=float), observation_model, **kwargs)


def observe_many(env: GameEnv, entry: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent noisy observations of one entry."""
    x = env.ground_truth.flat[int(entry)]
    if env.observation_model == "bernoulli":
        return (rng.random(n) < x).astype(float)
    draws = rng.normal(x, env.noise_sd, size=n)
    return np.clip(draws, x - env.clip, x + env.clip)


def observe(env: GameEnv, entry: int, rng: np.random.Generator) -> float:
    return float(observe_many(env, entry, 1, rng)[0])


def separability(env: GameEnv) -> float:
    """Smallest absolute gap between any two ground-truth entries (0 if any tie)."""
    vals = np.sort(env.ground_truth.ravel())
    if vals.size < 2:
        return 0.0
    return float(np.min(np.diff(vals)))
