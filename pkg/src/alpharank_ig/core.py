"""Alpha-rank Markov chains and their stationary distributions.

Two chain constructions are provided:

* the finite-alpha construction over strategy profiles of a K-player game
  (logistic fixation ratio between single-deviation neighbours), and
* the perturbed infinite-alpha single-population construction, where only the
  ordering of ``M(tau, sigma)`` against ``M(sigma, tau)`` matters.

The single-population chain depends on the payoffs only through the sign of
each cross-payoff comparison.  :func:`alpha_rank_batch` exploits this by
encoding every sampled matrix as a base-3 comparison code and solving one
chain per distinct code.
"""

from __future__ import annotations

import csv
import functools
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

DEFAULT_EPSILON = 1e-6
DENSE_SOLVE_LIMIT = 64
ROW_SUM_TOL = 1e-12
RESIDUAL_TOL = 1e-10
# codes are enumerated up front when 3**pairs stays below this
_TABLE_LIMIT = 60_000


class SolverError(RuntimeError):
    """Stationary solve failed; ``residual`` holds the last residual norm."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


@dataclass(frozen=True, eq=False)
class PayoffTensor:
    """Expected payoffs for every pure strategy profile.

    ``values`` has shape ``(S_1, ..., S_K, K)``: ``values[profile + (k,)]`` is
    player k's payoff when ``profile`` is played.  Tensors built with
    :meth:`from_matrix` describe a symmetric single-population game and expose
    the underlying ``S x S`` matrix via :attr:`matrix`.
    """

    values: np.ndarray
    single_population: bool = field(default=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim < 2:
            raise ValueError("payoff values need at least one strategy axis and a player axis")
        if values.shape[-1] != values.ndim - 1:
            raise ValueError(
                f"last axis must index the {values.ndim - 1} players, got size {values.shape[-1]}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("payoff values must be finite")
        if self.single_population and (values.ndim != 3 or values.shape[0] != values.shape[1]):
            raise ValueError("single-population payoffs must come from a square matrix")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_matrix(cls, matrix) -> "PayoffTensor":
        """Wrap a square matrix ``M(sigma, tau)`` as a symmetric 2-player game."""
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {m.shape}")
        return cls(np.stack([m, m.T], axis=-1), single_population=True)

    @property
    def num_players(self) -> int:
        return self.values.ndim - 1

    @property
    def strategies(self) -> tuple[int, ...]:
        return tuple(self.values.shape[:-1])

    @property
    def num_profiles(self) -> int:
        return int(np.prod(self.strategies))

    @property
    def matrix(self) -> np.ndarray:
        """The single-population matrix ``M(sigma, tau)`` (player one's payoffs)."""
        if self.num_players != 2 or self.strategies[0] != self.strategies[1]:
            raise ValueError("single-population accessor requires K=2 and S_1 == S_2")
        return self.values[..., 0]


PayoffLike = Union[PayoffTensor, np.ndarray, Sequence[Sequence[float]]]


def as_matrix(payoffs: PayoffLike) -> np.ndarray:
    if isinstance(payoffs, PayoffTensor):
        return payoffs.matrix
    m = np.asarray(payoffs, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square payoff matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("payoff values must be finite")
    return m


# --------------------------------------------------------------------------
# transition matrices
# --------------------------------------------------------------------------


def _check_stochastic(chain: np.ndarray) -> None:
    if chain.ndim != 2 or chain.shape[0] != chain.shape[1]:
        raise ValueError(f"transition matrix must be square, got {chain.shape}")
    if np.any(chain < -ROW_SUM_TOL) or np.any(chain > 1 + ROW_SUM_TOL):
        raise ValueError("transition entries must lie in [0, 1]")
    err = np.max(np.abs(chain.sum(axis=1) - 1.0))
    if err > 1e-9:
        raise ValueError(f"rows must sum to 1 (max error {err:.3e})")


def fixation_ratio(diff, alpha: float, m: int):
    """``(1 - exp(-alpha d)) / (1 - exp(-alpha m d))``, with ``1/m`` at ``d == 0``.

    Evaluated in a form that cannot overflow: for ``d < 0`` the common factor
    ``exp(alpha m |d|)`` is divided out first.
    """
    d = np.asarray(diff, dtype=float)
    x = alpha * np.abs(d)
    out = np.full(d.shape, 1.0 / m)
    nz = (d != 0) & (x > 0)
    if np.any(nz):
        xs = x[nz]
        base = np.expm1(-xs) / np.expm1(-m * xs)
        worse = d[nz] < 0
        base = np.where(worse, np.exp(-(m - 1) * xs) * base, base)
        out[nz] = base
    return out if out.ndim else float(out)


def build_transition_finite_alpha(
    payoffs: PayoffTensor, alpha: float, m: int, *, single_population: bool = False
) -> np.ndarray:
    """Finite-alpha chain over strategy profiles (or over strategies).

    Args:
        payoffs: game payoffs; needs at least two players for the profile chain.
        alpha: selection intensity, ``alpha >= 0``.
        m: population size, ``m >= 1``.
        single_population: build the ``S x S`` chain of the symmetric game
            instead, comparing ``M(tau, sigma)`` with ``M(sigma, tau)``.

    Returns:
        Row-stochastic matrix.  Profiles are ordered as ``np.ndindex``.
    """
    if alpha < 0 or not np.isfinite(alpha):
        raise ValueError(f"alpha must be a finite nonnegative number, got {alpha}")
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m}")
    m = int(m)

    if single_population:
        mat = as_matrix(payoffs)
        s = mat.shape[0]
        if s < 2:
            raise ValueError("need at least two strategies")
        eta = 1.0 / (s - 1)
        chain = eta * fixation_ratio(mat.T - mat, alpha, m)
        np.fill_diagonal(chain, 0.0)
        np.fill_diagonal(chain, 1.0 - chain.sum(axis=1))
        return chain

    if not isinstance(payoffs, PayoffTensor):
        raise TypeError("profile chain needs a PayoffTensor")
    k_players = payoffs.num_players
    if k_players < 2:
        raise ValueError("finite-alpha profile chain needs K >= 2 players")
    shape = payoffs.strategies
    eta = 1.0 / sum(s - 1 for s in shape)
    n = payoffs.num_profiles
    chain = np.zeros((n, n))
    for flat, profile in enumerate(np.ndindex(*shape)):
        for k in range(k_players):
            own = payoffs.values[profile + (k,)]
            for alt in range(shape[k]):
                if alt == profile[k]:
                    continue
                other = profile[:k] + (alt,) + profile[k + 1:]
                diff = payoffs.values[other + (k,)] - own
                chain[flat, np.ravel_multi_index(other, shape)] = eta * fixation_ratio(diff, alpha, m)
    np.fill_diagonal(chain, 1.0 - chain.sum(axis=1))
    return chain


def build_transition_single_pop(payoffs: PayoffLike, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Perturbed infinite-alpha single-population chain.

    ``C[s, t]`` is ``(1 - eps)/(S-1)`` when ``M(t, s) > M(s, t)``, ``eps/(S-1)``
    when it is smaller and ``0.5/(S-1)`` on exact ties.  Ties use exact float
    equality.
    """
    if not 0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    mat = as_matrix(payoffs)
    s = mat.shape[0]
    if s < 2:
        raise ValueError("need at least two strategies")
    inv = 1.0 / (s - 1)
    challenger = mat.T  # challenger[s, t] = M(t, s)
    chain = np.where(challenger > mat, (1.0 - epsilon) * inv, np.where(challenger < mat, epsilon * inv, 0.5 * inv))
    np.fill_diagonal(chain, 0.0)
    np.fill_diagonal(chain, 1.0 - chain.sum(axis=1))
    return chain


# --------------------------------------------------------------------------
# stationary distribution
# --------------------------------------------------------------------------


def _stationary_dense(chain: np.ndarray) -> np.ndarray:
    n = chain.shape[0]
    a = chain.T - np.eye(n)
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    return np.linalg.solve(a, b)


def _stationary_power(chain: np.ndarray, tol: float, max_iter: int, x0) -> np.ndarray:
    n = chain.shape[0]
    x = np.full(n, 1.0 / n) if x0 is None else np.asarray(x0, dtype=float) / np.sum(x0)
    for _ in range(max_iter):
        nxt = x @ chain
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - x)) < tol:
            return nxt
        x = nxt
    raise SolverError(f"power iteration did not converge in {max_iter} iterations",
                      float(np.max(np.abs(x @ chain - x))))


def stationary_distribution(
    chain,
    *,
    method: str = "auto",
    tol: float = 1e-12,
    max_iter: int = 1_000_000,
    x0=None,
) -> np.ndarray:
    """Stationary distribution ``x`` with ``x C = x`` and ``sum(x) = 1``.

    ``method="auto"`` uses a dense solve of ``(C^T - I) x = 0`` with the last
    equation replaced by the normalisation row for chains with at most 64
    states, and power iteration above that.

    Raises:
        SolverError: if the residual ``||xC - x||_inf`` exceeds 1e-10 or power
            iteration hits ``max_iter``.
    """
    c = np.asarray(chain, dtype=float)
    _check_stochastic(c)
    if method == "auto":
        method = "dense" if c.shape[0] <= DENSE_SOLVE_LIMIT else "power"
    if method == "dense":
        try:
            x = _stationary_dense(c)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"dense solve failed: {exc}", float("inf")) from exc
    elif method == "power":
        x = _stationary_power(c, tol, max_iter, x0)
    else:
        raise ValueError(f"unknown method {method!r}")
    x = np.clip(x, 0.0, None)
    x /= x.sum()
    residual = float(np.max(np.abs(x @ c - x)))
    if not np.isfinite(residual) or residual > RESIDUAL_TOL:
        raise SolverError("stationary distribution residual too large", residual)
    return x


def alpha_rank(payoffs: PayoffLike, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Single-population infinite-alpha alpha-rank of a payoff matrix."""
    return stationary_distribution(build_transition_single_pop(payoffs, epsilon))


# --------------------------------------------------------------------------
# comparison codes and batched alpha-rank
# --------------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def pair_indices(s: int) -> tuple[np.ndarray, np.ndarray]:
    """Upper-triangle index pairs ``(i, j)``, ``i < j``, in row-major order."""
    i, j = np.triu_indices(s, k=1)
    return i, j


def comparison_digits(matrices) -> np.ndarray:
    """Per-pair comparison digit: 2 if ``M(j,i) > M(i,j)``, 0 if smaller, 1 on ties.

    ``matrices`` has shape ``(..., S, S)``; the result has shape ``(..., P)``.
    """
    m = np.asarray(matrices, dtype=float)
    i, j = pair_indices(m.shape[-1])
    lower = m[..., j, i]
    upper = m[..., i, j]
    return (np.sign(lower - upper) + 1).astype(np.int8)


def comparison_codes(matrices) -> np.ndarray:
    """Base-3 integer code of the comparison pattern of each matrix."""
    digits = comparison_digits(matrices)
    p = digits.shape[-1]
    if p > 39:
        raise ValueError("too many strategies for 64-bit comparison codes")
    weights = 3 ** np.arange(p, dtype=np.int64)
    return digits.astype(np.int64) @ weights


def codes_from_differences(diff) -> np.ndarray:
    """Comparison codes from pair differences ``M(j, i) - M(i, j)``, shape ``(..., P)``."""
    d = np.asarray(diff, dtype=float)
    if d.shape[-1] > 33:
        return (np.sign(d) + 1).astype(np.int64) @ (3 ** np.arange(d.shape[-1], dtype=np.int64))
    # float matmul is exact below 2**53 and far faster than integer matmul
    return np.rint((np.sign(d) + 1.0) @ (3.0 ** np.arange(d.shape[-1]))).astype(np.int64)


def _digits_from_codes(codes: np.ndarray, p: int) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    out = np.empty(codes.shape + (p,), dtype=np.int8)
    rest = codes.copy()
    for q in range(p):
        out[..., q] = rest % 3
        rest //= 3
    return out


def _chains_from_digits(digits: np.ndarray, s: int, epsilon: float) -> np.ndarray:
    i, j = pair_indices(s)
    inv = 1.0 / (s - 1)
    up_vals = np.array([epsilon, 0.5, 1.0 - epsilon]) * inv  # s -> t when t beats s
    n = digits.shape[0]
    chains = np.zeros((n, s, s))
    chains[:, i, j] = up_vals[digits]
    chains[:, j, i] = up_vals[2 - digits]
    idx = np.arange(s)
    chains[:, idx, idx] = 1.0 - chains.sum(axis=2)
    return chains


def _solve_chains(chains: np.ndarray) -> np.ndarray:
    n, s, _ = chains.shape
    a = np.transpose(chains, (0, 2, 1)) - np.eye(s)
    a[:, -1, :] = 1.0
    b = np.zeros((n, s, 1))
    b[:, -1, 0] = 1.0
    x = np.linalg.solve(a, b)[..., 0]
    x = np.clip(x, 0.0, None)
    x /= x.sum(axis=1, keepdims=True)
    residual = np.max(np.abs(np.einsum("ns,nst->nt", x, chains) - x)) if n else 0.0
    if residual > RESIDUAL_TOL:
        raise SolverError("batched stationary solve residual too large", float(residual))
    return x


def ranks_for_codes(codes, s: int, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Alpha-rank for each comparison code (one chain solve per distinct code)."""
    codes = np.asarray(codes, dtype=np.int64)
    p = s * (s - 1) // 2
    if 3 ** p <= _TABLE_LIMIT:
        return _code_table(s, float(epsilon))[codes]
    uniq, inverse = np.unique(codes.ravel(), return_inverse=True)
    ranks = _solve_chains(_chains_from_digits(_digits_from_codes(uniq, p), s, epsilon))
    return ranks[inverse].reshape(codes.shape + (s,))


@functools.lru_cache(maxsize=16)
def _code_table(s: int, epsilon: float) -> np.ndarray:
    p = s * (s - 1) // 2
    all_codes = np.arange(3 ** p, dtype=np.int64)
    table = _solve_chains(_chains_from_digits(_digits_from_codes(all_codes, p), s, epsilon))
    table.setflags(write=False)
    return table


def alpha_rank_batch(matrices, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Alpha-rank of a stack of ``S x S`` matrices, shape ``(n, S, S) -> (n, S)``."""
    m = np.asarray(matrices, dtype=float)
    if m.ndim != 3 or m.shape[1] != m.shape[2]:
        raise ValueError(f"expected shape (n, S, S), got {m.shape}")
    if not 0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    return ranks_for_codes(comparison_codes(m), m.shape[1], epsilon)


# --------------------------------------------------------------------------
# permutation property
# --------------------------------------------------------------------------


def _relevant_signs(payoffs: PayoffLike) -> np.ndarray:
    if isinstance(payoffs, PayoffTensor) and not payoffs.single_population:
        shape = payoffs.strategies
        signs = []
        for profile in np.ndindex(*shape):
            for k in range(payoffs.num_players):
                for alt in range(profile[k] + 1, shape[k]):
                    other = profile[:k] + (alt,) + profile[k + 1:]
                    signs.append(np.sign(payoffs.values[other + (k,)] - payoffs.values[profile + (k,)]))
        return np.array(signs)
    return comparison_digits(as_matrix(payoffs))


def orderings_equal(m1: PayoffLike, m2: PayoffLike) -> bool:
    """True iff every comparison that enters the transition matrix has the same sign."""
    shape1 = m1.values.shape if isinstance(m1, PayoffTensor) else np.shape(m1)
    shape2 = m2.values.shape if isinstance(m2, PayoffTensor) else np.shape(m2)
    if shape1 != shape2:
        raise ValueError(f"shape mismatch: {shape1} vs {shape2}")
    return bool(np.array_equal(_relevant_signs(m1), _relevant_signs(m2)))


# --------------------------------------------------------------------------
# file formats
# --------------------------------------------------------------------------


def payoffs_to_json(payoffs: PayoffTensor) -> dict:
    values = payoffs.matrix if payoffs.single_population else payoffs.values
    return {
        "num_players": payoffs.num_players,
        "strategies": list(payoffs.strategies),
        "values": values.tolist(),
    }


def payoffs_from_json(doc: dict) -> PayoffTensor:
    try:
        k = int(doc["num_players"])
        strategies = [int(s) for s in doc["strategies"]]
        values = np.asarray(doc["values"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed payoff document: {exc}") from exc
    if len(strategies) != k:
        raise ValueError("len(strategies) must equal num_players")
    if k == 2 and values.shape == tuple(strategies) and strategies[0] == strategies[1]:
        return PayoffTensor.from_matrix(values)
    if values.shape != tuple(strategies) + (k,):
        raise ValueError(f"values shape {values.shape} inconsistent with strategies {strategies}")
    return PayoffTensor(values)


def load_payoffs(path) -> PayoffTensor:
    """Read a payoff tensor from JSON, or a square single-population matrix from CSV."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with path.open(newline="") as fh:
            rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
        return PayoffTensor.from_matrix(np.array(rows))
    return payoffs_from_json(json.loads(path.read_text()))


def save_payoffs(payoffs: PayoffTensor, path) -> None:
    Path(path).write_text(json.dumps(payoffs_to_json(payoffs), indent=2) + "\n")


def all_sign_patterns(s: int):
    """Iterate over every strict comparison pattern of an ``S x S`` game (test helper)."""
    p = s * (s - 1) // 2
    for bits in itertools.product((0, 2), repeat=p):
        yield np.array(bits, dtype=np.int8)
