"""Acceptance criteria.

Each test carries ``@pytest.mark.criterion(n)``; the terminal summary prints
one PASS/FAIL line per criterion (an xfail counts as FAIL).  The multi-seed
experiment runs are shared between criteria through module-level caches.
"""

import functools
import itertools
import time

import numpy as np
import pytest

from alpharank_ig import cli
from alpharank_ig.belief import GaussianBelief, condition
from alpharank_ig.core import alpha_rank, build_transition_single_pop, stationary_distribution
from alpharank_ig.estimators import tv_cost, wasserstein_tv
from alpharank_ig.experiment import entry_proportions, preset, run
from alpharank_ig.games import good_bad_game, good_bad_groups, matrix_game, observe_many
from alpharank_ig.ranks import RankSampleSet
from alpharank_ig.samplers import Hyperparameters, SamplerState, rg_ucb_step
from alpharank_ig.theory import TheoryParams, binary_entropy, entropy_upper_bound, regret_bound

SEEDS = range(10)
GOOD_BAD = good_bad_game(2, 2).ground_truth


@functools.lru_cache(maxsize=None)
def two_by_two_runs(sampler: str) -> tuple:
    """Ten seeds of a sampler on 2 Good/2 Bad with the published hyperparameters."""
    cfg = preset("2g2b", sampler)
    assert cfg.budget == 5000
    return tuple(run(cfg, seed) for seed in SEEDS)


@functools.lru_cache(maxsize=None)
def prior_runs(kernel: str) -> tuple:
    """Ten seeds of alpha-IG on 3 Good/5 Bad with the block or the independent kernel."""
    cfg = preset("3g5b_prior").with_overrides(budget=5000, eval_points=50)
    if kernel == "independent":
        cfg = cfg.with_overrides(belief={"kernel": {"kind": "independent", "mu0": 0.5, "sigma0_sq": 1.0}})
    return tuple(run(cfg, seed) for seed in SEEDS)


def red_proportions(records) -> np.ndarray:
    groups = good_bad_groups(2, 2)
    return np.array([entry_proportions(r, groups)["red"] for r in records])


def smoothed(values, window=5) -> np.ndarray:
    return np.convolve(values, np.ones(window) / window, mode="valid")


# --------------------------------------------------------------------------
# 1. golden alpha-rank
# --------------------------------------------------------------------------


@pytest.mark.criterion(1)
def test_golden_alpha_rank():
    start = time.perf_counter()
    r = alpha_rank(GOOD_BAD, 1e-8)
    assert time.perf_counter() - start < 1.0
    assert np.abs(r - np.array([0.0, 1.0, 0.0, 0.0])).sum() < 1e-4


# --------------------------------------------------------------------------
# 2. golden transition matrix
# --------------------------------------------------------------------------


def printed_matrix(eps):
    """The worked-example chain exactly as printed (rows G1, G2, B1, B2)."""
    return np.array([
        [(2 - eps) / 3, (1 - eps) / 3, eps / 3, eps / 3],
        [(1 - eps) / 3, 1 - eps, eps / 3, eps / 3],
        [(1 - eps) / 3, (1 - eps) / 3, (1 + 4 * eps) / 6, 1 / 6],
        [(1 - eps) / 3, (1 - eps) / 3, 1 / 6, (1 + 4 * eps) / 6],
    ])


@pytest.mark.criterion(2)
@pytest.mark.xfail(strict=True, reason="printed G2 row sums to 4/3 - 2eps/3; its G2->G1 entry should be eps/3")
def test_golden_transition_matrix_as_printed():
    eps = 1e-6
    start = time.perf_counter()
    c = build_transition_single_pop(GOOD_BAD, eps)
    assert time.perf_counter() - start < 1.0
    np.testing.assert_allclose(c, printed_matrix(eps), rtol=0, atol=1e-12)


def test_golden_transition_matrix_corrected_row():
    eps = 1e-6
    expected = printed_matrix(eps)
    expected[1, 0] = eps / 3
    np.testing.assert_allclose(expected.sum(axis=1), 1.0, atol=1e-15)
    np.testing.assert_allclose(build_transition_single_pop(GOOD_BAD, eps), expected, rtol=0, atol=1e-12)


# --------------------------------------------------------------------------
# 3. sampling concentration on the red entries
# --------------------------------------------------------------------------


@pytest.mark.slow
@pytest.mark.criterion(3)
@pytest.mark.parametrize("sampler", ["alpha_wass", "alpha_ig"])
def test_concentration_beats_rg_ucb(sampler):
    assert preset("2g2b", "rg_ucb").hyperparameters().delta == 0.4
    baseline = red_proportions(two_by_two_runs("rg_ucb"))
    ours = red_proportions(two_by_two_runs(sampler))
    wins = int(np.sum(ours > baseline))
    print(f"{sampler} red {np.round(ours, 3).tolist()} vs rg_ucb {np.round(baseline, 3).tolist()}: {wins}/10")
    assert wins >= 7


# --------------------------------------------------------------------------
# 4. regret decay for alpha-IG
# --------------------------------------------------------------------------


@pytest.mark.slow
@pytest.mark.criterion(4)
def test_mean_jm_reaches_zero_and_stays():
    records = two_by_two_runs("alpha_ig")
    assert all(r.error is None for r in records)
    jm = np.mean([r.jm for r in records], axis=0)
    assert jm[-1] == 0.0
    last_bad = np.nonzero(jm)[0]
    settled = 0 if last_bad.size == 0 else last_bad[-1] + 1
    print(f"mean J^M is 0 from {records[0].queries[settled]} queries on")
    assert records[0].queries[settled] <= 5000


@pytest.mark.slow
@pytest.mark.criterion(4)
@pytest.mark.parametrize("metric", ["jb", "jf"])
def test_smoothed_regret_monotone_below_tenth(metric):
    records = two_by_two_runs("alpha_ig")
    curve = smoothed(np.mean([getattr(r, metric) for r in records], axis=0))
    rises = np.diff(curve)
    print(f"{metric}: final {curve[-1]:.4f}, {int(np.sum(rises > 0))} rises, largest {rises.max():.2e}")
    assert curve[-1] < 0.1
    if np.any(rises > 0):
        pytest.xfail(f"smoothed mean {metric} rises at {int(np.sum(rises > 0))} points "
                     f"(largest {rises.max():.1e}); Monte Carlo noise of the 2000-sample evaluation")


@pytest.mark.slow
@pytest.mark.parametrize("metric", ["jb", "jf"])
def test_smoothed_regret_trend(metric):
    """Trend-level companion: the decay itself, independent of Monte Carlo wiggles."""
    records = two_by_two_runs("alpha_ig")
    curve = smoothed(np.mean([getattr(r, metric) for r in records], axis=0))
    assert curve[-1] < 0.1 < curve[0]
    assert np.max(np.diff(curve)) < 0.02
    quarters = [q.mean() for q in np.array_split(curve, 4)]
    assert all(a > b for a, b in zip(quarters, quarters[1:]))


# --------------------------------------------------------------------------
# 5. RG-UCB correctness rate
# --------------------------------------------------------------------------


@pytest.mark.criterion(5)
def test_rg_ucb_correct_ordering_rate():
    env = matrix_game([[0.5, 0.8], [0.2, 0.5]])
    params = Hyperparameters(n_r=1, delta=0.1)
    start = time.perf_counter()
    correct = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        state = SamplerState(2, params)
        for _ in range(100_000):
            entry = rg_ucb_step(state)
            if entry is None:
                break
            state.record(entry, observe_many(env, entry, 1, rng))
        else:
            pytest.fail(f"seed {seed} did not terminate")
        means = state.empirical_means()
        correct += bool(means[1] > means[2])
    assert time.perf_counter() - start < 60
    print(f"correct ordering in {correct}/200 runs")
    assert correct >= 180


# --------------------------------------------------------------------------
# 6. oracle equivalences
# --------------------------------------------------------------------------


@pytest.mark.criterion(6)
def test_stationary_matches_linear_solve():
    rng = np.random.default_rng(6)
    for _ in range(100):
        n = int(rng.integers(2, 30))
        chain = rng.random((n, n)) + 1e-3
        chain /= chain.sum(axis=1, keepdims=True)
        a = np.vstack([chain.T - np.eye(n), np.ones((1, n))])
        b = np.zeros(n + 1)
        b[-1] = 1.0
        oracle = np.linalg.lstsq(a, b, rcond=None)[0]
        np.testing.assert_allclose(stationary_distribution(chain), oracle, rtol=0, atol=1e-8)


@pytest.mark.criterion(6)
def test_wasserstein_matches_assignment_enumeration():
    rng = np.random.default_rng(66)
    perms = np.array(list(itertools.permutations(range(6))))
    for _ in range(50):
        s = int(rng.integers(2, 6))
        x = rng.dirichlet(np.ones(s), size=6)
        y = rng.dirichlet(np.ones(s), size=6)
        cost = tv_cost(x, y)
        oracle = cost[np.arange(6), perms].mean(axis=1).min()
        assert wasserstein_tv(RankSampleSet(x), RankSampleSet(y)) == pytest.approx(oracle, abs=1e-9)


@pytest.mark.criterion(6)
def test_conditioning_matches_closed_form():
    rng = np.random.default_rng(666)
    for _ in range(1000):
        n = int(rng.integers(1, 7))
        a = rng.standard_normal((n, n))
        cov = a @ a.T / n + 0.1 * np.eye(n)
        mean = rng.standard_normal(n)
        noise = float(rng.uniform(0.05, 2.0))
        idx = rng.integers(0, n, size=int(rng.integers(1, 8)))
        obs = rng.standard_normal(idx.size)
        belief = GaussianBelief(mean, cov, noise, shape=(n,))
        for i, y in zip(idx, obs):
            belief = condition(belief, int(i), float(y))
        k_aa = cov[np.ix_(idx, idx)] + noise * np.eye(idx.size)
        gain = np.linalg.solve(k_aa, cov[:, idx].T).T
        np.testing.assert_allclose(belief.mean, mean + gain @ (obs - mean[idx]), rtol=0, atol=1e-10)
        np.testing.assert_allclose(belief.cov, cov - gain @ cov[:, idx].T, rtol=0, atol=1e-10)


# --------------------------------------------------------------------------
# 7. theory utilities
# --------------------------------------------------------------------------


@pytest.mark.criterion(7)
def test_entropy_bound():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n = int(rng.integers(2, 12))
        p = rng.dirichlet(np.ones(n) * rng.uniform(0.1, 3.0))
        nz = p[p > 0]
        h = float(-(nz * np.log(nz)).sum())
        for p_i in p:
            assert h <= entropy_upper_bound(float(p_i), n) + 1e-12
    assert entropy_upper_bound(1.0, 4) == 0.0
    assert entropy_upper_bound(0.5, 2) == pytest.approx(binary_entropy(0.5)) == pytest.approx(np.log(2))


@pytest.mark.criterion(7)
@pytest.mark.xfail(strict=True, reason="default params: T*exp(g(T)) stays capped at 1 until T is about 1e11")
def test_regret_bound_small_at_one_million():
    params = TheoryParams()
    horizons = np.geomspace(1e6, 1e14, 40)
    values = np.array([regret_bound(params, t) for t in horizons])
    assert np.all(np.diff(values[values < 1.0]) < 0)
    assert values[-1] < 1e-6
    assert regret_bound(params, 1e6) < 1e-6


# --------------------------------------------------------------------------
# 8. permutation property
# --------------------------------------------------------------------------


@pytest.mark.criterion(8)
def test_permutation_property():
    rng = np.random.default_rng(8)
    start = time.perf_counter()
    for _ in range(200):
        s = int(rng.integers(2, 8))
        m1 = rng.random((s, s))
        signs = np.sign(m1 - m1.T)
        base = rng.random((s, s)) * 3.0
        gap = rng.random((s, s)) + 0.01
        # fresh magnitudes and diagonal, same sign of every M(j, i) - M(i, j)
        m2 = np.triu(base, 1) + np.tril(base.T, -1) + 0.5 * signs * (gap + gap.T)
        np.fill_diagonal(m2, rng.random(s))
        np.testing.assert_array_equal(np.sign(m2 - m2.T), signs)
        assert np.abs(alpha_rank(m1) - alpha_rank(m2)).sum() < 1e-8
    assert time.perf_counter() - start < 30


# --------------------------------------------------------------------------
# 9. prior-knowledge benefit
# --------------------------------------------------------------------------


@pytest.mark.slow
@pytest.mark.criterion(9)
def test_block_kernel_needs_fewer_queries():
    def first_zero(records):
        assert all(r.error is None for r in records)
        return np.array([np.inf if r.first_zero_jm() is None else r.first_zero_jm() for r in records])

    block = first_zero(prior_runs("block_antisymmetric"))
    independent = first_zero(prior_runs("independent"))
    print(f"queries to J^M = 0: block {block.tolist()}, independent {independent.tolist()}")
    assert np.median(block) < np.median(independent)


# --------------------------------------------------------------------------
# 10. determinism
# --------------------------------------------------------------------------


@pytest.mark.criterion(10)
@pytest.mark.parametrize("sampler", ["alpha_ig", "alpha_wass", "payoff_ig", "uniform", "rg_ucb"])
def test_run_csv_byte_identical(tmp_path, sampler, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(f'{{"preset": "2g2b", "sampler": {{"type": "{sampler}", "n_e": 4, "n_b": 200}}, '
                   f'"budget": 200, "eval_points": 20, "eval_samples": 300}}')
    outputs = []
    for out in ("a", "b"):
        assert cli.main(["run", str(cfg), "--out", str(tmp_path / out), "--seed", "7"]) == 0
        (path,) = (tmp_path / out).glob("*.csv")
        outputs.append(path.read_bytes())
    capsys.readouterr()
    assert outputs[0] == outputs[1]
    assert outputs[0].count(b"\n") == 22
