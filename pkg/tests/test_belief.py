import numpy as np
import pytest

from alpharank_ig.belief import (BeliefError, GaussianBelief, KernelSpec, block_antisymmetric_kernel, block_of,
                                 condition, condition_many, condition_repeated, hallucinate_observation,
                                 pair_difference_root, pair_slots, prior, sample_entries, sample_matrices,
                                 sample_pair_differences, sample_payoff, transpose_permutation)
from alpharank_ig.core import codes_from_differences, comparison_codes


def closed_form_posterior(mean, cov, idx, obs, noise):
    """Joint conjugate update on all observations at once."""
    idx = np.asarray(idx)
    k_aa = cov[np.ix_(idx, idx)] + noise * np.eye(idx.size)
    k_xa = cov[:, idx]
    gain = np.linalg.solve(k_aa, k_xa.T).T
    return mean + gain @ (np.asarray(obs) - mean[idx]), cov - gain @ k_xa.T


def random_spd(rng, n):
    a = rng.standard_normal((n, n))
    return a @ a.T / n + 0.1 * np.eye(n)


class TestPrior:
    def test_independent(self):
        b = prior(KernelSpec("independent", mu0=0.5, sigma0_sq=2.0), 9, 0.5)
        np.testing.assert_array_equal(b.mean, np.full(9, 0.5))
        np.testing.assert_array_equal(b.cov, 2.0 * np.eye(9))
        assert b.independent and b.shape == (3, 3)

    def test_block_kernel_structure(self):
        n_good, n_bad = 3, 5
        s = n_good + n_bad
        cov = block_antisymmetric_kernel(n_good, n_bad)
        np.testing.assert_allclose(cov, cov.T)
        assert np.min(np.linalg.eigvalsh(cov)) > -1e-12
        e = lambda x, y: x * s + y  # noqa: E731
        # good-vs-bad entries move together; their transposes move opposite
        assert cov[e(0, 3), e(0, 3)] > 0
        corr = cov[e(0, 3), e(2, 7)] / cov[e(0, 3), e(0, 3)]
        np.testing.assert_allclose(corr, 1.0)
        np.testing.assert_allclose(cov[e(0, 3), e(3, 0)] / cov[e(0, 3), e(0, 3)], -1.0)
        # bad-vs-bad is pinned by anti-symmetry and block equality
        np.testing.assert_allclose(cov[e(4, 5), e(4, 5)], 0.0, atol=1e-15)
        # self-play is its own transpose
        np.testing.assert_allclose(cov[e(1, 1), e(1, 1)], 0.0, atol=1e-15)

    def test_identity_top_left_gives_good_block_variance(self):
        cov = block_antisymmetric_kernel(3, 5, top_left="identity")
        const = block_antisymmetric_kernel(3, 5, top_left="constant")
        s = 8
        assert cov[0 * s + 1, 0 * s + 1] > 0
        np.testing.assert_allclose(const[0 * s + 1, 0 * s + 1], 0.0, atol=1e-15)

    def test_antisymmetric_samples(self, rng):
        b = prior(KernelSpec("block_antisymmetric", n_good=2, n_bad=2), 16, 0.5)
        m = sample_matrices(b, 50, rng)
        # exact up to the factorisation jitter
        np.testing.assert_allclose(m + np.transpose(m, (0, 2, 1)), 1.0, atol=1e-3)
        assert np.std(m[:, 0, 2]) > 0.1

    def test_block_labels(self):
        assert [block_of(0, 1, 3), block_of(0, 4, 3), block_of(4, 0, 3), block_of(5, 6, 3)] == [1, 2, 3, 4]

    def test_transpose_permutation(self):
        t = transpose_permutation(3)
        np.testing.assert_array_equal(t[t], np.arange(9))
        assert t[1] == 3

    def test_spec_roundtrip(self):
        spec = KernelSpec("block_antisymmetric", n_good=3, n_bad=5)
        assert KernelSpec.from_dict(spec.to_dict()) == spec

    @pytest.mark.parametrize("doc", [{"kind": "rbf"}, {"kind": "block_antisymmetric"},
                                     {"kind": "independent", "sigma0_sq": 0.0}])
    def test_invalid_spec(self, doc):
        with pytest.raises(ValueError):
            KernelSpec.from_dict(doc)

    def test_block_kernel_size_mismatch(self):
        with pytest.raises(ValueError):
            prior(KernelSpec("block_antisymmetric", n_good=2, n_bad=2), 25, 0.5)


class TestConditioning:
    def test_scalar_closed_form(self):
        b = GaussianBelief(np.array([0.5]), np.array([[1.0]]), 0.5)
        post = condition(b, 0, 1.0)
        np.testing.assert_allclose(post.mean, [0.5 + (1.0 / 1.5) * 0.5])
        np.testing.assert_allclose(post.cov, [[1.0 * 0.5 / 1.5]])

    def test_sequence_matches_joint_update(self, rng):
        for _ in range(50):
            n = 4
            mean, cov = rng.standard_normal(n), random_spd(rng, n)
            noise = rng.uniform(0.1, 1.0)
            idx = rng.integers(0, n, size=6)
            obs = rng.standard_normal(6)
            b = GaussianBelief(mean, cov, noise)
            for i, y in zip(idx, obs):
                b = condition(b, int(i), y)
            m_ref, c_ref = closed_form_posterior(mean, cov, idx, obs, noise)
            np.testing.assert_allclose(b.mean, m_ref, atol=1e-10)
            np.testing.assert_allclose(b.cov, c_ref, atol=1e-10)

    def test_repeated_equals_loop(self, rng):
        b = GaussianBelief(rng.random(4), random_spd(rng, 4), 0.5)
        loop = b
        for _ in range(100):
            loop = condition(loop, 2, 0.7)
        once = condition_repeated(b, 2, 0.7, 100)
        np.testing.assert_allclose(once.mean, loop.mean, atol=1e-10)
        np.testing.assert_allclose(once.cov, loop.cov, atol=1e-10)

    def test_many_equals_loop(self, rng):
        b = prior(KernelSpec(), 4, 0.25)
        obs = rng.random(10)
        loop = b
        for y in obs:
            loop = condition(loop, (1, 0), y)
        batch = condition_many(b, 2, obs)
        np.testing.assert_allclose(batch.mean, loop.mean, atol=1e-12)
        np.testing.assert_allclose(batch.cov, loop.cov, atol=1e-12)

    def test_independent_only_touches_entry(self):
        b = prior(KernelSpec(), 9, 0.5)
        post = condition(b, 4, 1.0)
        changed = np.nonzero(post.mean != b.mean)[0]
        np.testing.assert_array_equal(changed, [4])

    def test_correlated_entries_move(self):
        cov = np.array([[1.0, 0.8], [0.8, 1.0]])
        post = condition(GaussianBelief(np.zeros(2), cov, 0.1, shape=(2,)), 0, 1.0)
        assert post.mean[1] > 0

    def test_zero_variance_entry_stays(self):
        b = GaussianBelief(np.array([0.5, 0.5]), np.diag([0.0, 1.0]), 0.5, shape=(2,))
        post = condition(b, 0, 3.0)
        assert post.mean[0] == 0.5

    def test_tuple_entry(self):
        b = prior(KernelSpec(), 9, 0.5)
        np.testing.assert_array_equal(condition(b, (1, 2), 1.0).mean, condition(b, 5, 1.0).mean)

    def test_invalid(self):
        b = prior(KernelSpec(), 4, 0.5)
        with pytest.raises(IndexError):
            condition(b, 7, 0.0)
        with pytest.raises(ValueError):
            condition(b, 0, np.inf)
        with pytest.raises(ValueError):
            condition_repeated(b, 0, 0.0, 0)

    def test_immutable(self):
        b = prior(KernelSpec(), 4, 0.5)
        with pytest.raises(ValueError):
            b.mean[0] = 2.0


class TestSampling:
    def test_moments(self, rng):
        cov = random_spd(rng, 3)
        b = GaussianBelief(np.array([1.0, -1.0, 0.0]), cov, 0.5, shape=(3,))
        x = sample_entries(b, 200_000, rng)
        np.testing.assert_allclose(x.mean(axis=0), b.mean, atol=0.02)
        np.testing.assert_allclose(np.cov(x.T), cov, atol=0.02)

    def test_singular_covariance_factor(self, rng):
        v = rng.standard_normal(4)
        b = GaussianBelief(np.zeros(4), np.outer(v, v), 0.5)
        x = sample_entries(b, 10, rng)
        assert np.all(np.isfinite(x))

    def test_unfactorisable(self):
        cov = np.array([[1.0, 2.0], [2.0, 1.0]])
        b = GaussianBelief(np.zeros(2), cov, 0.5, shape=(2,))
        with pytest.raises(BeliefError):
            _ = b.factor

    def test_hallucination_variance(self, rng):
        b = prior(KernelSpec(sigma0_sq=1.0), 4, 0.5)
        draws = np.array([hallucinate_observation(b, 0, rng) for _ in range(20_000)])
        np.testing.assert_allclose(draws.var(), 1.5, rtol=0.05)

    def test_sample_payoff_shape(self, rng):
        p = sample_payoff(prior(KernelSpec(), 9, 0.5), rng)
        assert p.matrix.shape == (3, 3)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            GaussianBelief(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]), 0.5)


class TestPairDifferences:
    def test_moments_match_full_draws(self, rng):
        cov = random_spd(rng, 9)
        b = GaussianBelief(rng.random(9), cov, 0.5)
        lo, hi = pair_slots(3)
        full = sample_entries(b, 200_000, rng)
        ref = full[:, hi] - full[:, lo]
        got = sample_pair_differences(b, 200_000, rng)
        np.testing.assert_allclose(got.mean(axis=0), ref.mean(axis=0), atol=0.02)
        np.testing.assert_allclose(np.cov(got.T), np.cov(ref.T), atol=0.03)

    def test_root_reproduces_covariance(self, rng):
        cov = random_spd(rng, 16)
        lo, hi = pair_slots(4)
        d = np.zeros((6, 16))
        d[np.arange(6), hi] += 1.0
        d[np.arange(6), lo] -= 1.0
        root = pair_difference_root(cov, 4)
        np.testing.assert_allclose(root @ root.T, d @ cov @ d.T, atol=1e-12)

    def test_pinned_pairs_are_exact_ties(self, rng):
        b = prior(KernelSpec("block_antisymmetric", n_good=2, n_bad=2), 16, 0.5)
        diffs = sample_pair_differences(b, 1000, rng)
        # pair (2, 3) is bad-vs-bad: fixed at 0.5 each by the kernel
        np.testing.assert_array_equal(diffs[:, 5], 0.0)
        assert np.std(diffs[:, 1]) > 0.1

    def test_independent_variance(self, rng):
        b = prior(KernelSpec(sigma0_sq=2.0), 9, 0.5)
        diffs = sample_pair_differences(b, 100_000, rng)
        np.testing.assert_allclose(diffs.var(axis=0), 4.0, rtol=0.03)

    def test_codes_agree_with_matrix_codes(self, rng):
        m = rng.random((50, 5, 5))
        m[:, 1, 3] = m[:, 3, 1]
        lo, hi = pair_slots(5)
        flat = m.reshape(50, 25)
        np.testing.assert_array_equal(codes_from_differences(flat[:, hi] - flat[:, lo]), comparison_codes(m))

    def test_needs_square(self, rng):
        b = GaussianBelief(np.zeros(3), np.eye(3), 0.5, shape=(3,))
        with pytest.raises(ValueError):
            sample_pair_differences(b, 2, rng)
