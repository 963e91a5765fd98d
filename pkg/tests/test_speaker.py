"""Background-model EM, Baum-Welch statistics, and i-vector extraction."""

import numpy as np
import pytest
from scipy.linalg import subspace_angles

from beamfuse.errors import DataFormatError
from beamfuse.speaker import (
    BwStats,
    TMatrix,
    Ubm,
    accumulate_stats,
    extract_ivector,
    log_likelihood,
    read_tmatrix,
    read_ubm,
    responsibilities,
    train_tmatrix,
    train_ubm,
    write_tmatrix,
    write_ubm,
)
from beamfuse.speaker.total_variability import RIDGE, _solve_normal_equations


def two_cluster_frames(n_per=500, seed=0):
    rng = np.random.default_rng(seed)
    lo = rng.normal(-5.0, 0.3, size=(n_per, 2))
    hi = rng.normal(5.0, 0.3, size=(n_per, 2))
    return np.vstack([lo, hi])


class TestUbmTraining:
    def test_single_component_closed_form(self):
        rng = np.random.default_rng(7)
        frames = rng.normal(1.5, 2.0, size=(400, 3))
        model = train_ubm(frames, n_components=1, iters=5, seed=0)
        assert model.weights.shape == (1,)
        np.testing.assert_allclose(model.weights, [1.0], atol=1e-12)
        np.testing.assert_allclose(model.means[0], frames.mean(axis=0), atol=1e-9)
        np.testing.assert_allclose(model.variances[0], frames.var(axis=0), atol=1e-9)

    def test_two_separated_clusters(self):
        frames = two_cluster_frames()
        model = train_ubm(frames, n_components=2, iters=25, seed=3)
        order = np.argsort(model.means[:, 0])
        np.testing.assert_allclose(model.means[order][0], [-5.0, -5.0], atol=0.05)
        np.testing.assert_allclose(model.means[order][1], [5.0, 5.0], atol=0.05)
        np.testing.assert_allclose(model.weights, [0.5, 0.5], atol=0.02)

    def test_zero_iterations_returns_initialization(self):
        frames = two_cluster_frames(n_per=100)
        a = train_ubm(frames, n_components=3, iters=0, seed=11)
        b = train_ubm(frames, n_components=3, iters=0, seed=11)
        np.testing.assert_array_equal(a.means, b.means)
        np.testing.assert_array_equal(a.variances, b.variances)
        np.testing.assert_array_equal(a.weights, b.weights)
        assert len(a.log_likelihoods) == 1

    def test_history_length_and_monotonicity(self):
        frames = two_cluster_frames(n_per=150)
        for seed in (0, 1, 2):
            model = train_ubm(frames, n_components=4, iters=12, seed=seed)
            hist = np.array(model.log_likelihoods)
            assert len(hist) == 13
            diffs = np.diff(hist)
            assert np.all(diffs >= -1e-8 * np.abs(hist[:-1])), hist

    def test_responsibilities_are_a_distribution(self):
        frames = two_cluster_frames(n_per=80)
        model = train_ubm(frames, n_components=3, iters=4, seed=5)
        resp = responsibilities(model, frames)
        assert resp.shape == (len(frames), 3)
        assert np.all(resp >= 0.0)
        np.testing.assert_allclose(resp.sum(axis=1), 1.0, atol=1e-12)

    def test_more_components_than_frames_rejected(self):
        frames = np.zeros((3, 2))
        with pytest.raises(ValueError, match="3 frames"):
            train_ubm(frames, n_components=5)

    def test_non_2d_frames_rejected(self):
        with pytest.raises(ValueError, match="2-D"):
            train_ubm(np.zeros(10), n_components=1)

    def test_empty_frames_have_zero_log_likelihood(self):
        model = Ubm(np.array([1.0]), np.zeros((1, 2)), np.ones((1, 2)))
        assert log_likelihood(model, np.zeros((0, 2))) == 0.0

    def test_log_likelihood_matches_direct_sum(self):
        # one standard-normal component: LL is the sum of N(0, 1) log-densities
        model = Ubm(np.array([1.0]), np.zeros((1, 1)), np.ones((1, 1)))
        frames = np.array([[0.0], [1.0], [-2.0]])
        expect = sum(-0.5 * np.log(2 * np.pi) - 0.5 * x * x for x in (0.0, 1.0, -2.0))
        assert log_likelihood(model, frames) == pytest.approx(expect, abs=1e-12)


class TestBwStats:
    @pytest.fixture()
    def model(self):
        frames = two_cluster_frames(n_per=120, seed=4)
        return train_ubm(frames, n_components=2, iters=8, seed=4)

    def test_empty_utterance_gives_zero_stats(self, model):
        stats = accumulate_stats(model, np.zeros((0, 2)))
        np.testing.assert_array_equal(stats.n, np.zeros(2))
        np.testing.assert_array_equal(stats.f, np.zeros((2, 2)))

    def test_soft_counts_sum_to_frame_count(self, model):
        frames = two_cluster_frames(n_per=37, seed=9)
        stats = accumulate_stats(model, frames)
        assert stats.n.sum() == pytest.approx(len(frames), abs=1e-6)

    def test_frame_at_component_mean_centers_exactly(self, model):
        frame = model.means[0:1].copy()
        stats = accumulate_stats(model, frame)
        np.testing.assert_array_equal(stats.f[0], np.zeros(2))

    def test_accumulation_is_associative(self, model):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(50, 2))
        b = rng.normal(size=(30, 2))
        split = accumulate_stats(model, a) + accumulate_stats(model, b)
        joint = accumulate_stats(model, np.vstack([a, b]))
        np.testing.assert_allclose(split.n, joint.n, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(split.f, joint.f, rtol=1e-9, atol=1e-12)

    def test_dimension_mismatch_rejected(self, model):
        with pytest.raises(ValueError, match="dim"):
            accumulate_stats(model, np.zeros((4, 3)))


def unit_ubm(k, d):
    """Uniform-weight model with unit variances; means are irrelevant to
    the latent-factor algebra once stats are given."""
    return Ubm(np.full(k, 1.0 / k), np.zeros((k, d)), np.ones((k, d)))


def planted_stats(t_true, n_utts, seed):
    """Noise-free stats F_k = N_k T_k w drawn from the generative model."""
    k, d, r = t_true.shape
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_utts):
        w = rng.standard_normal(r)
        n = rng.uniform(5.0, 50.0, size=k)
        f = n[:, None] * (t_true @ w)
        out.append(BwStats(n, f))
    return out


class TestIvectorExtraction:
    def test_scalar_posterior_by_hand(self):
        # L = 1 + 1*1*1 = 2, b = 0.5, so the posterior mean is 0.25
        tmat = TMatrix(np.ones((1, 1, 1)))
        model = unit_ubm(1, 1)
        stats = BwStats(np.array([1.0]), np.array([[0.5]]))
        ivec = extract_ivector(tmat, model, stats)
        assert ivec.shape == (1,)
        assert ivec[0] == pytest.approx(0.25, abs=1e-12)

    def test_zero_stats_give_zero_vector(self):
        rng = np.random.default_rng(0)
        tmat = TMatrix(rng.standard_normal((3, 2, 2)))
        model = unit_ubm(3, 2)
        stats = BwStats(np.zeros(3), np.zeros((3, 2)))
        np.testing.assert_array_equal(extract_ivector(tmat, model, stats), np.zeros(2))

    def test_linear_in_first_order_stats(self):
        rng = np.random.default_rng(1)
        tmat = TMatrix(rng.standard_normal((2, 3, 2)))
        model = unit_ubm(2, 3)
        n = rng.uniform(1.0, 4.0, size=2)
        f1 = rng.standard_normal((2, 3))
        f2 = rng.standard_normal((2, 3))
        w1 = extract_ivector(tmat, model, BwStats(n, f1))
        w2 = extract_ivector(tmat, model, BwStats(n, f2))
        wsum = extract_ivector(tmat, model, BwStats(n, 2.0 * f1 - 3.0 * f2))
        np.testing.assert_allclose(wsum, 2.0 * w1 - 3.0 * w2, atol=1e-10)

    def test_component_permutation_invariance(self):
        rng = np.random.default_rng(5)
        k, d, r = 4, 2, 3
        t = rng.standard_normal((k, d, r))
        model = Ubm(np.full(k, 0.25), rng.standard_normal((k, d)),
                    rng.uniform(0.5, 2.0, size=(k, d)))
        stats = BwStats(rng.uniform(1.0, 9.0, size=k), rng.standard_normal((k, d)))
        perm = np.array([2, 0, 3, 1])
        permuted_model = Ubm(model.weights[perm], model.means[perm],
                             model.variances[perm])
        before = extract_ivector(TMatrix(t), model, stats)
        after = extract_ivector(TMatrix(t[perm]), permuted_model,
                                BwStats(stats.n[perm], stats.f[perm]))
        np.testing.assert_allclose(after, before, atol=1e-12)

    def test_non_finite_stats_rejected(self):
        tmat = TMatrix(np.ones((1, 1, 1)))
        model = unit_ubm(1, 1)
        with pytest.raises(ValueError, match="finite"):
            extract_ivector(tmat, model, BwStats(np.array([np.nan]), np.array([[0.0]])))


class TestTmatrixTraining:
    def test_zero_iterations_returns_init(self):
        model = unit_ubm(2, 2)
        stats = planted_stats(np.ones((2, 2, 1)), 6, seed=0)
        init = np.full((2, 2, 1), 0.3)
        tmat = train_tmatrix(stats, model, rank=1, iters=0, init=init)
        np.testing.assert_array_equal(tmat.t, init)
        assert len(tmat.objectives) == 1

    def test_seeded_init_is_deterministic(self):
        model = unit_ubm(2, 2)
        stats = planted_stats(np.ones((2, 2, 1)), 6, seed=0)
        a = train_tmatrix(stats, model, rank=1, iters=3, seed=42)
        b = train_tmatrix(stats, model, rank=1, iters=3, seed=42)
        np.testing.assert_array_equal(a.t, b.t)

    def test_objective_history_is_monotone(self):
        rng = np.random.default_rng(3)
        t_true = rng.standard_normal((3, 2, 2))
        model = unit_ubm(3, 2)
        stats = planted_stats(t_true, 40, seed=3)
        tmat = train_tmatrix(stats, model, rank=2, iters=12, seed=1)
        hist = np.array(tmat.objectives)
        assert len(hist) == 13
        diffs = np.diff(hist)
        assert np.all(diffs >= -1e-8 * np.abs(hist[:-1])), hist

    def test_recovers_planted_subspace(self):
        rng = np.random.default_rng(8)
        t_true = rng.standard_normal((3, 2, 2))
        model = unit_ubm(3, 2)
        stats = planted_stats(t_true, 60, seed=8)
        tmat = train_tmatrix(stats, model, rank=2, iters=30, seed=2)
        angle = subspace_angles(tmat.as_matrix, t_true.reshape(6, 2)).max()
        assert angle < 0.05, f"principal angle {angle:.4f}"

    def test_fit_improves_over_init(self):
        rng = np.random.default_rng(9)
        t_true = rng.standard_normal((2, 2, 2))
        model = unit_ubm(2, 2)
        stats = planted_stats(t_true, 30, seed=9)

        def reconstruction_error(tmat):
            total = 0.0
            for s in stats:
                w = extract_ivector(tmat, model, s)
                total += np.sum((s.f - s.n[:, None] * (tmat.t @ w)) ** 2)
            return total

        start = train_tmatrix(stats, model, rank=2, iters=0, seed=4)
        finish = train_tmatrix(stats, model, rank=2, iters=15, seed=4)
        assert reconstruction_error(finish) < reconstruction_error(start)

    def test_too_few_utterances_rejected(self):
        model = unit_ubm(2, 2)
        stats = planted_stats(np.ones((2, 2, 1)), 2, seed=0)
        with pytest.raises(ValueError, match="at least rank=3"):
            train_tmatrix(stats, model, rank=3, iters=1)

    def test_bad_init_shape_rejected(self):
        model = unit_ubm(2, 2)
        stats = planted_stats(np.ones((2, 2, 1)), 6, seed=0)
        with pytest.raises(ValueError, match="init shape"):
            train_tmatrix(stats, model, rank=1, iters=1, init=np.zeros((2, 2, 2)))

    def test_singular_normal_equations_fall_back_to_ridge(self):
        a = np.array([[1.0, 1.0], [1.0, 1.0]])
        c_t = np.array([[1.0], [1.0]])
        x = _solve_normal_equations(a, c_t)
        assert np.all(np.isfinite(x))
        np.testing.assert_allclose((a + RIDGE * np.eye(2)) @ x, c_t, atol=1e-9)
        np.testing.assert_allclose(x, 0.5, atol=1e-6)


class TestSpeakerFileio:
    def test_ubm_roundtrip_is_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        model = Ubm(np.array([0.25, 0.75]), rng.standard_normal((2, 3)),
                    rng.uniform(0.1, 2.0, size=(2, 3)))
        path = tmp_path / "bg.ubm"
        write_ubm(path, model)
        loaded = read_ubm(path)
        np.testing.assert_array_equal(loaded.weights, model.weights)
        np.testing.assert_array_equal(loaded.means, model.means)
        np.testing.assert_array_equal(loaded.variances, model.variances)

    def test_tmatrix_roundtrip_is_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        tmat = TMatrix(rng.standard_normal((3, 2, 4)))
        path = tmp_path / "loadings.tv"
        write_tmatrix(path, tmat)
        loaded = read_tmatrix(path)
        np.testing.assert_array_equal(loaded.t, tmat.t)
        assert loaded.rank == 4

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ubm"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(DataFormatError, match="not a UBM1"):
            read_ubm(path)
        with pytest.raises(DataFormatError, match="not a TMAT"):
            read_tmatrix(path)

    def test_truncated_payload_rejected(self, tmp_path):
        model = Ubm(np.array([1.0]), np.zeros((1, 2)), np.ones((1, 2)))
        path = tmp_path / "bg.ubm"
        write_ubm(path, model)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(DataFormatError, match="expected"):
            read_ubm(path)

    def test_trailing_garbage_rejected(self, tmp_path):
        tmat = TMatrix(np.zeros((1, 1, 1)))
        path = tmp_path / "loadings.tv"
        write_tmatrix(path, tmat)
        path.write_bytes(path.read_bytes() + b"xx")
        with pytest.raises(DataFormatError, match="expected"):
            read_tmatrix(path)
