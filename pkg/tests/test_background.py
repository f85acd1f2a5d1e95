import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from maphdr.background import (LINEAR, PAIRWISE, CompletionError, MrfWeights, background_level,
                               complete_background, decompose, noise_edge, noise_sigma, residual_sigma,
                               standardized_residual, support_energy, svt, update_support)
from maphdr.pipeline import decomposition_inputs
from maphdr.synthetic import MovingRect, SceneSpec, generate_synthetic
from oracles import brute_force_support, labels_energy, svt_oracle, two_pass_std


def low_rank(rng, K, rank, N=3):
    return rng.normal(size=(K, rank)) @ rng.normal(size=(rank, N)) + 5.0


class TestSvt:
    @given(arrays(float, (30, 3), elements=st.floats(-10, 10)), st.floats(0, 20))
    def test_matches_full_svd(self, Y, tau):
        assert np.allclose(svt(Y, tau), svt_oracle(Y, tau), atol=1e-7)

    def test_large_threshold_zeroes(self, rng):
        Y = rng.normal(size=(50, 3))
        assert np.all(svt(Y, 1e6) == 0)


class TestCompleteBackground:
    def test_rank1_recovery(self, rng):
        D = np.outer(rng.uniform(1, 2, 2000), rng.uniform(1, 2, 3))
        omega = rng.random(D.shape) < 0.6
        omega[omega.sum(axis=1) == 0, 0] = True
        B = complete_background(D, omega, 1e-6 * np.linalg.norm(D))
        assert np.linalg.norm(B - D) / np.linalg.norm(D) < 1e-4

    def test_full_observation_no_threshold(self, rng):
        D = rng.normal(size=(100, 3))
        assert np.allclose(complete_background(D, np.ones_like(D, bool), 0.0), D, atol=1e-10)

    @staticmethod
    def _rank2_two_per_row(rng, K=1000):
        D = rng.normal(size=(K, 2)) @ rng.normal(size=(2, 3))
        omega = rng.random(D.shape) < 0.6
        for i in np.nonzero(omega.sum(axis=1) < 2)[0]:
            omega[i, rng.choice(3, 2, replace=False)] = True
        return D, omega

    @pytest.mark.xfail(strict=True, reason="nuclear-norm minimum is not the planted matrix; see decisions ledger")
    def test_rank2_held_out(self, rng):
        D, omega = self._rank2_two_per_row(rng)
        B = complete_background(D, omega, 1e-6 * np.linalg.norm(D))
        held = ~omega
        assert np.linalg.norm((B - D)[held]) / np.linalg.norm(D[held]) < 1e-3

    def test_rank2_minimizer_beats_planted_matrix(self, rng):
        # why the held-out test above fails: the solver fits Omega and finds a smaller nuclear norm
        D, omega = self._rank2_two_per_row(rng)
        B = complete_background(D, omega, 1e-6 * np.linalg.norm(D), max_iters=20000)
        fit = np.linalg.norm(np.where(omega, B - D, 0.0)) / np.linalg.norm(D[omega])
        nuc = lambda X: np.linalg.svd(X, compute_uv=False).sum()
        assert fit < 1e-5
        assert nuc(B) < 0.99 * nuc(D)

    def test_empty_column_rejected(self, rng):
        D = rng.normal(size=(10, 3))
        omega = np.ones_like(D, bool)
        omega[:, 1] = False
        with pytest.raises(CompletionError, match="fully ill-exposed"):
            complete_background(D, omega, 0.1)

    @given(st.integers(0, 2 ** 31 - 1), st.floats(0.5, 5.0))
    def test_fixed_point_and_rank(self, seed, alpha):
        rng = np.random.default_rng(seed)
        D = low_rank(rng, 200, 2) + 0.01 * rng.normal(size=(200, 3))
        omega = rng.random(D.shape) < 0.7
        omega[0] = True
        tol = 1e-7
        B = complete_background(D, omega, alpha, max_iters=500, tol=tol)
        assert np.linalg.matrix_rank(B) <= 3
        step = svt(np.where(omega, D, B), alpha)
        assert np.linalg.norm(step - B) <= 10 * tol * max(np.linalg.norm(B), 1e-12)

    def test_small_alpha_needs_more_iterations(self, rng):
        # a nearly flat objective: the fixed point is reached, only slowly
        D = low_rank(rng, 200, 2) + 0.01 * rng.normal(size=(200, 3))
        omega = rng.random(D.shape) < 0.7
        omega[0] = True
        B = complete_background(D, omega, 0.01, max_iters=20000, tol=1e-7)
        step = svt(np.where(omega, D, B), 0.01)
        assert np.linalg.norm(step - B) <= 1e-6 * np.linalg.norm(B)

    @pytest.mark.xfail(strict=True, reason="nuclear-norm minimum is not the planted matrix; see decisions ledger")
    def test_shifted_copies_half_observed(self, rng):
        a = rng.uniform(1, 2, 1000)
        D = np.stack([a, a + 0.5, a - 0.3], axis=1)  # rank 2: every column is a shifted copy of the first
        omega = rng.random(D.shape) < 0.5
        empty = omega.sum(axis=1) == 0
        omega[empty, rng.integers(0, 3, empty.sum())] = True
        B = complete_background(D, omega, 1e-6 * np.linalg.norm(D))
        held = ~omega
        assert np.linalg.norm((B - D)[held]) / np.linalg.norm(D[held]) < 1e-3


class TestResidualSigma:
    def test_zero_when_exact(self, rng):
        D = rng.normal(size=(20, 3))
        assert residual_sigma(D, D, np.ones_like(D, bool)) == 0.0

    def test_pair(self):
        D = np.array([[-1.0], [1.0]])
        assert residual_sigma(D, np.zeros_like(D), np.ones_like(D, bool)) == pytest.approx(np.sqrt(2))

    def test_matches_two_pass(self, rng):
        D = rng.normal(3, 2, size=(1000, 1))
        assert residual_sigma(D, np.zeros_like(D), np.ones_like(D, bool)) == pytest.approx(
            two_pass_std(D.ravel()), abs=1e-12)

    def test_needs_two_entries(self):
        with pytest.raises(ValueError):
            residual_sigma(np.ones((2, 1)), np.zeros((2, 1)), np.array([[True], [False]]))


class TestUpdateSupport:
    def test_exact_background_gives_empty_support(self, rng):
        D = rng.normal(size=(16, 3))
        S = update_support(D, D, np.ones_like(D, bool), (4, 4), MrfWeights(20, 20, 0.1, 0.1))
        assert not S.any()

    def test_isolated_outlier(self):
        D = np.zeros((9, 1))
        D[4, 0] = 3.0  # unary 4.5 against beta 1 + gamma * 4 * w_s = 3
        w = MrfWeights(1.0, 1.0, 1.0, 0.5)
        M = np.ones_like(D, bool)
        S = update_support(D, np.zeros_like(D), M, (3, 3), w)
        best, energies = brute_force_support(D, np.zeros_like(D), M, (3, 3), 1.0, 1.0, 1.0, 0.5)
        assert S[:, 0].tolist() == [False] * 4 + [True] + [False] * 4
        assert labels_energy(S, energies) == pytest.approx(best)

    @pytest.mark.parametrize("prior", [PAIRWISE, LINEAR])
    def test_brute_force_small(self, prior):
        rng = np.random.default_rng(7)
        for _ in range(25):
            D = rng.normal(0, 2, (4, 3))
            M = rng.random(D.shape) < 0.8
            w_s, w_t, beta, gamma = rng.uniform(0, 2, 4)
            S = update_support(D, np.zeros_like(D), M, (2, 2), MrfWeights(w_s, w_t, beta, gamma), prior)
            best, energies = brute_force_support(D, np.zeros_like(D), M, (2, 2), w_s, w_t, beta, gamma,
                                                 pairwise=prior == PAIRWISE)
            assert labels_energy(S, energies) == pytest.approx(best, abs=1e-9)
            assert support_energy(S, D, 0, M, (2, 2), MrfWeights(w_s, w_t, beta, gamma), prior) == \
                pytest.approx(best, abs=1e-9)

    @given(st.integers(0, 2 ** 31 - 1))
    def test_not_worse_than_trivial_supports(self, seed):
        rng = np.random.default_rng(seed)
        D = rng.normal(0, 2, (36, 3))
        M = rng.random(D.shape) < 0.8
        w = MrfWeights(*rng.uniform(0, 2, 4))
        S = update_support(D, np.zeros_like(D), M, (6, 6), w)
        e = support_energy(S, D, 0, M, (6, 6), w)
        assert e <= support_energy(np.zeros_like(M), D, 0, M, (6, 6), w) + 1e-9
        assert e <= support_energy(M, D, 0, M, (6, 6), w) + 1e-9

    def test_unknown_prior(self):
        with pytest.raises(ValueError):
            update_support(np.ones((4, 1)), 0, np.ones((4, 1), bool), (2, 2), MrfWeights(), "bogus")

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            MrfWeights(-1.0, 1.0, 1.0, 1.0)


class TestNoiseModel:
    def test_level_is_precision_weighted_mean(self):
        D = np.array([[1.0, 2.0, 4.0]])
        P = np.array([[1.0, 1.0, 2.0]])
        level, seen = background_level(D, np.ones_like(D, bool), P)
        assert level[0] == pytest.approx((1 + 2 + 8) / 4) and seen[0]

    def test_level_fallbacks(self):
        D = np.array([[1.0, 3.0, 5.0], [1.0, 3.0, 5.0]])
        omega = np.zeros_like(D, bool)
        M = np.array([[False, True, False], [False, False, False]])
        level, seen = background_level(D, omega, None, M)
        assert level.tolist() == [3.0, 3.0] and not seen.any()

    def test_single_observation_has_no_residual(self):
        D = np.array([[1.0, 7.0, 9.0]])
        omega = np.array([[True, False, False]])
        R, free = standardized_residual(D, np.array([[1.0]]), omega, np.ones_like(omega))
        assert not free.any()
        assert R[0, 0] == 0 and R[0, 1] == pytest.approx(6.0)

    def test_standardized_residual_unit_variance(self, rng):
        P = rng.uniform(1, 100, (20000, 3))
        D = rng.normal(size=P.shape) / np.sqrt(P)
        omega = np.ones_like(D, bool)
        level, _ = background_level(D, omega, P)
        R, free = standardized_residual(D, level[:, None], omega, omega, P)
        assert free.all()
        assert np.std(R) == pytest.approx(1.0, abs=0.02)

    def test_noise_edge_floor(self):
        D = np.zeros((100, 3))
        M = np.ones_like(D, bool)
        assert noise_edge(D, M) == pytest.approx(np.sqrt(1 / 12) * (10 + np.sqrt(3)))


def synthetic_window(r=4, **scene):
    seq = generate_synthetic(SceneSpec(**scene))
    D, M, P = decomposition_inputs(seq.frames[r - 1:r + 2], seq.crf)
    spec = seq.spec
    return D, M, P, (spec.height, spec.width), np.stack([m.ravel() for m in seq.masks[r - 1:r + 2]], axis=1)


class TestDecompose:
    def test_static_scene_has_no_support(self, rng):
        col = np.log(rng.uniform(1, 100, 64))
        D = np.stack([col] * 3, axis=1)
        dec = decompose(D, np.ones_like(D, bool), (8, 8))
        assert not dec.S.any() and dec.iterations <= 2

    def test_support_does_not_run_away(self):
        # residual spread after the fit is far below the noise; beta tracking it alone labels the whole frame
        rect = MovingRect(10.0, 6.0, 8, 8, 3.0, 2.0)
        D, M, P, shape, _ = synthetic_window(r=1, width=48, height=40, frames=3, rects=(rect,))
        dec = decompose(D, M, shape, precision=P)
        assert dec.omega.any(axis=0).all()
        assert dec.S.mean() < 0.1
        assert dec.sigma >= noise_sigma(D, M, P)

    def test_static_synthetic_scene(self):
        rect = MovingRect(40.0, 20.0, 12, 12, 0.0, 0.0)
        D, M, P, shape, _ = synthetic_window(width=64, height=48, frames=5, rects=(rect,))
        dec = decompose(D, M, shape, precision=P)
        assert dec.S.mean() < 0.01 and dec.iterations <= 2

    def test_moving_square(self):
        D, M, P, shape, truth = synthetic_window()
        dec = decompose(D, M, shape, precision=P)
        # recall is scored where the object is observable in the well-exposed window
        visible = truth & M
        assert dec.S[visible].mean() >= 0.9
        assert dec.S[~truth].mean() <= 0.05

    def test_single_outer_iteration(self):
        D, M, P, shape, _ = synthetic_window(width=64, height=48, frames=5)
        calls = []
        dec = decompose(D, M, shape, precision=P, outer_iters=1, callback=lambda *a: calls.append(a[0]))
        assert dec.iterations == 1 and calls == [1] and len(dec.history) == 1

    def test_omega_is_mask_without_support(self):
        D, M, P, shape, _ = synthetic_window(width=64, height=48, frames=5)
        seen = []
        dec = decompose(D, M, shape, precision=P, callback=lambda it, B, S, om: seen.append((S, om)))
        for S, om in seen:
            assert np.array_equal(om, M & ~S)
        assert np.array_equal(dec.omega, M & ~dec.S)

    def test_fixed_weights_are_used(self):
        D, M, P, shape, _ = synthetic_window(width=64, height=48, frames=5)
        w = MrfWeights(1.0, 1.0, 1e9, 0.0)
        dec = decompose(D, M, shape, precision=P, fixed_weights=w)
        assert dec.weights is w and not dec.S.any()

    def test_fully_ill_exposed_frame_fails(self):
        D = np.zeros((16, 3))
        M = np.ones_like(D, bool)
        M[:, 0] = False
        with pytest.raises(CompletionError):
            decompose(D, M, (4, 4))

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            decompose(np.zeros((16, 3)), np.ones((16, 3), bool), (4, 5))
        with pytest.raises(ValueError):
            decompose(np.zeros((16, 3)), np.ones((16, 2), bool), (4, 4))
