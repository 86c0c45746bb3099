import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from protoreg.archetypes import (FitOptions, PrototypeModel, _restart_dead, encode, fit_archetypal,
                                 fit_prototypal, init_prototypes, objective, update_A, update_B)
from protoreg.exceptions import InvalidArgumentError
from protoreg.gram import gram_matrix
from protoreg.rng import SplitMix64

from conftest import exact_simplex_qp


def dense_objective(X, A, B, lam):
    # Coordinates oracle: prototypes and reconstructions materialized explicitly.
    U = B.T @ X
    total = 0.0
    for i, x in enumerate(X):
        total += np.sum((x - A[:, i] @ U) ** 2)
        total += lam * sum(A[j, i] * np.sum((x - U[j]) ** 2) for j in range(len(U)))
    return total


def random_stochastic(rng, rows, cols):
    M = rng.random((rows, cols))
    return M / M.sum(axis=0)


class TestObjective:
    def test_identities_give_zero(self):
        X = np.random.default_rng(0).normal(size=(5, 3))
        G = gram_matrix(X)
        for lam in (0.0, 0.3, 1e6):
            assert objective(G, np.eye(5), np.eye(5), lam) == pytest.approx(0.0, abs=1e-10)

    def test_two_points_hand_value(self):
        G = gram_matrix(np.array([[0.0], [2.0]]))
        A, B = np.ones((1, 2)), np.array([[0.5], [0.5]])
        assert objective(G, A, B, 0.0) == pytest.approx(2.0)
        assert objective(G, A, B, 0.7) == pytest.approx(2.0 + 0.7 * 2.0)

    def test_matches_dense_coordinates(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n, k, d = int(rng.integers(2, 15)), int(rng.integers(1, 5)), int(rng.integers(1, 4))
            X = rng.normal(size=(n, d))
            A, B = random_stochastic(rng, k, n), random_stochastic(rng, n, k)
            lam = float(rng.choice([0.0, 0.05, 1.0, 10.0]))
            assert objective(gram_matrix(X), A, B, lam) == pytest.approx(dense_objective(X, A, B, lam), rel=1e-10, abs=1e-10)

    def test_shape_errors(self):
        G = np.eye(3)
        with pytest.raises(InvalidArgumentError):
            objective(G, np.ones((2, 4)), np.ones((3, 2)) / 3, 0.0)
        with pytest.raises(InvalidArgumentError):
            objective(G, np.ones((2, 3)) / 2, np.ones((3, 3)) / 3, 0.0)


class TestUpdateA:
    def test_point_on_prototype_is_one_hot(self):
        X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.3, 0.3]])
        G = gram_matrix(X)
        B = np.zeros((4, 3))
        B[[0, 1, 2], [0, 1, 2]] = 1.0
        A = update_A(G, B, 0.1)
        np.testing.assert_allclose(A[:, :3], np.eye(3), atol=1e-9)

    def test_single_prototype(self):
        G = gram_matrix(np.random.default_rng(2).normal(size=(6, 2)))
        np.testing.assert_array_equal(update_A(G, np.full((6, 1), 1 / 6), 0.0), np.ones((1, 6)))

    def test_large_lambda_picks_nearest(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(20, 2))
        G = gram_matrix(X)
        B = random_stochastic(rng, 20, 4)
        U = B.T @ X
        A = update_A(G, B, 1e6)
        nearest = np.argmin(((X[:, None, :] - U[None]) ** 2).sum(-1), axis=1)
        np.testing.assert_array_equal(np.argmax(A, axis=0), nearest)
        assert np.all(A.max(axis=0) > 1 - 1e-6)

    def test_columns_match_exact_oracle(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(15, 3))
        G = gram_matrix(X).entries
        for lam in (0.0, 0.5):
            B = random_stochastic(rng, 15, 4)
            A = update_A(G, B, lam)
            BGB = B.T @ G @ B
            D = np.diag(G)[:, None] - 2 * G @ B + np.diag(BGB)[None, :]
            for i in range(15):
                q = -2 * (G @ B)[i] + lam * D[i]
                _, f_star = exact_simplex_qp(2 * BGB, q)
                assert 0.5 * A[:, i] @ (2 * BGB) @ A[:, i] + q @ A[:, i] <= f_star + 1e-9


class TestUpdateB:
    def test_identity_is_optimal(self):
        G = gram_matrix(np.random.default_rng(5).normal(size=(5, 2)))
        B = update_B(G, np.eye(5), 0.0)
        assert objective(G, np.eye(5), B, 0.0) == pytest.approx(0.0, abs=1e-9)

    def test_single_prototype_large_lambda_uniform(self):
        # A full-rank Gram makes the minimizer unique: the uniform mixture (mean embedding).
        X = np.random.default_rng(6).normal(size=(6, 2))
        G = gram_matrix(X, "gaussian:1")
        B = update_B(G, np.ones((1, 6)), 1e6, tol=1e-12)
        np.testing.assert_allclose(B[:, 0], np.full(6, 1 / 6), atol=1e-6)

    def test_sweep_does_not_increase_objective(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            X = rng.normal(size=(6, 2))
            G = gram_matrix(X)
            A, B = random_stochastic(rng, 2, 6), random_stochastic(rng, 6, 2)
            lam = float(rng.choice([0.0, 0.05, 1.0]))
            before = objective(G, A, B, lam)
            after = objective(G, A, update_B(G, A, lam, B0=B), lam)
            assert after <= before + 1e-12 * (1 + abs(before))

    def test_dead_columns_untouched(self):
        G = gram_matrix(np.random.default_rng(8).normal(size=(4, 2)))
        A = np.zeros((2, 4))
        A[0] = 1.0
        B0 = np.full((4, 2), 0.25)
        B0[:, 1] = [0.1, 0.2, 0.3, 0.4]
        np.testing.assert_array_equal(update_B(G, A, 0.1, B0=B0)[:, 1], B0[:, 1])


class TestFit:
    def test_k_equals_n(self):
        X = np.random.default_rng(9).normal(size=(6, 2))
        model = fit_prototypal(gram_matrix(X), 6, 0.0)
        assert model.objective < 1e-8

    def test_two_points_large_lambda(self):
        G = gram_matrix(np.array([[0.0], [2.0]]))
        model = fit_prototypal(G, 1, 1e6)
        np.testing.assert_allclose(model.B[:, 0], [0.5, 0.5], atol=1e-3)
        assert model.objective == pytest.approx(1e6 * 2 + 2, rel=1e-9)

    def test_unit_square_corners(self):
        X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        model = fit_archetypal(gram_matrix(X), 4)
        assert model.objective < 1e-8
        np.testing.assert_allclose(np.sort(model.B, axis=0)[::-1][0], np.ones(4), atol=1e-6)
        assert sorted(np.argmax(model.B, axis=0)) == [0, 1, 2, 3]

    @pytest.mark.parametrize("lam", [0.0, 0.3])
    def test_single_prototype_is_barycenter(self, lam):
        X = np.random.default_rng(10).normal(size=(12, 3))
        model = fit_prototypal(gram_matrix(X), 1, lam)
        np.testing.assert_allclose(model.B[:, 0] @ X, X.mean(axis=0), atol=1e-6)
        spread = np.sum((X - X.mean(axis=0)) ** 2)
        assert model.objective == pytest.approx((1 + lam) * spread, rel=1e-9)

    def test_archetypal_equals_prototypal_at_zero(self):
        G = gram_matrix(np.random.default_rng(11).normal(size=(30, 2)))
        a = fit_archetypal(G, 4, FitOptions(seed=3))
        b = fit_prototypal(G, 4, 0.0, FitOptions(seed=3))
        assert a.objective_trace == b.objective_trace

    def test_feasibility_and_trace(self):
        rng = np.random.default_rng(12)
        X = rng.normal(size=(40, 3))
        G = gram_matrix(X)
        model = fit_prototypal(G, 5, 0.2)
        for M in (model.A, model.B):
            assert M.min() >= 0
            np.testing.assert_allclose(M.sum(axis=0), 1.0, atol=1e-12)
        assert model.objective == pytest.approx(objective(G, model.A, model.B, 0.2), rel=1e-12)
        assert model.objective == pytest.approx(dense_objective(X, model.A, model.B, 0.2), rel=1e-9)
        np.testing.assert_allclose(model.BGB, model.B.T @ G.entries @ model.B, atol=1e-12)

    def test_deterministic(self):
        G = gram_matrix(np.random.default_rng(13).normal(size=(25, 2)))
        a = fit_prototypal(G, 3, 0.1, FitOptions(seed=5))
        b = fit_prototypal(G, 3, 0.1, FitOptions(seed=5))
        np.testing.assert_array_equal(a.A, b.A)
        np.testing.assert_array_equal(a.B, b.B)

    @pytest.mark.parametrize("k, lam", [(0, 0.1), (7, 0.1), (2, -1.0), (2, np.nan), (1.5, 0.1)])
    def test_invalid_arguments(self, k, lam):
        with pytest.raises(InvalidArgumentError):
            fit_prototypal(np.eye(6), k, lam)

    def test_invalid_options(self):
        for kwargs in ({"tol": 0}, {"max_outer_iter": 0}, {"seed": -1}, {"qp_tol": -1.0}):
            with pytest.raises(InvalidArgumentError):
                FitOptions(**kwargs)
        with pytest.raises(InvalidArgumentError):
            fit_prototypal(np.eye(3), 2, 0.1, FitOptions(qp_method="simplex"))

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 6), st.sampled_from([0.0, 0.05, 1.0, 1e6]))
    def test_monotone_trace(self, seed, k, lam):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(int(rng.integers(k, 30)), 2))
        tr = fit_prototypal(gram_matrix(X), k, lam, FitOptions(seed=seed)).objective_trace
        for a, b in zip(tr, tr[1:]):
            assert b <= a + 1e-10 * (1 + abs(a))


class TestInit:
    def test_distinct_and_deterministic(self):
        G = gram_matrix(np.random.default_rng(14).normal(size=(30, 2))).entries
        idx = init_prototypes(G, 6, seed=2)
        assert len(set(idx)) == 6
        assert idx == init_prototypes(G, 6, seed=2)

    def test_matches_reference_sampling(self):
        # Independent rendition of D^2 sampling driven by the same generator.
        X = np.random.default_rng(15).normal(size=(25, 2))
        rng = SplitMix64(4)
        chosen = [rng.randbelow(25)]
        while len(chosen) < 5:
            d2 = np.array([min(np.sum((x - X[c]) ** 2) for c in chosen) for x in X])
            d2[chosen] = 0.0
            target = rng.random() * d2.sum()
            acc = 0.0
            for i, w in enumerate(d2):
                acc += w
                if acc > target and w > 0:
                    chosen.append(i)
                    break
        assert init_prototypes(gram_matrix(X).entries, 5, seed=4) == chosen

    def test_duplicates_fall_back_to_unused_points(self):
        G = np.ones((4, 4))
        assert sorted(init_prototypes(G, 4, seed=0)) == [0, 1, 2, 3]


class TestRestart:
    def test_restart_leaves_objective_unchanged(self):
        rng = np.random.default_rng(16)
        X = rng.normal(size=(10, 2))
        G = gram_matrix(X).entries
        A = random_stochastic(rng, 3, 10)
        A[2] = 0.0
        A /= A.sum(axis=0)
        B = random_stochastic(rng, 10, 3)
        B2 = _restart_dead(G, A, B)
        assert objective(G, A, B2, 0.4) == pytest.approx(objective(G, A, B, 0.4), rel=1e-12)
        assert B2[:, 2].max() == 1.0


class TestEncode:
    def _model(self, X, B, lam):
        G = gram_matrix(X).entries
        return PrototypeModel(A=np.zeros((B.shape[1], len(X))), B=B, lam=lam, BGB=B.T @ G @ B), G

    def test_training_prototype_is_one_hot(self):
        X = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
        B = np.zeros((4, 3))
        B[[0, 1, 2], [0, 1, 2]] = 1.0
        model, G = self._model(X, B, 0.1)
        np.testing.assert_allclose(encode(model, G[1], G[1, 1]), [0, 1, 0], atol=1e-9)

    def test_single_prototype(self):
        model, G = self._model(np.array([[1.0], [3.0]]), np.array([[0.5], [0.5]]), 0.0)
        np.testing.assert_array_equal(encode(model, G[0], G[0, 0]), [1.0])

    def test_midpoint_symmetric(self):
        X = np.array([[-1.0], [1.0], [0.0]])
        B = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        model, _ = self._model(X, B, 0.0)
        g0 = X @ np.array([0.0])
        np.testing.assert_allclose(encode(model, g0, 0.0), [0.5, 0.5], atol=1e-9)

    def test_batch_and_lambda_override(self):
        rng = np.random.default_rng(17)
        X = rng.normal(size=(20, 2))
        G = gram_matrix(X)
        model = fit_prototypal(G, 4, 0.1)
        Z = rng.normal(size=(5, 2))
        W = encode(model, X @ Z.T, np.sum(Z**2, axis=1))
        for c in range(5):
            np.testing.assert_allclose(W[:, c], encode(model, X @ Z[c], Z[c] @ Z[c]), atol=1e-12)
        hard = encode(model, X @ Z.T, np.sum(Z**2, axis=1), lam=1e6)
        assert np.all(hard.max(axis=0) > 1 - 1e-6)

    def test_wrong_length(self):
        model = fit_prototypal(np.eye(3), 2, 0.1)
        with pytest.raises(InvalidArgumentError):
            encode(model, np.zeros(4), 0.0)
