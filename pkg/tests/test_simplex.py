import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from protoreg.exceptions import InvalidArgumentError, NumericalError
from protoreg.simplex import (project_columns, project_to_simplex, qp_objective, solve_simplex_qp,
                              solve_simplex_qp_batch)

from conftest import exact_simplex_qp, qp_value, random_psd

METHODS = ["active-set", "apg"]
finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def bisection_projection(v):
    # Independent oracle: the projection is max(v - theta, 0) with theta solving sum = 1.
    lo, hi = v.min() - 1.0, v.max()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.maximum(v - mid, 0).sum() > 1.0:
            lo = mid
        else:
            hi = mid
    return np.maximum(v - 0.5 * (lo + hi), 0)


class TestProjection:
    @pytest.mark.parametrize("v, expected", [([0.5, 0.5], [0.5, 0.5]), ([2, 0], [1, 0]), ([1, 1], [0.5, 0.5])])
    def test_examples(self, v, expected):
        np.testing.assert_allclose(project_to_simplex(v), expected, atol=1e-15)

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(InvalidArgumentError):
            project_to_simplex([])
        with pytest.raises(InvalidArgumentError):
            project_to_simplex([1.0, np.nan])
        with pytest.raises(InvalidArgumentError):
            project_to_simplex([np.inf, 0.0])

    @given(arrays(float, st.integers(1, 12), elements=finite))
    def test_matches_bisection_oracle(self, v):
        w = project_to_simplex(v)
        assert np.all(w >= 0)
        assert abs(w.sum() - 1) < 1e-12
        np.testing.assert_allclose(w, bisection_projection(v), atol=1e-9)

    @given(arrays(float, st.integers(1, 10), elements=st.floats(0, 1)))
    def test_idempotent_on_feasible_points(self, v):
        if v.sum() == 0:
            v = np.ones_like(v)
        v = v / v.sum()
        w = project_to_simplex(v)
        np.testing.assert_allclose(project_to_simplex(w), w, atol=1e-15, rtol=0)
        np.testing.assert_allclose(w, v, atol=1e-15, rtol=0)

    def test_no_feasible_grid_point_is_closer(self):
        rng = np.random.default_rng(7)
        grid = np.array([[a / 100, 1 - a / 100] for a in range(101)])
        grid3 = np.array([[a / 100, b / 100, 1 - (a + b) / 100]
                          for a in range(101) for b in range(101 - a)])
        for _ in range(10_000):
            d = int(rng.integers(2, 4))
            v = rng.normal(scale=2.0, size=d)
            w = project_to_simplex(v)
            g = grid if d == 2 else grid3
            assert np.min(np.sum((g - v) ** 2, axis=1)) >= np.sum((w - v) ** 2) - 1e-12

    def test_columns(self):
        V = np.array([[2.0, 0.2], [0.0, 0.3], [-1.0, 0.5]])
        W = project_columns(V)
        for c in range(2):
            np.testing.assert_allclose(W[:, c], project_to_simplex(V[:, c]))


class TestSolve:
    @pytest.mark.parametrize("method", METHODS)
    def test_examples(self, method):
        np.testing.assert_allclose(solve_simplex_qp(np.eye(2), np.zeros(2), method=method), [0.5, 0.5], atol=1e-9)
        np.testing.assert_allclose(solve_simplex_qp(np.zeros((3, 3)), [0.3, 0.1, 0.2], method=method), [0, 1, 0])
        np.testing.assert_allclose(solve_simplex_qp(np.eye(2), [-1.0, 0.0], method=method), [1, 0], atol=1e-9)

    def test_linear_tie_goes_to_lowest_index(self):
        np.testing.assert_array_equal(solve_simplex_qp(np.zeros((3, 3)), [0.2, 0.1, 0.1]), [0, 1, 0])

    def test_single_variable(self):
        np.testing.assert_array_equal(solve_simplex_qp([[3.0]], [1.0]), [1.0])

    def test_errors(self):
        with pytest.raises(InvalidArgumentError):
            solve_simplex_qp(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2))
        with pytest.raises(InvalidArgumentError):
            solve_simplex_qp(np.eye(2), np.zeros(3))
        with pytest.raises(InvalidArgumentError):
            solve_simplex_qp(np.eye(2), np.zeros(2), method="newton")
        # The uniform start is stationary for q = 0, so break the symmetry to move off it.
        for method in METHODS:
            with pytest.raises(NumericalError):
                solve_simplex_qp(-np.eye(3), [0.1, 0.0, -0.05], method=method)

    @pytest.mark.parametrize("method", METHODS)
    def test_matches_exact_oracle(self, method):
        rng = np.random.default_rng(11)
        for _ in range(200):
            d = int(rng.integers(2, 7))
            Q = random_psd(rng, d, rank=int(rng.integers(1, d + 1)))
            q = rng.normal(size=d) * 3
            w = solve_simplex_qp(Q, q, method=method)
            _, f_star = exact_simplex_qp(Q, q)
            assert np.all(w >= 0) and abs(w.sum() - 1) < 1e-12
            assert qp_value(Q, q, w) <= f_star + 1e-8 * (1 + abs(f_star))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 8))
    def test_not_worse_than_uniform_start(self, seed, d):
        rng = np.random.default_rng(seed)
        Q = random_psd(rng, d)
        q = rng.normal(size=d)
        u = np.full(d, 1.0 / d)
        for method in METHODS:
            w = solve_simplex_qp(Q, q, method=method)
            assert qp_value(Q, q, w) <= qp_value(Q, q, u) + 1e-12

    def test_warm_start_never_worse(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            Q = random_psd(rng, 5)
            q = rng.normal(size=5)
            w0 = project_to_simplex(rng.normal(size=5))
            w = solve_simplex_qp(Q, q, w0=w0, max_iter=2)
            assert qp_value(Q, q, w) <= qp_value(Q, q, w0) + 1e-12

    def test_batch_columns_independent(self):
        rng = np.random.default_rng(5)
        Q = random_psd(rng, 4)
        q = rng.normal(size=(4, 6))
        W = solve_simplex_qp_batch(Q, q)
        for c in range(6):
            np.testing.assert_array_equal(W[:, c], solve_simplex_qp(Q, q[:, c]))
        np.testing.assert_allclose(qp_objective(Q, q, W), [qp_value(Q, q[:, c], W[:, c]) for c in range(6)])

    def test_methods_agree_on_objective(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            d = 30
            Q = random_psd(rng, d, rank=3)
            q = rng.normal(size=d)
            fa = qp_value(Q, q, solve_simplex_qp(Q, q, method="active-set"))
            fb = qp_value(Q, q, solve_simplex_qp(Q, q, method="apg", tol=1e-12, max_iter=100_000))
            assert abs(fa - fb) <= 1e-7 * (1 + abs(fa))
