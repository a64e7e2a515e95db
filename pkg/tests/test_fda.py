import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.interpolate import make_smoothing_spline

import oracles
from fsim.fda import (
    _LAMBDA_GRID,
    CurveSet,
    _reinsch_operators,
    fpca,
    impute_sparse,
    inner_product,
    l2_distances,
    project,
    semimetric_deriv,
    semimetric_pca,
    smooth_derivatives,
    trapezoid_weights,
)

unit = np.linspace(0, 1, 1001)


def random_curves(rng, n=12, T=40):
    t = np.linspace(0, 1, T)
    coef = rng.normal(size=(n, 4))
    basis = np.vstack([np.ones(T), t, np.sin(2 * np.pi * t), np.cos(3 * np.pi * t)])
    return CurveSet(t, coef @ basis + 0.05 * rng.normal(size=(n, T)))


class TestCurveSet:
    def test_rejects_non_increasing_grid(self):
        with pytest.raises(ValueError):
            CurveSet([0.0, 0.5, 0.5], np.zeros((2, 3)))

    def test_rejects_single_point_grid(self):
        with pytest.raises(ValueError):
            CurveSet([0.0], np.zeros((2, 1)))

    def test_rejects_wrong_row_length(self):
        with pytest.raises(ValueError):
            CurveSet([0.0, 1.0], np.zeros((2, 3)))

    def test_sparse_needs_two_points(self):
        mask = np.array([[True, False, False], [True, True, False]])
        with pytest.raises(ValueError):
            CurveSet([0, 0.5, 1], np.ones((2, 3)), mask)

    def test_values_are_read_only(self):
        c = CurveSet([0, 1], np.ones((2, 2)))
        with pytest.raises(ValueError):
            c.values[0, 0] = 5

    def test_masked_entries_ignored_by_quadrature(self):
        grid = np.linspace(0, 1, 5)
        vals = np.array([[1.0, 1.0, 99.0, 1.0, 1.0]])
        mask = np.array([[True, True, False, True, True]])
        c = CurveSet(grid, vals, mask)
        assert c.inner(np.ones(5))[0] == pytest.approx(1.0)


class TestInnerProduct:
    def test_unit_constant(self):
        assert inner_product(np.ones(11), np.ones(11), np.linspace(0, 1, 11)) == pytest.approx(1.0, abs=1e-14)

    def test_sin_cos_orthogonal(self):
        assert abs(inner_product(np.sin(2 * np.pi * unit), np.cos(2 * np.pi * unit), unit)) < 1e-6

    def test_sin_squared(self):
        s = np.sin(np.pi * unit)
        assert inner_product(s, s, unit) == pytest.approx(0.5, abs=1e-6)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            inner_product(np.ones(3), np.ones(4), np.linspace(0, 1, 3))

    def test_matches_loop_trapezoid(self, rng):
        grid = np.sort(rng.uniform(0, 1, 30))
        f, g = rng.normal(size=30), rng.normal(size=30)
        assert inner_product(f, g, grid) == pytest.approx(oracles.trapezoid(f * g, grid), rel=1e-12)

    def test_weights_sum_to_span(self):
        grid = np.array([0.1, 0.3, 0.35, 0.9])
        assert trapezoid_weights(grid).sum() == pytest.approx(0.8)

    @settings(max_examples=50, deadline=None)
    @given(
        arrays(float, 20, elements=st.floats(-10, 10)),
        arrays(float, 20, elements=st.floats(-10, 10)),
        arrays(float, 20, elements=st.floats(-10, 10)),
        st.floats(-5, 5),
    )
    def test_bilinear_and_symmetric(self, f, g, k, a):
        grid = np.linspace(0, 1, 20)
        assert inner_product(f, g, grid) == pytest.approx(inner_product(g, f, grid), abs=1e-12)
        lhs = inner_product(a * f + k, g, grid)
        rhs = a * inner_product(f, g, grid) + inner_product(k, g, grid)
        assert lhs == pytest.approx(rhs, abs=1e-12 * (1 + abs(lhs)) + 1e-9)


class TestFpca:
    def test_identical_curves_zero_eigenvalues(self):
        t = np.linspace(0, 1, 20)
        c = CurveSet(t, np.tile(np.sin(t), (6, 1)))
        basis = fpca(c, 3)
        np.testing.assert_array_equal(basis.eigenvalues, 0.0)
        np.testing.assert_allclose(basis.scores, 0.0, atol=1e-14)

    def test_rank_one(self, rng):
        t = np.linspace(0, 1, 30)
        shape = np.cos(np.pi * t)
        vals = np.sin(t) + rng.normal(size=(10, 1)) * shape
        evals = fpca(CurveSet(t, vals), 5).eigenvalues
        assert evals[0] > 0
        np.testing.assert_array_equal(evals[1:], 0.0)

    def test_orthonormality(self, rng):
        c = random_curves(rng)
        basis = fpca(c, 6)
        W = trapezoid_weights(c.grid)
        gram = (basis.eigenfunctions * W) @ basis.eigenfunctions.T
        np.testing.assert_allclose(gram, np.eye(6), atol=1e-8)

    def test_eigenvalues_sorted_and_nonnegative(self, rng):
        evals = fpca(random_curves(rng), 8).eigenvalues
        assert np.all(np.diff(evals) <= 1e-15)
        assert np.all(evals >= -1e-10)

    def test_scores_are_inner_products(self, rng):
        c = random_curves(rng)
        basis = fpca(c, 4)
        centered = c.values - basis.mean
        for i in range(c.n):
            for k in range(4):
                expect = inner_product(centered[i], basis.eigenfunctions[k], c.grid)
                assert basis.scores[i, k] == pytest.approx(expect, abs=1e-10)

    def test_full_reconstruction(self, rng):
        c = random_curves(rng, n=12, T=8)
        basis = fpca(c, min(c.n - 1, c.T))
        err = np.linalg.norm(basis.reconstruct() - c.values) / np.linalg.norm(c.values - basis.mean)
        assert err < 1e-6

    def test_total_variance_is_trace(self, rng):
        c = random_curves(rng)
        basis = fpca(c, 5)
        centered = c.values - c.values.mean(axis=0)
        trace = sum(inner_product(r, r, c.grid) for r in centered) / (c.n - 1)
        assert basis.total_variance == pytest.approx(trace, rel=1e-6)

    def test_k_too_large(self, rng):
        c = random_curves(rng, n=5)
        with pytest.raises(ValueError):
            fpca(c, 5)

    def test_sparse_rejected(self):
        mask = np.array([[True, True, False], [True, False, True], [True, True, True]])
        with pytest.raises(ValueError):
            fpca(CurveSet([0, 0.5, 1], np.ones((3, 3)), mask), 1)

    def test_project_training_curves_recovers_scores(self, rng):
        c = random_curves(rng)
        basis = fpca(c, 3)
        np.testing.assert_allclose(project(basis, c.values), basis.scores, atol=1e-12)


class TestImputeSparse:
    def test_dense_identity(self, rng):
        c = random_curves(rng)
        np.testing.assert_array_equal(impute_sparse(c).values, c.values)

    def test_linear_midpoint(self):
        grid = np.array([0.0, 0.5, 1.0])
        c = CurveSet(grid, np.array([[0.0, np.nan, 1.0]]), np.array([[True, False, True]]))
        assert impute_sparse(c).values[0, 1] == pytest.approx(0.5)

    def test_constant_extrapolation(self):
        grid = np.array([0.1, 0.2, 0.5, 0.8, 0.9])
        c = CurveSet(grid, np.array([[np.nan, 3.0, np.nan, 7.0, np.nan]]), np.array([[0, 1, 0, 1, 0]], bool))
        out = impute_sparse(c).values[0]
        assert out[0] == 3.0 and out[-1] == 7.0
        assert not impute_sparse(c).is_sparse


def assert_semimetric(d):
    np.testing.assert_array_equal(d, d.T)
    np.testing.assert_array_equal(np.diag(d), 0.0)
    assert np.all(d >= 0)
    n = d.shape[0]
    for i in range(n):
        for j in range(n):
            assert np.all(d[i, j] <= d[i, :] + d[:, j] + 1e-10)


class TestSemimetrics:
    def test_pca_matches_brute_force(self, rng):
        c = random_curves(rng, n=5)
        d = semimetric_pca(c, 3)
        s = fpca(c, 3).scores
        for i in range(5):
            for j in range(5):
                assert d[i, j] == pytest.approx(np.sqrt(np.sum((s[i] - s[j]) ** 2)), abs=1e-10)

    def test_pca_identical_curves(self, rng):
        c = random_curves(rng, n=6)
        vals = c.values.copy()
        vals[3] = vals[1]
        d = semimetric_pca(CurveSet(c.grid, vals), 3)
        assert d[1, 3] == 0.0

    @pytest.mark.parametrize("which", ["pca", "deriv1", "deriv2"])
    def test_semimetric_axioms(self, rng, which):
        c = random_curves(rng, n=9)
        d = semimetric_pca(c, 3) if which == "pca" else semimetric_deriv(c, int(which[-1]))
        assert_semimetric(d)

    def test_deriv_ignores_constants(self, rng):
        t = np.linspace(0, 1, 50)
        base = np.sin(3 * t) + 0.3 * t**2
        d = semimetric_deriv(CurveSet(t, np.vstack([base, base + 4.0])), 1)
        assert d[0, 1] <= 1e-6

    def test_deriv_linear_pair(self):
        t = np.linspace(0, 1, 50)
        d = semimetric_deriv(CurveSet(t, np.vstack([t, 2 * t])), 1)
        assert d[0, 1] == pytest.approx(1.0, abs=0.05)

    def test_deriv_identical(self, rng):
        c = random_curves(rng, n=3)
        vals = np.vstack([c.values[0], c.values[0]])
        assert semimetric_deriv(CurveSet(c.grid, vals), 2)[0, 1] == 0.0

    def test_deriv_grid_too_small(self):
        with pytest.raises(ValueError):
            semimetric_deriv(CurveSet([0, 0.5, 1], np.ones((2, 3))), 2)

    def test_deriv_order_checked(self, rng):
        with pytest.raises(ValueError):
            semimetric_deriv(random_curves(rng), 3)

    def test_l2_cross_rows_match_square(self, rng):
        c = random_curves(rng, n=6)
        full = l2_distances(c.values, None, c.grid)
        cross = l2_distances(c.values[:2], c.values, c.grid)
        np.testing.assert_allclose(cross, full[:2], atol=1e-12)


class TestSmoothingSpline:
    @pytest.mark.parametrize("j", [5, 20, 30])
    def test_hat_matrix_matches_scipy(self, rng, j):
        grid = np.linspace(0, 1, 40)
        hats, _, _, _ = _reinsch_operators(grid)
        lams = _LAMBDA_GRID
        y = np.sin(5 * grid) + 0.1 * rng.normal(size=grid.size)
        ours = hats[j] @ y
        ref = make_smoothing_spline(grid, y, lam=lams[j])(grid)
        np.testing.assert_allclose(ours, ref, atol=1e-7)

    def test_first_derivative_matches_scipy(self, rng):
        grid = np.linspace(0, 1, 40)
        _, d1, _, _ = _reinsch_operators(grid)
        lams = _LAMBDA_GRID
        y = np.cos(4 * grid) + 0.05 * rng.normal(size=grid.size)
        ref = make_smoothing_spline(grid, y, lam=lams[20]).derivative(1)(grid)
        np.testing.assert_allclose(d1[20] @ y, ref, atol=1e-5)

    def test_order_zero_smooths_noise(self, rng):
        t = np.linspace(0, 1, 80)
        truth = np.sin(2 * np.pi * t)
        noisy = truth + 0.2 * rng.normal(size=(5, t.size))
        fit = smooth_derivatives(CurveSet(t, noisy), 0)
        assert np.mean((fit - truth) ** 2) < np.mean((noisy - truth) ** 2)

    def test_second_derivative_of_quadratic(self):
        t = np.linspace(0, 1, 60)
        d2 = smooth_derivatives(CurveSet(t, np.vstack([3 * t**2])), 2)
        np.testing.assert_allclose(d2[0, 5:-5], 6.0, rtol=0.05)
