import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from grpkmax import (
    DimensionError,
    DivergenceError,
    GroupedDesign,
    PenaltySpec,
    PowerIterationWarning,
    SolveOptions,
    lipschitz_estimate,
    soft_threshold,
    solve,
    solve_path,
    stationary_residual,
)
from grpkmax.solver import group_gap
from strategies import PROPERTY, designs, penalties


def identity_design(y):
    y = np.asarray(y, dtype=float)
    return GroupedDesign.from_matrix(np.eye(y.size), (y.size,), y)


class TestOptions:
    @pytest.mark.parametrize("kwargs", [{"max_iters": 0}, {"tol": 0.0}, {"step_mode": "fixed"}, {"max_iters": 2.5}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SolveOptions(**kwargs)


class TestLipschitz:
    def test_identity(self):
        assert lipschitz_estimate(np.eye(6)) == pytest.approx(1.0, abs=1e-6)

    def test_scaled_identity(self):
        assert lipschitz_estimate(2 * np.eye(6)) == pytest.approx(4.0, abs=1e-5)

    def test_random_matches_eigensolver(self, rng):
        A = rng.standard_normal((20, 30))
        top = np.linalg.eigvalsh(A.T @ A).max()
        assert lipschitz_estimate(A) == pytest.approx(top, rel=1e-4)

    def test_design_input(self, small_design):
        top = np.linalg.eigvalsh(small_design.matrix.T @ small_design.matrix).max()
        assert lipschitz_estimate(small_design) == pytest.approx(top, rel=1e-4)

    def test_not_below_true_value_by_much(self, rng):
        for _ in range(20):
            A = rng.standard_normal((15, 10))
            top = np.linalg.eigvalsh(A.T @ A).max()
            assert lipschitz_estimate(A) >= top * (1 - 1e-4)

    def test_non_convergence_warns(self, rng):
        A = rng.standard_normal((20, 30))
        with pytest.warns(PowerIterationWarning):
            est = lipschitz_estimate(A, max_iter=2)
        assert est > 0


class TestSolveExamples:
    def test_zero_response(self, small_design):
        design = small_design.with_response(np.zeros(small_design.n))
        for spec in (PenaltySpec("lasso", 1.0), PenaltySpec("group-kmax", 1.0, k=(1, 2, 3))):
            res = solve(design, spec)
            assert res.iterations == 1
            assert res.terminated_by == "tolerance"
            assert not res.x.flat.any()

    @pytest.mark.parametrize("step", ["unit", "lipschitz"])
    def test_identity_k_zero_is_soft_threshold(self, rng, step):
        y = 3 * rng.standard_normal(8)
        res = solve(identity_design(y), PenaltySpec("group-kmax", 1.0, k=(0,)), SolveOptions(step_mode=step, tol=1e-12))
        # x = S(x + gamma (y - x), gamma lam) has the same solution for every gamma in (0, 1]
        np.testing.assert_allclose(res.x.flat, soft_threshold(y, 1.0), atol=1e-8)

    def test_identity_strict_full_is_least_squares(self, rng):
        y = rng.standard_normal(6)
        spec = PenaltySpec("group-kmax", 5.0, k=(6,), strict_full=True)
        res = solve(identity_design(y), spec, SolveOptions(tol=1e-12))
        np.testing.assert_allclose(res.x.flat, y, atol=1e-8)

    def test_large_lambda_zero(self, small_design):
        lam = np.abs(small_design.matrix.T @ small_design.response).max() * 1.01
        res = solve(small_design, PenaltySpec("lasso", lam))
        assert not res.x.flat.any()
        assert res.terminated_by == "tolerance"

    def test_unit_step(self, small_design):
        res = solve(small_design, PenaltySpec("lasso", 1.0), SolveOptions(step_mode="unit", max_iters=3))
        assert res.gamma == 1.0

    def test_divergence(self, rng):
        design = GroupedDesign.from_matrix(10 * rng.standard_normal((20, 5)), (5,), rng.standard_normal(20))
        with pytest.raises(DivergenceError) as info:
            solve(design, PenaltySpec("lasso", 0.0), SolveOptions(step_mode="unit", max_iters=10_000))
        assert info.value.iteration > 1

    def test_dimension_errors(self, small_design):
        with pytest.raises(DimensionError):
            solve(small_design, PenaltySpec("group-kmax", 1.0, k=(1, 1)))
        with pytest.raises(DimensionError):
            solve(small_design, PenaltySpec("lasso", 1.0), x0=np.zeros(3))

    def test_max_iters(self, small_design):
        res = solve(small_design, PenaltySpec("lasso", 0.1), SolveOptions(max_iters=2, tol=1e-15))
        assert res.iterations == 2
        assert res.terminated_by == "max_iters"

    def test_trace_lengths(self, small_design):
        res = solve(small_design, PenaltySpec("group-lasso", 1.0), SolveOptions(record_trace=True))
        assert len(res.iterates) == res.iterations + 1
        assert len(res.objective_trace) == res.iterations + 1
        assert len(res.iterate_gap_trace) == res.iterations
        assert res.iterate_gap_trace[-1] == res.final_gap

    def test_initial_point(self, small_design):
        res = solve(small_design, PenaltySpec("lasso", 0.0), SolveOptions(record_trace=True, max_iters=1))
        x0 = res.gamma * small_design.matrix.T @ small_design.response
        np.testing.assert_allclose(res.iterates[0], x0, rtol=1e-14, atol=1e-15)


class TestSolvePath:
    def test_single_lambda_matches_solve(self, small_design):
        spec = PenaltySpec("group-kmax", 2.0, k=(1, 2, 0))
        (path_res,) = solve_path(small_design, spec, [2.0])
        res = solve(small_design, spec)
        np.testing.assert_array_equal(path_res.x.flat, res.x.flat)
        assert path_res.iterations == res.iterations

    def test_lambda_zero_least_squares(self, small_design):
        (res,) = solve_path(small_design, PenaltySpec("lasso", 0.0), [0.0], SolveOptions(tol=1e-12, max_iters=20_000))
        x_ls = np.linalg.lstsq(small_design.matrix, small_design.response, rcond=None)[0]
        np.testing.assert_allclose(res.x.flat, x_ls, atol=1e-4)

    def test_warm_start(self, small_design):
        spec = PenaltySpec("lasso", 0.0)
        lams = [8.0, 4.0, 2.0, 1.0]
        warm = solve_path(small_design, spec, lams)
        cold = solve_path(small_design, spec, lams, warm_start=False)
        assert sum(r.iterations for r in warm) <= sum(r.iterations for r in cold)
        for w, c in zip(warm, cold):
            np.testing.assert_allclose(w.x.flat, c.x.flat, atol=1e-2)

    def test_sparsity_decreases_along_increasing_lambda(self, small_design):
        results = solve_path(small_design, PenaltySpec("lasso", 0.0), np.linspace(0.1, 60.0, 8))
        nnz = [np.count_nonzero(r.x.flat) for r in results]
        assert nnz[-1] <= nnz[0]

    def test_invalid_grid(self, small_design):
        with pytest.raises(ValueError):
            solve_path(small_design, PenaltySpec("lasso", 0.0), [])
        with pytest.raises(ValueError):
            solve_path(small_design, PenaltySpec("lasso", 0.0), [1.0, -1.0])


class TestSolverProperties:
    @PROPERTY
    @given(st.data())
    def test_fixed_point_consistency(self, data):
        design = data.draw(designs())
        spec = data.draw(penalties(design.sizes))
        options = SolveOptions(tol=1e-4, max_iters=500)
        res = solve(design, spec, options)
        assert res.iterations <= options.max_iters
        if res.terminated_by == "tolerance":
            assert res.final_gap <= options.tol
            assert stationary_residual(design, res.x, spec, res.gamma) <= 10 * options.tol

    @PROPERTY
    @given(designs(), st.floats(0.0, 5.0), st.sampled_from(["unit", "lipschitz"]))
    def test_reduction_to_lasso(self, design, lam, step):
        options = SolveOptions(step_mode=step, record_trace=True, max_iters=200)
        try:
            lasso = solve(design, PenaltySpec("lasso", lam), options)
        except DivergenceError as exc:
            with pytest.raises(DivergenceError) as info:
                solve(design, PenaltySpec("group-kmax", lam, k=(0,) * design.m), options)
            assert info.value.iteration == exc.iteration
            return
        kmax = solve(design, PenaltySpec("group-kmax", lam, k=(0,) * design.m), options)
        assert kmax.iterations == lasso.iterations
        for a, b in zip(kmax.iterates, lasso.iterates):
            assert np.abs(a - b).max(initial=0.0) <= 1e-12

    @PROPERTY
    @given(st.data())
    def test_determinism(self, data):
        design = data.draw(designs())
        spec = data.draw(penalties(design.sizes))
        options = SolveOptions(record_trace=True, max_iters=100)
        a, b = solve(design, spec, options), solve(design, spec, options)
        assert a.x == b.x
        assert (a.iterations, a.terminated_by, a.gamma) == (b.iterations, b.terminated_by, b.gamma)
        assert a.objective_trace == b.objective_trace
        assert a.iterate_gap_trace == b.iterate_gap_trace

    @PROPERTY
    @given(st.data())
    def test_convex_objective_nonincreasing(self, data):
        design = data.draw(designs())
        spec = data.draw(penalties(design.sizes, kinds=("lasso", "group-lasso", "sparse-group-lasso")))
        res = solve(design, spec, SolveOptions(record_trace=True, max_iters=200))
        trace = res.objective_trace
        for before, after in zip(trace, trace[1:]):
            assert after <= before + 1e-10 * max(1.0, abs(before))

    @PROPERTY
    @given(st.data())
    def test_gap_trace_recomputable(self, data):
        design = data.draw(designs())
        spec = data.draw(penalties(design.sizes))
        res = solve(design, spec, SolveOptions(record_trace=True, max_iters=100))
        recomputed = [group_gap(b - a, design.offsets) for a, b in zip(res.iterates, res.iterates[1:])]
        assert recomputed == res.iterate_gap_trace
