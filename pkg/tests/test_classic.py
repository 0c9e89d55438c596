"""Tests for the proximal, splitting, concave-convex, and mixture solvers."""

import numpy as np
import pytest

from bsumkit.app_classic import (
    GmmParams,
    alternating_proximal_solve,
    cccp_solve,
    em_gmm,
    forward_backward_solve,
    gmm_nll,
    proximal_point_solve,
    two_cluster_dataset,
)
from bsumkit.core import (
    ComponentCollapseError,
    InvalidArgumentError,
    ObjectiveOracle,
    Point,
    RngStream,
    make_block_structure,
)
from bsumkit.engine import SolveOptions
from bsumkit.problems import QuadraticProblem, lasso_problem, separable_quartic_dc
from bsumkit.verify import audit_trace


def scalar_point(x):
    return Point(np.array([float(x)]), make_block_structure([1]))


class TestProximalPointSolve:

    def test_geometric_iterates(self):
        """f = x^2, c = 1 from 2: iterates 2/3, 2/9, ... toward 0."""
        prob = QuadraticProblem(np.array([[2.0]]), np.array([0.0]))
        x, trace = proximal_point_solve(prob.objective(), prob.prox_block_minimize,
                                        scalar_point(2.0), c=1.0,
                                        opts=SolveOptions(max_iters=100, tol=1e-14))
        np.testing.assert_allclose(trace.records[0].objective, (2.0 / 3) ** 2,
                                   rtol=1e-12)
        np.testing.assert_allclose(trace.records[1].objective, (2.0 / 9) ** 2,
                                   rtol=1e-12)
        assert abs(x.values[0]) < 1e-6

    def test_zero_objective_fixed(self):
        f = ObjectiveOracle(value=lambda v: 0.0)
        x, trace = proximal_point_solve(f, lambda part, anchor, c: anchor.part(part),
                                        scalar_point(1.5))
        np.testing.assert_array_equal(x.values, [1.5])
        assert trace.n_iterations == 1

    def test_decreasing_coefficient_stays_monotone(self):
        prob = QuadraticProblem(np.array([[2.0]]), np.array([0.0]))
        x, trace = proximal_point_solve(prob.objective(), prob.prox_block_minimize,
                                        scalar_point(3.0),
                                        c=lambda r, anchor: 1.0 / r,
                                        opts=SolveOptions(max_iters=50))
        assert audit_trace(trace).passed

    def test_limit_matches_closed_form_minimizer(self):
        rng = np.random.default_rng(0)
        m = rng.normal(size=(3, 3))
        prob = QuadraticProblem(m @ m.T + 3 * np.eye(3), rng.normal(size=3))
        x0 = Point(np.zeros(3), make_block_structure([3]))
        x, _ = proximal_point_solve(prob.objective(), prob.prox_block_minimize,
                                    x0, c=2.0,
                                    opts=SolveOptions(max_iters=500, tol=1e-13))
        np.testing.assert_allclose(x.values, prob.minimizer(), atol=1e-5)


class TestAlternatingProximalSolve:

    def test_flat_valley_reaches_the_line(self):
        """(x1 + x2 - 1)^2 from (0, 0) lands on the solution line."""
        prob = QuadraticProblem(2.0 * np.ones((2, 2)), 2.0 * np.ones(2))
        shifted = ObjectiveOracle(
            value=lambda v: float((v[0] + v[1] - 1.0) ** 2),
            gradient=lambda v: 2.0 * (v[0] + v[1] - 1.0) * np.ones(2))
        x0 = Point(np.zeros(2), make_block_structure([1, 1]))
        x, trace = alternating_proximal_solve(
            shifted, prob.prox_block_minimize, x0, c=1.0,
            opts=SolveOptions(max_iters=2000, tol=1e-14))
        assert shifted.value_at(x.values) <= 1e-12

    def test_separable_matches_exact_bcd_limit(self):
        prob = QuadraticProblem(np.diag([2.0, 4.0]), np.array([2.0, 4.0]))
        x0 = Point(np.zeros(2), make_block_structure([1, 1]))
        x, _ = alternating_proximal_solve(prob.objective(), prob.prox_block_minimize,
                                          x0, c=1.0,
                                          opts=SolveOptions(max_iters=800, tol=1e-14))
        np.testing.assert_allclose(x.values, prob.minimizer(), atol=1e-6)

    def test_huge_coefficient_still_monotone(self):
        prob = QuadraticProblem(2.0 * np.eye(2), np.array([2.0, -2.0]))
        x0 = Point(np.zeros(2), make_block_structure([1, 1]))
        _, trace = alternating_proximal_solve(prob.objective(),
                                              prob.prox_block_minimize, x0, c=1e6,
                                              opts=SolveOptions(max_iters=30))
        assert audit_trace(trace).passed


class TestForwardBackwardSolve:

    def test_lasso_fixed_point(self):
        """min |x| + (x - 2)^2 / 2: subdifferential gives x* = 1."""
        _, s, x0 = lasso_problem(target=[2.0], weight=1.0, gamma=1.0)
        x, trace = forward_backward_solve(
            s.nonsmooth_total, s.prox, s.smooth, beta=1.0, gamma=1.0, x0=x0,
            opts=SolveOptions(max_iters=200, tol=1e-14))
        np.testing.assert_allclose(x.values, [1.0], atol=1e-10)
        assert audit_trace(trace).passed

    def test_no_nonsmooth_part_is_gradient_descent(self):
        smooth = ObjectiveOracle(value=lambda v: 0.5 * float(v @ v),
                                 gradient=lambda v: v.copy())
        x0 = scalar_point(1.0)
        x, trace = forward_backward_solve(
            lambda v: 0.0, lambda part, v, g: v, smooth, beta=1.0, gamma=0.5,
            x0=x0, opts=SolveOptions(max_iters=5, tol=1e-16))
        # x <- x - gamma x halves the iterate each step.
        np.testing.assert_allclose(trace.records[0].objective, 0.5 * 0.25,
                                   rtol=1e-12)

    def test_no_smooth_part_is_proximal_iteration(self):
        from bsumkit.surrogates import soft_threshold
        smooth = ObjectiveOracle(value=lambda v: 0.0,
                                 gradient=lambda v: np.zeros_like(v))
        x, _ = forward_backward_solve(
            lambda v: float(np.sum(np.abs(v))),
            lambda part, v, g: soft_threshold(v, g),
            smooth, beta=1.0, gamma=1.0, x0=scalar_point(3.0),
            opts=SolveOptions(max_iters=10, tol=1e-16))
        np.testing.assert_allclose(x.values, [0.0], atol=1e-12)


class TestCccpSolve:

    def test_quartic_from_eight(self):
        """Cube-root iteration reaches the stationary point 1."""
        f, dc, _ = separable_quartic_dc([1])
        x, trace = cccp_solve(dc, scalar_point(8.0),
                              opts=SolveOptions(max_iters=60, tol=1e-18))
        assert abs(x.values[0] - 1.0) <= 1e-8
        assert trace.n_iterations <= 60
        assert audit_trace(trace).passed

    def test_origin_is_fixed(self):
        _, dc, x0 = separable_quartic_dc([1])
        x, trace = cccp_solve(dc, x0, opts=SolveOptions(max_iters=20))
        np.testing.assert_array_equal(x.values, [0.0])
        assert trace.n_iterations == 1

    def test_negative_start_mirrors(self):
        _, dc, _ = separable_quartic_dc([1])
        x, _ = cccp_solve(dc, scalar_point(-8.0),
                          opts=SolveOptions(max_iters=60, tol=1e-14))
        np.testing.assert_allclose(x.values, [-1.0], atol=1e-8)

    def test_iterates_match_cube_root_oracle(self):
        _, dc, _ = separable_quartic_dc([1])
        opts = SolveOptions(max_iters=12, tol=1e-16)
        _, trace = cccp_solve(dc, scalar_point(8.0), opts=opts)
        expected = 8.0
        f = dc.objective()
        for rec in trace.records:
            expected = np.cbrt(expected)
            np.testing.assert_allclose(rec.objective,
                                       f.value_at(np.array([expected])),
                                       rtol=1e-12)

    def test_block_mode_on_two_coordinates(self):
        f, dc, _ = separable_quartic_dc([1, 1])
        x0 = Point(np.array([8.0, -8.0]), make_block_structure([1, 1]))
        x, trace = cccp_solve(dc, x0, opts=SolveOptions(max_iters=120, tol=1e-14),
                              block_mode=True)
        np.testing.assert_allclose(np.abs(x.values), [1.0, 1.0], atol=1e-8)
        assert audit_trace(trace).passed

    def test_gradient_balance_at_the_limit(self):
        _, dc, _ = separable_quartic_dc([1])
        x, _ = cccp_solve(dc, scalar_point(5.0),
                          opts=SolveOptions(max_iters=100, tol=1e-18))
        v = x.values[0]
        assert abs(v ** 3 - v) <= 1e-8


class TestGmmParams:

    def test_simplex_enforced(self):
        with pytest.raises(InvalidArgumentError):
            GmmParams(weights=np.array([0.7, 0.7]), means=np.zeros(2),
                      variances=np.ones(2))

    def test_positive_variances_enforced(self):
        with pytest.raises(InvalidArgumentError):
            GmmParams(weights=np.array([1.0]), means=np.zeros(1),
                      variances=np.zeros(1))

    def test_point_roundtrip(self):
        theta = GmmParams(weights=np.array([0.25, 0.75]),
                          means=np.array([-1.0, 3.0]),
                          variances=np.array([1.0, 2.0]))
        back = GmmParams.from_point(theta.to_point())
        np.testing.assert_array_equal(back.weights, theta.weights)
        np.testing.assert_array_equal(back.means, theta.means)
        np.testing.assert_array_equal(back.variances, theta.variances)


class TestEmGmm:

    def test_single_component_closed_form(self):
        """J = 1: one step sets the sample mean and variance."""
        data = np.array([1.0, 2.0, 3.0, 6.0])
        theta, trace = em_gmm(data, 1, opts=SolveOptions(max_iters=5))
        np.testing.assert_allclose(theta.means, [np.mean(data)], rtol=1e-12)
        np.testing.assert_allclose(theta.variances, [np.var(data)], rtol=1e-12)
        np.testing.assert_array_equal(theta.weights, [1.0])

    def test_two_separated_clusters_recovered(self):
        data = two_cluster_dataset(RngStream(0), n_per_cluster=500,
                                   centers=(-5.0, 5.0), sigma=1.0)
        empirical = (float(np.mean(data[:500])), float(np.mean(data[500:])))
        theta, _ = em_gmm(data, 2, opts=SolveOptions(max_iters=300, tol=1e-12))
        got = np.sort(theta.means)
        np.testing.assert_allclose(got, np.sort(empirical), atol=0.1)

    @pytest.mark.parametrize("mode", ["full", "block"])
    def test_monotone_nll(self, mode):
        data = two_cluster_dataset(RngStream(3), n_per_cluster=100)
        theta, trace = em_gmm(data, 2, mode=mode,
                              opts=SolveOptions(max_iters=100, tol=1e-12))
        assert audit_trace(trace, slack=1e-12).passed
        np.testing.assert_allclose(trace.final_objective, gmm_nll(theta, data),
                                   rtol=1e-12)

    def test_block_mode_matches_full_likelihood(self):
        data = two_cluster_dataset(RngStream(7), n_per_cluster=200)
        full, t_full = em_gmm(data, 2, opts=SolveOptions(max_iters=400, tol=1e-13))
        block, t_block = em_gmm(data, 2, mode="block",
                                opts=SolveOptions(max_iters=1200, tol=1e-13))
        np.testing.assert_allclose(t_block.final_objective, t_full.final_objective,
                                   atol=1e-6)

    def test_component_collapse_detected(self):
        data = np.array([0.0, 0.0, 0.0, 1e4])
        theta0 = GmmParams(weights=np.array([1.0 - 1e-16, 1e-16]),
                           means=np.array([0.0, -1e6]),
                           variances=np.array([1.0, 1e-4]))
        with pytest.raises(ComponentCollapseError):
            em_gmm(data, 2, theta0=theta0, opts=SolveOptions(max_iters=50))

    def test_variance_floor_warns(self):
        data = np.concatenate([np.zeros(50), np.ones(50)])
        theta, trace = em_gmm(data, 2, s_floor=0.3,
                              opts=SolveOptions(max_iters=60, tol=1e-12))
        assert theta.variances.min() >= 0.3 - 1e-15
        assert any("clamped" in w for w in trace.warnings)

    def test_data_shorter_than_components_rejected(self):
        with pytest.raises(InvalidArgumentError):
            em_gmm(np.array([1.0]), 2)

    def test_surrogate_tight_at_anchor(self):
        """The bound evaluated at the anchor equals the NLL there."""
        from bsumkit.app_classic import GmmJensenSurrogate
        data = two_cluster_dataset(RngStream(1), n_per_cluster=50)
        theta = GmmParams(weights=np.array([0.4, 0.6]),
                          means=np.array([-4.0, 4.5]),
                          variances=np.array([1.2, 0.8]))
        u = GmmJensenSurrogate(data, s_floor=1e-9)
        x = theta.to_point()
        part = (0, 1, 2)
        np.testing.assert_allclose(u.value(part, x.values, x),
                                   gmm_nll(theta, data), atol=1e-10)
