import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from generators import G_KINDS, prox_agrees, prox_by_grid, random_instance
from l0scope.certify import certify_critical, verify_theorem_crlo
from l0scope.landscape import enumerate_landscape
from l0scope.problem import (
    ConstraintSet,
    LinearMap,
    ProblemInstance,
    QuadraticTerm,
    evaluate,
    least_squares_problem,
)
from l0scope.solvers import (
    IHTOptions,
    PDOptions,
    UnboundedProblemError,
    prox_l0,
    solve_iht,
    solve_pd,
)
from l0scope.subproblem import NotConvergedError


def one_d():
    return least_squares_problem([[1.0]], [1.0])


def cs3():
    return least_squares_problem(np.eye(3), [2.0, 0.5, 1.5])


def tv4():
    return least_squares_problem(np.eye(4), [0.0, 0.0, 5.0, 5.0],
                                 g=LinearMap.forward_difference(4))


class TestProx:
    def test_examples(self):
        np.testing.assert_array_equal(prox_l0([2.0, 0.5, 1.5], 1.0), [2.0, 0.0, 1.5])
        assert prox_l0([np.sqrt(2.0)], 1.0)[0] == 0.0
        X = ConstraintSet.box([0.0], [1.0])
        assert prox_l0([-3.0], 1.0, 1.0, X)[0] == 0.0

    def test_zero_excluded_by_box(self):
        X = ConstraintSet.box([0.5], [1.0])
        assert prox_l0([0.1], 1.0, 1.0, X)[0] == 0.5

    def test_eta_must_be_positive(self):
        with pytest.raises(ValueError):
            prox_l0([1.0], 0.0)

    @settings(max_examples=1000, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_matches_grid_search(self, seed):
        rng = np.random.default_rng(seed)
        n = 3
        v = 3 * rng.standard_normal(n)
        eta = float(rng.uniform(0.05, 2.0))
        weight = float(rng.uniform(0.1, 2.0))
        box = rng.random() < 0.5
        lo = -rng.uniform(0.1, 3, n) if box else np.full(n, -np.inf)
        hi = rng.uniform(0.1, 3, n) if box else np.full(n, np.inf)
        X = ConstraintSet.box(lo, hi) if box else None
        got = prox_l0(v, eta, weight, X)
        want = prox_by_grid(v, eta, weight, lo, hi)
        assert prox_agrees(got, want, v, eta, weight)


class TestIHT:
    def test_compressed_sensing_three(self):
        tr = solve_iht(cs3(), np.zeros(3))
        assert tr.converged and tr.method == "iht"
        np.testing.assert_allclose(tr.final, [2.0, 0.0, 1.5], atol=1e-10)

    def test_reaches_nonglobal_local_minimizer(self):
        # with eta = 0.99 the first step lands below the threshold sqrt(2 eta),
        # so the smaller step keeps the iterate on the x = 1 branch
        tr = solve_iht(one_d(), [2.0], IHTOptions(eta=0.4))
        np.testing.assert_allclose(tr.final, [1.0], atol=1e-10)
        assert evaluate(one_d(), tr.final) == pytest.approx(1.0)

    def test_fixed_point_stops_immediately(self):
        tr = solve_iht(one_d(), [0.0])
        assert tr.converged and tr.final[0] == 0.0
        assert tr.iterates[-1][0] == 1

    def test_requires_identity_map(self):
        with pytest.raises(ValueError, match="identity"):
            solve_iht(tv4(), np.zeros(4))

    def test_step_bound(self):
        with pytest.raises(ValueError):
            solve_iht(cs3(), np.zeros(3), IHTOptions(eta=1.5))

    def test_linear_objective_is_unbounded(self):
        p = ProblemInstance(QuadraticTerm(np.zeros((2, 2)), [1.0, 0.0]),
                            LinearMap.identity(2), ConstraintSet.all_space(2))
        with pytest.raises(UnboundedProblemError):
            solve_iht(p, np.zeros(2))

    def test_max_iters(self):
        p = least_squares_problem([[1.0, 0.0], [0.0, 0.05]], [3.0, 3.0])
        tr = solve_iht(p, np.zeros(2), IHTOptions(max_iters=3))
        assert not tr.converged and tr.stop_reason == "max_iters"

    def test_objective_is_monotone_and_final_feasible(self):
        rng = np.random.default_rng(0)
        for t in range(50):
            n = int(rng.integers(1, 9))
            p = random_instance(rng, n, "identity", box=bool(t % 2))
            tr = solve_iht(p, 3 * rng.standard_normal(n))
            assert np.all(np.diff(tr.objective) <= 1e-12)
            assert p.X.contains(tr.final)

    def test_fixed_points_are_critical(self):
        rng = np.random.default_rng(1)
        critical = total = 0
        for t in range(100):
            n = int(rng.integers(1, 9))
            p = random_instance(rng, n, "identity")
            tr = solve_iht(p, rng.standard_normal(n))
            if tr.converged:
                total += 1
                critical += certify_critical(p, tr.final).critical
        assert total >= 99 and critical >= 99

    def test_trace_rows_and_dict(self):
        tr = solve_iht(cs3(), np.zeros(3))
        rows = tr.rows(cs3())
        assert rows[0] == (0, pytest.approx(3.25), 0)
        d = tr.to_dict(cs3())
        assert d["stop_reason"] == "tolerance" and len(d["trace"]) == len(tr.iterates)


class TestPD:
    def test_identity_map_agrees_with_iht(self):
        tr = solve_pd(cs3(), np.zeros(3))
        np.testing.assert_allclose(tr.final, [2.0, 0.0, 1.5], atol=1e-10)

    def test_piecewise_constant(self):
        tr = solve_pd(tv4(), np.zeros(4))
        np.testing.assert_allclose(tr.final, [0.0, 0.0, 5.0, 5.0], atol=1e-10)
        assert evaluate(tv4(), tr.final) == pytest.approx(1.0)

    def test_zero_objective(self):
        p = ProblemInstance(QuadraticTerm(np.zeros((3, 3)), np.zeros(3)),
                            LinearMap.forward_difference(3), ConstraintSet.all_space(3))
        tr = solve_pd(p, np.array([1.0, -2.0, 0.5]))
        assert evaluate(p, tr.final) == pytest.approx(0.0, abs=1e-12)

    def test_penalty_objective_is_monotone_per_rho(self):
        rng = np.random.default_rng(2)
        for t in range(20):
            n = int(rng.integers(2, 7))
            p = random_instance(rng, n, G_KINDS[t % 3], box=bool(t % 2))
            tr = solve_pd(p, rng.standard_normal(n))
            hist = tr.penalty_history
            for (r0, v0), (r1, v1) in zip(hist, hist[1:]):
                if r0 == r1:
                    assert v1 <= v0 + 1e-9 * (1 + abs(v0))

    def test_rho_cap_raises_with_trace(self):
        opts = PDOptions(rho_max=2.0, pd_tol=1e-14)
        with pytest.raises(NotConvergedError) as info:
            solve_pd(tv4(), np.array([0.0, 1.0, 2.0, 3.0]), opts)
        assert info.value.trace is not None and info.value.trace.method == "pd"

    def test_bad_schedule(self):
        with pytest.raises(ValueError):
            solve_pd(cs3(), np.zeros(3), PDOptions(sigma=1.0))

    def test_unbounded_penalized_step(self):
        p = ProblemInstance(QuadraticTerm(np.zeros((2, 2)), [1.0, 1.0]),
                            LinearMap.forward_difference(2), ConstraintSet.all_space(2))
        with pytest.raises(UnboundedProblemError):
            solve_pd(p, np.zeros(2))

    def test_finals_pass_the_theorem_check(self):
        rng = np.random.default_rng(3)
        for t in range(30):
            n = int(rng.integers(2, 8))
            p = random_instance(rng, n, G_KINDS[t % 3], box=bool(t % 2))
            tr = solve_pd(p, rng.standard_normal(n))
            assert tr.converged and p.X.contains(tr.final)
            cert = certify_critical(p, tr.final)
            assert cert.critical
            assert verify_theorem_crlo(p, tr.final, cert).consistent
            # the final is one of the enumerated local minimizers
            xs = np.array([e.x for e in enumerate_landscape(p).minimizers])
            assert np.abs(xs - tr.final).max(axis=1).min() <= 1e-6
