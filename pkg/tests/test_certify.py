import numpy as np
import pytest

from generators import G_KINDS, random_instance
from l0scope.certify import (
    CRITICAL,
    NOT_CRITICAL,
    certify_critical,
    default_radius,
    support_stability_radius,
    verify_theorem_crlo,
)
from l0scope.landscape import enumerate_landscape, sample_feasible_ball
from l0scope.problem import ConstraintSet, LinearMap, least_squares_problem, support_of
from l0scope.solvers import PDOptions, solve_iht, solve_pd


def one_d():
    return least_squares_problem([[1.0]], [1.0])


class TestExamples:
    def test_origin_is_critical_with_unit_multiplier(self):
        c = certify_critical(one_d(), [0.0])
        assert c.verdict == CRITICAL
        assert c.omega_bar.indices == () and c.constrained_rows == (0,)
        np.testing.assert_allclose(c.lam, [1.0], atol=1e-12)
        assert c.residual <= 1e-14

    def test_stationary_point_is_critical(self):
        c = certify_critical(one_d(), [1.0])
        assert c.critical and c.lam.size == 0

    def test_half_is_not_critical(self):
        c = certify_critical(one_d(), [0.5])
        assert c.verdict == NOT_CRITICAL
        assert c.residual == pytest.approx(0.5)

    def test_infeasible_point(self):
        p = least_squares_problem([[1.0]], [1.0], X=ConstraintSet.box([0.0], [2.0]))
        c = certify_critical(p, [-1.0])
        assert not c.critical and not c.feasible and c.residual == np.inf

    def test_certificate_dict(self):
        d = certify_critical(one_d(), [0.0]).to_dict()
        assert d["lambda"] == {"0": pytest.approx(1.0)} and d["verdict"] == "critical"


class TestBoxNormalCone:
    def test_upper_face_pushing_out_is_critical(self):
        # minimizer at 3 lies beyond the upper bound 2
        p = least_squares_problem([[1.0]], [3.0], X=ConstraintSet.box([-1.0], [2.0]))
        c = certify_critical(p, [2.0])
        assert c.critical and c.nu[0] == pytest.approx(1.0)

    def test_lower_face_pulling_in_is_not_critical(self):
        p = least_squares_problem([[1.0]], [3.0], X=ConstraintSet.box([-1.0], [2.0]))
        c = certify_critical(p, [-1.0])
        assert not c.critical and c.nu[0] == 0.0
        assert c.residual == pytest.approx(4.0)

    def test_fixed_coordinate_has_free_multiplier(self):
        p = least_squares_problem(np.eye(2), [3.0, -3.0],
                                  X=ConstraintSet.box([1.0, -1.0], [1.0, 1.0]))
        c = certify_critical(p, [1.0, -1.0])
        assert c.critical

    def test_signs_hold_on_random_boxes(self):
        rng = np.random.default_rng(0)
        for t in range(40):
            n = int(rng.integers(2, 6))
            p = random_instance(rng, n, G_KINDS[t % 3], box=True)
            x = np.clip(3 * rng.standard_normal(n), p.X.lower, p.X.upper)
            c = certify_critical(p, x)
            at_lo, at_up = x <= p.X.lower + 1e-9, x >= p.X.upper - 1e-9
            assert np.all(c.nu[at_up & ~at_lo] >= 0)
            assert np.all(c.nu[at_lo & ~at_up] <= 0)
            assert np.all(c.nu[~at_lo & ~at_up] == 0)
            assert c.critical == (c.residual <= c.tolerance)


class TestRadius:
    def test_examples(self):
        p = least_squares_problem(np.eye(3), [2.0, 0.5, 1.5])
        assert support_stability_radius(p, [2.0, 0.0, 1.5]) == pytest.approx(1.5)
        assert support_stability_radius(p, np.zeros(3)) == np.inf
        fd = least_squares_problem(np.eye(3), np.zeros(3), g=LinearMap.forward_difference(3))
        assert support_stability_radius(fd, [0.0, 1.0, 1.0]) == pytest.approx(1 / np.sqrt(2))

    def test_default_radius_is_capped(self):
        p = least_squares_problem(np.eye(3), [2.0, 0.5, 1.5])
        assert default_radius(p, np.zeros(3)) == 0.1
        assert default_radius(p, [0.05, 0.0, 0.0]) == pytest.approx(0.045)

    def test_support_dichotomy(self):
        # inside the radius either the l0 term jumps by >= weight or the
        # support is unchanged (and then x stays on the stratum)
        rng = np.random.default_rng(1)
        for t in range(30):
            n = int(rng.integers(2, 6))
            p = random_instance(rng, n, G_KINDS[t % 3], box=bool(t % 2))
            rep = enumerate_landscape(p)
            for e in rep.minimizers:
                r = min(support_stability_radius(p, e.x), 1.0) * (1 - 1e-6)
                base = p.l0(e.x)
                for x in sample_feasible_ball(p, e.x, r, 100, rng):
                    omega = support_of(p, x)
                    assert set(e.supp_actual.indices) <= set(omega.indices)
                    if omega != e.supp_actual:
                        assert p.l0(x) >= base + 1


class TestTheoremCheck:
    def test_one_d_points(self):
        for x, f1_star in (([0.0], 0.5), ([1.0], 0.0)):
            chk = verify_theorem_crlo(one_d(), x)
            assert chk.subproblem.f1_star == pytest.approx(f1_star)
            assert chk.f1_gap == pytest.approx(0.0, abs=1e-12)
            assert chk.solves_subproblem and not chk.sampling.refuted and chk.consistent

    def test_requires_critical_point(self):
        with pytest.raises(ValueError):
            verify_theorem_crlo(one_d(), [0.5])

    def test_dict_shape(self):
        d = verify_theorem_crlo(one_d(), [0.0]).to_dict()
        assert d["consistent"] is True and d["subproblem_status"] == "solved"


class TestAgainstEnumeration:
    def test_entries_are_critical_and_critical_points_are_entries(self):
        rng = np.random.default_rng(2)
        for t in range(24):
            n = int(rng.integers(2, 7))
            kind = G_KINDS[t % 3]
            p = random_instance(rng, n, kind, box=bool(t % 2),
                                m=int(rng.integers(1, 9)) if kind == "random" else None)
            if p.m > 8:
                continue
            rep = enumerate_landscape(p)
            xs = np.array([e.x for e in rep.minimizers])
            for e in rep.minimizers:
                assert certify_critical(p, e.x).critical
            cands = [p.X.project(rng.standard_normal(n)) for _ in range(5)]
            cands.append(solve_pd(p, rng.standard_normal(n)).final)
            if kind == "identity":
                cands.append(solve_iht(p, rng.standard_normal(n)).final)
            for x in cands:
                if certify_critical(p, x).critical:
                    assert np.abs(xs - x).max(axis=1).min() <= 1e-6

    @pytest.mark.parametrize("scale", [1e-2, 1.0, 1e2])
    def test_verdict_is_scale_invariant(self, scale):
        rng = np.random.default_rng(3)
        for t in range(15):
            n = int(rng.integers(2, 6))
            p = random_instance(rng, n, G_KINDS[t % 3], box=bool(t % 2))
            pts = [e.x for e in enumerate_landscape(p).minimizers]
            pts += [p.X.project(rng.standard_normal(n)) for _ in range(3)]
            for x in pts:
                assert certify_critical(p, x).verdict == certify_critical(p.scaled(scale), x).verdict
