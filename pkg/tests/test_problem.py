import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from generators import G_KINDS, random_instance
from l0scope.problem import (
    ConstraintSet,
    DimensionError,
    LinearMap,
    ProblemInstance,
    QuadraticTerm,
    Support,
    evaluate,
    gradient_f1,
    least_squares_problem,
    support_of,
    supports,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def one_d():
    return least_squares_problem([[1.0]], [1.0])


def cs3(**kw):
    return least_squares_problem(np.eye(3), [2.0, 0.5, 1.5], **kw)


class TestQuadraticTerm:
    def test_least_squares_constructor(self):
        rng = np.random.default_rng(0)
        A, b, alpha = rng.standard_normal((5, 3)), rng.standard_normal(5), 2.5
        f = QuadraticTerm.from_least_squares(A, b, alpha)
        np.testing.assert_allclose(f.Q, alpha * A.T @ A, rtol=1e-12)
        np.testing.assert_allclose(f.c, -alpha * A.T @ b, rtol=1e-12)
        assert f.d == pytest.approx(0.5 * alpha * b @ b, rel=1e-12)
        x = rng.standard_normal(3)
        assert f(x) == pytest.approx(0.5 * alpha * np.sum((A @ x - b) ** 2), rel=1e-12)

    def test_rejects_asymmetric_and_indefinite(self):
        with pytest.raises(ValueError, match="symmetric"):
            QuadraticTerm([[1.0, 1.0], [0.0, 1.0]], [0.0, 0.0])
        with pytest.raises(ValueError, match="semidefinite"):
            QuadraticTerm([[1.0, 0.0], [0.0, -1.0]], [0.0, 0.0])
        with pytest.raises(DimensionError):
            QuadraticTerm(np.eye(2), [0.0, 0.0, 0.0])

    def test_alpha_must_be_positive(self):
        with pytest.raises(ValueError):
            QuadraticTerm.from_least_squares(np.eye(2), [1.0, 1.0], 0.0)

    def test_arrays_are_read_only(self):
        f = QuadraticTerm(np.eye(2), [1.0, 2.0])
        with pytest.raises(ValueError):
            f.Q[0, 0] = 5.0


class TestLinearMap:
    def test_forward_difference_rows(self):
        g = LinearMap.forward_difference(4)
        assert g.G.shape == (3, 4)
        for i, row in enumerate(g.G):
            assert np.count_nonzero(row) == 2
            assert row[i] == -1 and row[i + 1] == 1

    def test_identity(self):
        g = LinearMap.identity(3)
        np.testing.assert_array_equal(g.G, np.eye(3))
        assert g.is_coordinate

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            LinearMap(np.eye(2), "wavelet")


class TestConstraintSet:
    def test_box_must_be_nonempty(self):
        with pytest.raises(ValueError):
            ConstraintSet.box([0.0, 1.0], [1.0, 0.0])

    def test_nonnegative_is_half_open_box(self):
        X = ConstraintSet.nonnegative(2)
        assert X.kind == "box" and not X.is_bounded
        np.testing.assert_array_equal(X.project([-1.0, 3.0]), [0.0, 3.0])

    @given(arrays(float, 4, elements=finite), arrays(float, 4, elements=finite),
           arrays(float, 4, elements=finite))
    def test_projection_is_idempotent(self, a, b, v):
        X = ConstraintSet.box(np.minimum(a, b), np.maximum(a, b))
        once = X.project(v)
        np.testing.assert_array_equal(X.project(once), once)
        assert X.contains(once)

    def test_all_space_projection_is_identity(self):
        v = np.array([1e300, -3.0])
        np.testing.assert_array_equal(ConstraintSet.all_space(2).project(v), v)


class TestSupport:
    def test_complement_partitions(self):
        w = Support((0, 2), 4)
        assert w.complement == (1, 3)
        assert set(w.indices) | set(w.complement) == set(range(4))
        assert str(w) == "{0, 2}"

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            Support((0, 5), 3)

    def test_supports_order(self):
        order = [w.indices for w in supports(3)]
        assert order == [(), (0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)]


class TestEvaluate:
    def test_one_d_values(self):
        p = one_d()
        assert evaluate(p, [0.0]) == pytest.approx(0.5)
        assert evaluate(p, [1.0]) == pytest.approx(1.0)

    def test_infeasible_is_inf(self):
        p = least_squares_problem(np.eye(2), [1.0, 1.0], X=ConstraintSet.box([0, 0], [1, 1]))
        assert evaluate(p, [-1.0, -1.0]) == np.inf

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            evaluate(one_d(), [1.0, 2.0])

    def test_weight_scales_l0_term(self):
        p = cs3(weight=0.25)
        assert evaluate(p, [2.0, 0.0, 1.5]) == pytest.approx(0.125 + 0.5)

    @settings(max_examples=50)
    @given(st.integers(0, 10_000))
    def test_f2_lies_on_discrete_grid(self, seed):
        rng = np.random.default_rng(seed)
        p = random_instance(rng, 4, G_KINDS[seed % 3], box=bool(seed % 2))
        x = rng.standard_normal(4) * (rng.random(4) < 0.6)
        diff = evaluate(p, x) - p.f1(x)
        if np.isinf(diff):
            assert not p.X.contains(x)
        else:
            k = diff / p.weight
            assert abs(k - round(k)) < 1e-9 and 0 <= round(k) <= p.m


class TestSupportOf:
    def test_examples(self):
        assert support_of(cs3(), [2.0, 0.0, 1.5], 1e-10).indices == (0, 2)
        fd = least_squares_problem(np.eye(3), np.zeros(3), g=LinearMap.forward_difference(3))
        assert support_of(fd, [5.0, 5.0, 5.0]).indices == ()
        assert support_of(fd, [0.0, 1.0, 1.0]).indices == (0,)

    def test_zeros_are_upper_semicontinuous(self):
        rng = np.random.default_rng(3)
        for trial in range(20):
            p = random_instance(rng, 5, G_KINDS[trial % 3])
            xbar = rng.standard_normal(5) * (rng.random(5) < 0.5)
            omega = set(support_of(p, xbar).indices)
            gx = np.abs(p.g(xbar))
            if not omega:
                continue
            r = 0.99 * min(gx[i] for i in omega) / np.linalg.norm(p.g.G, 2)
            d = rng.standard_normal((100, 5))
            d *= r * rng.random((100, 1)) / np.linalg.norm(d, axis=1, keepdims=True)
            for x in xbar + d:
                assert omega <= set(support_of(p, x).indices)


class TestGradient:
    def test_examples(self):
        np.testing.assert_allclose(gradient_f1(one_d(), [0.0]), [-1.0])
        np.testing.assert_allclose(gradient_f1(cs3(), np.zeros(3)), [-2.0, -0.5, -1.5])
        zero = ProblemInstance(QuadraticTerm(np.zeros((2, 2)), np.zeros(2)),
                               LinearMap.identity(2), ConstraintSet.all_space(2))
        np.testing.assert_array_equal(gradient_f1(zero, [3.0, -1.0]), [0.0, 0.0])

    def test_matches_central_differences(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n = int(rng.integers(1, 7))
            p = random_instance(rng, n)
            x = rng.standard_normal(n)
            h = 1e-5
            fd = np.array([(p.f1(x + h * e) - p.f1(x - h * e)) / (2 * h) for e in np.eye(n)])
            g = gradient_f1(p, x)
            assert np.linalg.norm(fd - g) <= 1e-6 * max(1.0, np.linalg.norm(g))


def test_dimension_checks_on_instance():
    with pytest.raises(DimensionError):
        ProblemInstance(QuadraticTerm(np.eye(2), np.zeros(2)), LinearMap.identity(3),
                        ConstraintSet.all_space(2))
    with pytest.raises(ValueError):
        least_squares_problem(np.eye(2), [1.0, 1.0], weight=0.0)


def test_scaled_instance():
    p = cs3().scaled(3.0)
    assert p.weight == 3.0
    np.testing.assert_allclose(p.f1.Q, 3 * np.eye(3))
