import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from l21sigma.fractime import (
    L21SigmaOperator,
    build_graded_mesh,
    power_difference,
    truncation_error,
)
from l21sigma.problems import caputo_power

from oracles import coeff_a_quad, coeff_b_quad


def make_op(N, r, alpha, T=1.0):
    return L21SigmaOperator(build_graded_mesh(N, r, T), alpha)


class TestGradedMesh:
    def test_uniform(self):
        m = build_graded_mesh(4, 1, 1)
        np.testing.assert_array_equal(m.nodes, [0, 0.25, 0.5, 0.75, 1])
        np.testing.assert_allclose(m.steps, 0.25, rtol=0, atol=0)

    def test_quadratic(self):
        m = build_graded_mesh(2, 2, 1)
        np.testing.assert_array_equal(m.nodes, [0, 0.25, 1])
        np.testing.assert_allclose(m.steps, [0.25, 0.75], rtol=1e-15)

    def test_strong_grading_stays_monotone(self):
        m = build_graded_mesh(1024, 5, 1)
        assert m.nodes[1] == pytest.approx(1024.0**-5, rel=1e-14)
        assert m.nodes[1] == pytest.approx(8.881784197001252e-16, rel=1e-14)
        assert np.all(np.diff(m.nodes) > 0)
        assert np.all(m.steps > 0)

    @pytest.mark.parametrize("args", [(0, 1, 1), (4, 0.5, 1), (4, 1, 0), (4, 1, -1), (2.5, 1, 1)])
    def test_rejects_bad_parameters(self, args):
        with pytest.raises(ValueError):
            build_graded_mesh(*args)

    @given(
        N=st.integers(1, 300),
        r=st.floats(1, 6),
        T=st.floats(0.1, 10),
    )
    def test_invariants(self, N, r, T):
        m = build_graded_mesh(N, r, T)
        assert m.nodes[0] == 0 and m.nodes[-1] == T
        n = np.arange(N + 1)
        np.testing.assert_allclose(m.nodes, T * (n / N) ** r, rtol=4e-16, atol=0)
        assert np.all(m.steps > 0)
        np.testing.assert_allclose(np.cumsum(m.steps), m.nodes[1:], rtol=1e-13)


class TestPowerDifference:
    @given(
        y=st.floats(1e-12, 1e3),
        ratio=st.floats(1e-14, 10),
        p=st.floats(0.05, 2.0),
    )
    def test_matches_high_precision(self, y, ratio, p):
        import mpmath

        d = y * ratio
        x = y + d
        ref = mpmath.mpf(x) ** p - mpmath.mpf(y) ** p
        got = power_difference(x, y, p)
        assert abs(got - float(ref)) <= 1e-13 * abs(float(ref))


class TestCoefficients:
    def test_a11_example(self):
        op = make_op(1, 1, 0.5)
        expected = 0.75**0.5 / math.gamma(1.5)
        assert op.coeff_a(1, 1) == pytest.approx(expected, rel=1e-15)
        assert op.coeff_a(1, 1) == pytest.approx(0.977205023805840, rel=1e-12)
        assert op.coeff_a(1, 1) == pytest.approx(coeff_a_quad(1, 1, 0.5, 1, 1), rel=1e-12)

    def test_b21_against_quadrature(self):
        # uniform mesh with tau = 1: T = N
        op = make_op(2, 1, 0.5, T=2.0)
        ref = coeff_b_quad(2, 1, 0.5, 2, 1) * 2  # oracle mesh has T=1; b scales like tau^(1-alpha)
        ref = ref / 2**0.5
        assert op.coeff_b(2, 1) == pytest.approx(ref, rel=1e-12)

    def test_a_increases_towards_collocation_point(self):
        op = make_op(8, 1, 0.5)
        for n in range(2, 9):
            a = [op.coeff_a(n, j) for j in range(1, n)]
            assert np.all(np.diff(a) > 0)
            ref = [coeff_a_quad(8, 1, 0.5, n, j) for j in range(1, n)]
            np.testing.assert_allclose(a, ref, rtol=1e-12)

    @pytest.mark.parametrize("alpha", [0.4, 0.5, 0.8])
    @pytest.mark.parametrize("r_kind", ["uniform", "graded"])
    def test_closed_forms_match_quadrature(self, alpha, r_kind):
        N = 16
        r = 1.0 if r_kind == "uniform" else 2 / alpha
        op = make_op(N, r, alpha)
        for n in range(1, N + 1):
            for j in range(1, n + 1):
                assert op.coeff_a(n, j) == pytest.approx(coeff_a_quad(N, r, alpha, n, j), rel=1e-12)
            for j in range(1, n):
                assert op.coeff_b(n, j) == pytest.approx(coeff_b_quad(N, r, alpha, n, j), rel=1e-12)

    @pytest.mark.parametrize("alpha", [0.4, 0.6, 0.8])
    def test_b_nonnegative(self, alpha):
        for N in (4, 16, 64):
            for r in (1.0, 2 / alpha):
                op = make_op(N, r, alpha)
                b = [op.coeff_b(n, j) for n in range(2, N + 1) for j in range(1, n)]
                assert min(b) >= 0

    def test_b_vanishes_as_alpha_goes_to_zero(self):
        vals = [make_op(8, 1, alpha).coeff_b(8, 1) for alpha in (1e-2, 1e-4, 1e-6)]
        assert vals[0] > vals[1] > vals[2] > 0
        assert vals[2] < 1e-7

    def test_index_errors(self):
        op = make_op(4, 1, 0.5)
        with pytest.raises(IndexError):
            op.coeff_a(5, 1)
        with pytest.raises(IndexError):
            op.coeff_a(2, 3)
        with pytest.raises(IndexError):
            op.coeff_b(3, 3)
        with pytest.raises(IndexError):
            op.coeff_b(1, 1)
        with pytest.raises(IndexError):
            op.weight_row(0)

    def test_rejects_alpha_out_of_range(self):
        with pytest.raises(ValueError):
            make_op(4, 1, 1.0)


class TestWeights:
    def test_first_row(self):
        op = make_op(1, 1, 0.5)
        np.testing.assert_allclose(op.weight_row(1), [0.977205023805840], rtol=1e-12)

    def test_sigma(self):
        op = make_op(4, 1, 0.3)
        assert op.sigma == 0.15

    @given(
        alpha=st.floats(0.05, 0.95),
        N=st.integers(1, 200),
        grading=st.floats(0, 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_linear_exactness(self, alpha, N, grading):
        r = 1 + grading * (2 / alpha - 1)
        op = make_op(N, r, alpha)
        exact = op.offset_points ** (1 - alpha) / math.gamma(2 - alpha)
        lin = op.weights @ op.mesh.steps
        np.testing.assert_allclose(lin, exact, rtol=1e-11, atol=0)

    def test_positive_diagonal(self):
        op = make_op(64, 4, 0.5)
        assert np.all(np.diag(op.weights) > 0)

    @pytest.mark.parametrize("alpha", [0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
    @pytest.mark.parametrize("graded", [False, True])
    def test_rows_nondecreasing(self, alpha, graded):
        N = 128
        op = make_op(N, 2 / alpha if graded else 1.0, alpha)
        for n in range(2, N + 1):
            assert np.diff(op.weight_row(n)).min() >= 0


class TestHistory:
    def test_first_step(self):
        op = make_op(4, 2, 0.5)
        U0 = np.array([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(op.apply_history(1, [U0]), op.weight_row(1)[0] * U0)

    def test_constant_history_gives_zero_derivative(self):
        op = make_op(16, 3, 0.6)
        c = np.array([2.5, -1.0])
        hist = np.tile(c, (16, 1))
        for n in range(1, 17):
            D = op.weight_row(n)[-1] * c - op.apply_history(n, hist)
            np.testing.assert_allclose(D, 0, atol=1e-12 * op.weight_row(n)[-1])

    def test_linear_history(self):
        op = make_op(32, 2.5, 0.8)
        t = op.mesh.nodes
        for n in range(1, 33):
            D = op.weight_row(n)[-1] * t[n] - op.apply_history(n, t)
            exact = op.offset_points[n - 1] ** 0.2 / math.gamma(1.2)
            assert D == pytest.approx(exact, rel=1e-11)

    def test_dimension_mismatch(self):
        op = make_op(4, 1, 0.5)
        with pytest.raises(ValueError):
            op.apply_history(2, [np.zeros(3), np.zeros(4)])
        with pytest.raises(ValueError):
            op.apply_history(3, [np.zeros(3), np.zeros(3)])


def coercivity_gap(op, v):
    s = op.sigma
    return op.derivative(v) * ((1 - s) * v[1:] + s * v[:-1]) - 0.5 * op.derivative(v**2)


class TestCoercivity:
    @pytest.mark.parametrize("alpha,r", [(0.4, 1.0), (0.4, 5.0), (0.7, 2 / 0.7), (0.9, 1.0)])
    def test_random_sequences(self, alpha, r):
        rng = np.random.default_rng(1234)
        op = make_op(64, r, alpha)
        for _ in range(200):
            v = rng.standard_normal(65)
            assert coercivity_gap(op, v).min() >= -1e-12 * np.max(v**2)

    @given(
        v=st.lists(st.floats(-1e3, 1e3), min_size=17, max_size=17),
        alpha=st.sampled_from([0.3, 0.5, 0.9]),
    )
    @settings(deadline=None)
    def test_arbitrary_sequences(self, v, alpha):
        op = make_op(16, 2 / alpha, alpha)
        v = np.array(v)
        scale = max(np.max(v**2), 1e-300)
        assert coercivity_gap(op, v).min() >= -1e-12 * scale * np.max(op.weights)


class TestPCoefficients:
    def test_base_case(self):
        op = make_op(4, 2, 0.5)
        p = op.p_coefficients(1)
        np.testing.assert_allclose(p.values, [1 / op.weight_row(1)[0]], rtol=1e-15)

    def test_last_entry_is_inverse_diagonal(self):
        op = make_op(10, 2, 0.5)
        for n in range(1, 11):
            assert op.p_coefficients(n).values[-1] == pytest.approx(1 / op.weight_row(n)[-1], rel=1e-15)

    def test_recursion_solves_triangular_system(self):
        # sum_{k=i}^{n} p^{(n)}_{n-k} (g_{k,i} - g_{k,i+1}) = delta_{i,n}, with g_{i,i+1} = 0
        op = make_op(12, 3, 0.6)
        G = np.pad(op.weights, ((0, 0), (0, 1)))
        n = 12
        p = op.p_coefficients(n).values  # p[k-1] = p^{(n)}_{n-k}
        for i in range(1, n + 1):
            total = sum(p[k - 1] * (G[k - 1, i - 1] - G[k - 1, i]) for k in range(i, n + 1))
            assert total == pytest.approx(float(i == n), abs=1e-12)

    @pytest.mark.parametrize("alpha", [0.4, 0.6, 0.8])
    @pytest.mark.parametrize("N", [16, 64])
    def test_bounds(self, alpha, N):
        for r in (1.0, 2 / alpha):
            op = make_op(N, r, alpha)
            t = op.mesh.nodes
            for k in range(1, N + 1):
                p = op.p_coefficients(k)
                assert p.nonnegative
                assert p.values.sum() <= 11 * t[k] ** alpha / (4 * math.gamma(1 + alpha))
                i = np.arange(1, k + 1)
                for gam in (alpha, 1 / math.log(N)):
                    lhs = p.values @ i ** (r * (gam - alpha))
                    rhs = (
                        11 * math.gamma(1 + gam - alpha) / (4 * math.gamma(1 + gam))
                        * t[k] ** gam * N ** (r * (gam - alpha))
                    )
                    assert lhs <= rhs


class TestStepRestriction:
    def test_constant_coefficient_is_unrestricted(self):
        op = make_op(8, 2, 0.5)
        tau, ok = op.max_step_restriction(2.0, 0.0, 1.0, 3)
        assert tau == math.inf and ok

    def test_example_configuration(self):
        op = make_op(64, 5, 0.4)
        for n in (1, 2, 64):
            tau, ok = op.max_step_restriction(2.0, 1.0, 1.0, n)
            assert np.isfinite(tau) and tau > 0
        # value at n = N: 2 m1 (a_NN + b_{N,N-1}) / ((1 - sigma) (1 - 2 sigma)^2)
        tau, ok = op.max_step_restriction(2.0, 1.0, 1.0, 64)
        expected = 4 * (op.coeff_a(64, 64) + op.coeff_b(64, 63)) / (0.8 * 0.6**2)
        assert tau == pytest.approx(expected, rel=1e-14)
        assert ok == (op.mesh.steps.max() <= tau)

    def test_validation(self):
        op = make_op(8, 2, 0.5)
        with pytest.raises(ValueError):
            op.max_step_restriction(0.0, 1.0, 1.0, 1)
        with pytest.raises(IndexError):
            op.max_step_restriction(1.0, 1.0, 1.0, 9)


def _orders(alpha, r, Ns):
    def v(t):
        return t**3 + t**alpha

    def cap(t):
        return caputo_power(alpha, 3, t) + caputo_power(alpha, alpha, t)

    errs = [truncation_error(make_op(N, r, alpha), v, cap) for N in Ns]
    return np.log2(np.array(errs[:-1]) / np.array(errs[1:]))


@pytest.mark.parametrize("alpha,r", [(0.5, 1.0), (0.5, 4.0), (0.8, 2.5)])
def test_truncation_order(alpha, r):
    orders = _orders(alpha, r, [32, 64, 128, 256])
    assert orders.min() >= min(3 - alpha, r * alpha) - 0.15
