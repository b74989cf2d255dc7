import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from capdyn.errors import (
    DomainError,
    NonDiagonalizableError,
    SingularStepError,
    SingularUtilityError,
)
from capdyn.expm import expm
from capdyn.matevol import (
    MatrixRateCurve,
    MatrixRatePair,
    UtilityMatrix,
    commutes,
    discrete_evolve_lower,
    discrete_evolve_upper,
    eigen_decompose,
    eigen_evolve,
    lower_to_upper_matrix,
    matrix_lower_rate,
    matrix_upper_rate,
    ordered_exp,
    unordered_exp,
    upper_to_lower_matrix,
    volterra_bound,
    volterra_series,
)
from capdyn.rates import RateCurve, compound_lower, lower_rate, upper_rate, utility_from_rate

NIL_UP = np.array([[0.0, 1.0], [0.0, 0.0]])
NIL_DOWN = np.array([[0.0, 0.0], [1.0, 0.0]])


def rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


class TestExpm:
    def test_nilpotent_exact(self):
        assert np.array_equal(expm(NIL_UP), np.eye(2) + NIL_UP)
        assert np.abs(expm(3.0 * NIL_UP) - (np.eye(2) + 3.0 * NIL_UP)).max() <= 1e-14

    @pytest.mark.parametrize("theta", [0.01, 0.5, 1.0, 3.0, 7.5, 10.0])
    def test_rotation(self, theta):
        A = np.array([[0.0, -theta], [theta, 0.0]])
        assert np.abs(expm(A) - rotation(theta)).max() <= 1e-13

    def test_zero_and_empty(self):
        assert np.array_equal(expm(np.zeros((3, 3))), np.eye(3))
        assert expm(np.zeros((0, 0))).shape == (0, 0)

    def test_against_scipy(self):
        rng = np.random.default_rng(11)
        for scale in (1e-3, 0.1, 1.0, 4.0, 20.0):
            for _ in range(20):
                A = rng.normal(size=(4, 4)) * scale
                ref = scipy.linalg.expm(A)
                assert np.abs(expm(A) - ref).max() <= 1e-11 * max(1.0, np.abs(ref).max())

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            expm(np.zeros((2, 3)))


class TestCurve:
    def test_validation(self):
        with pytest.raises(DomainError):
            MatrixRateCurve((0, 1), np.zeros((2, 2, 3)))
        with pytest.raises(DomainError):
            MatrixRateCurve((0, 1, 2), np.zeros((1, 2, 2)))
        with pytest.raises(DomainError):
            MatrixRateCurve.from_dict({"dimension": 3, "breakpoints": [0, 1], "generators": [np.eye(2).tolist()]})

    def test_json_round_trip(self):
        c = MatrixRateCurve((0, 1, 2), np.array([NIL_UP, NIL_DOWN]))
        back = MatrixRateCurve.from_dict(c.to_dict())
        assert back.breakpoints == c.breakpoints
        assert np.array_equal(back.generators, c.generators)


class TestOrderedExp:
    def test_zero_generator(self):
        c = MatrixRateCurve.constant(np.zeros((3, 3)), 0, 5)
        assert np.array_equal(ordered_exp(c, 0, 5).matrix, np.eye(3))

    def test_empty_span(self):
        c = MatrixRateCurve.constant(NIL_UP, 0, 5)
        assert np.array_equal(ordered_exp(c, 2, 2).matrix, np.eye(2))

    def test_diagonal_reduces_to_scalar(self):
        r1, r2, dt = 0.03, -0.2, 2.5
        c = MatrixRateCurve.constant(np.diag([r1, r2]), 0, dt)
        U = ordered_exp(c, 0, dt).matrix
        assert np.allclose(U, np.diag([math.exp(r1 * dt), math.exp(r2 * dt)]), rtol=1e-14, atol=0)

    def test_two_piece_order(self):
        c = MatrixRateCurve((0, 1, 2), np.array([NIL_UP, NIL_DOWN]))
        U = ordered_exp(c, 0, 2).matrix
        later_first = scipy.linalg.expm(NIL_DOWN) @ scipy.linalg.expm(NIL_UP)
        earlier_first = scipy.linalg.expm(NIL_UP) @ scipy.linalg.expm(NIL_DOWN)
        assert np.abs(U - later_first).max() <= 1e-14
        assert np.abs(U - earlier_first).max() > 0.5
        assert np.abs(U - scipy.linalg.expm(NIL_UP + NIL_DOWN)).max() > 0.1

    def test_substeps_agree(self):
        c = MatrixRateCurve((0, 1, 2), np.array([NIL_UP, NIL_DOWN]))
        assert np.allclose(ordered_exp(c, 0, 2, 7).matrix, ordered_exp(c, 0, 2).matrix, atol=1e-13)

    def test_errors(self):
        c = MatrixRateCurve.constant(NIL_UP, 0, 1)
        with pytest.raises(DomainError):
            ordered_exp(c, 0, 2)
        with pytest.raises(DomainError):
            ordered_exp(c, 1, 0)

    def test_composability(self):
        rng = np.random.default_rng(5)
        c = MatrixRateCurve((0, 0.5, 1.2, 2, 3), rng.normal(size=(4, 3, 3)) * 0.7)
        bps = c.breakpoints
        for i in range(len(bps)):
            for j in range(i, len(bps)):
                for k in range(j, len(bps)):
                    whole = ordered_exp(c, bps[i], bps[k]).matrix
                    split = ordered_exp(c, bps[j], bps[k]).matrix @ ordered_exp(c, bps[i], bps[j]).matrix
                    assert np.abs(whole - split).max() <= 1e-10

    def test_commuting_collapse(self):
        rng = np.random.default_rng(9)
        P = rng.normal(size=(3, 3))
        Pinv = np.linalg.inv(P)
        gens = np.array([P @ np.diag(rng.normal(size=3) * 0.4) @ Pinv for _ in range(4)])
        c = MatrixRateCurve((0, 1, 1.5, 2.7, 4), gens)
        assert commutes(c, 1e-10)
        assert np.abs(ordered_exp(c, 0, 4).matrix - unordered_exp(c, 0, 4)).max() <= 1e-9


class TestVolterra:
    def test_order_one_zero(self):
        c = MatrixRateCurve.constant(np.zeros((2, 2)), 0, 3)
        assert np.array_equal(volterra_series(c, 0, 3, 1, 10).matrix, np.eye(2))

    def test_order_one_constant_is_exact(self):
        R = np.array([[0.3, -1.2], [0.4, 0.05]])
        c = MatrixRateCurve.constant(R, 0, 2)
        V = volterra_series(c, 0.5, 1.75, 1, 3).matrix
        assert np.allclose(V, np.eye(2) + R * 1.25, rtol=0, atol=1e-15)

    def test_matches_ordered_exp_on_noncommuting_curve(self):
        c = MatrixRateCurve((0, 1, 2), np.array([NIL_UP, NIL_DOWN]))
        V = volterra_series(c, 0, 2, 8, 4000).matrix
        assert np.abs(V - ordered_exp(c, 0, 2).matrix).max() <= 1e-6

    def test_order_two_second_term(self):
        # constant R: second term is (R dt)^2 / 2
        R = np.array([[0.1, 0.7], [-0.3, 0.2]])
        c = MatrixRateCurve.constant(R, 0, 1)
        V2 = volterra_series(c, 0, 1, 2, 50).matrix - volterra_series(c, 0, 1, 1, 50).matrix
        assert np.allclose(V2, R @ R / 2, atol=1e-15)

    def test_error_within_tail_bound(self):
        A = np.array([[0.2, 0.5], [-0.3, 0.1]])
        B = np.array([[-0.1, 0.0], [0.4, 0.15]])
        c = MatrixRateCurve((0, 1, 2), np.array([A, B]))
        U = ordered_exp(c, 0, 2).matrix
        for k in range(1, 9):
            err = np.linalg.norm(volterra_series(c, 0, 2, k, 3000).matrix - U, 2)
            assert err <= volterra_bound(c, 0, 2, k) + 1e-8

    def test_bound_matches_series_tail(self):
        c = MatrixRateCurve.constant(np.eye(2), 0, 1.5)
        M = 1.5
        assert volterra_bound(c, 0, 1.5, 3) == pytest.approx(
            math.exp(M) - sum(M**j / math.factorial(j) for j in range(4)), rel=1e-12
        )


class TestMatrixRates:
    def test_identity(self):
        u = UtilityMatrix(0, 1, np.eye(3))
        assert not matrix_lower_rate(u).any()
        assert not matrix_upper_rate(u).any()

    def test_diagonal_reduces_to_scalar(self):
        u = UtilityMatrix(0, 1, np.diag([1.05, 1.10]))
        assert np.allclose(matrix_lower_rate(u), np.diag([0.05, 0.10]), atol=1e-15)
        assert np.allclose(matrix_upper_rate(u), np.diag([1 - 1 / 1.05, 1 - 1 / 1.10]), atol=1e-15)

    def test_singular_utility(self):
        with pytest.raises(SingularUtilityError):
            matrix_upper_rate(UtilityMatrix(0, 1, np.array([[1.0, 2.0], [2.0, 4.0]])))

    def test_duality_random(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            U = np.eye(3) + 0.3 * rng.normal(size=(3, 3))
            if np.linalg.cond(U) > 50:
                continue
            pair = MatrixRatePair.from_utility(UtilityMatrix(0, 1, U))
            assert pair.residual() <= 1e-12

    def test_scalar_conversions(self):
        L = np.array([[0.3, 0.1], [-0.2, 0.05]])
        assert np.allclose(upper_to_lower_matrix(lower_to_upper_matrix(L)), L, atol=1e-14)


class TestDiscreteEvolution:
    def test_empty(self):
        p = np.array([1.0, 2.0])
        assert np.array_equal(discrete_evolve_lower([], p), p)
        assert np.array_equal(discrete_evolve_upper([], p), p)

    def test_scalar_cases(self):
        assert discrete_evolve_lower([[[0.1]], [[0.1]]], [100.0]) == pytest.approx([121.0], rel=1e-15)
        assert discrete_evolve_upper([[[0.5]]], [100.0]) == pytest.approx([50.0], rel=1e-15)

    def test_order_matters(self):
        A = np.array([[0.0, 0.5], [0.0, 0.0]])
        B = np.array([[0.0, 0.0], [0.5, 0.0]])
        p = np.array([1.0, 1.0])
        ab = discrete_evolve_lower([A, B], p)
        ba = discrete_evolve_lower([B, A], p)
        # (I+B)(I+A)p = [1.5, 1.75], (I+A)(I+B)p = [1.75, 1.5]
        assert np.allclose(ab, [1.5, 1.75]) and np.allclose(ba, [1.75, 1.5])

    def test_round_trip(self):
        rng = np.random.default_rng(4)
        lowers = [0.2 * rng.normal(size=(3, 3)) for _ in range(12)]
        uppers = [lower_to_upper_matrix(L) for L in lowers]
        p0 = rng.normal(size=3)
        back = discrete_evolve_upper(uppers, discrete_evolve_lower(lowers, p0))
        assert np.abs(back - p0).max() <= 1e-10

    def test_singular_step(self):
        with pytest.raises(SingularStepError):
            discrete_evolve_lower([-np.eye(2)], [1.0, 1.0])
        with pytest.raises(SingularStepError):
            discrete_evolve_upper([np.eye(2)], [1.0, 1.0])


class TestCommutes:
    def test_single_piece(self):
        assert commutes(MatrixRateCurve.constant(NIL_UP))

    def test_diagonals(self):
        c = MatrixRateCurve((0, 1, 2, 3), np.array([np.diag(v) for v in ([1, 2], [-3, 0.5], [0, 7])]))
        assert commutes(c)

    def test_nilpotent_pair(self):
        assert not np.array_equal(NIL_UP @ NIL_DOWN - NIL_DOWN @ NIL_UP, np.zeros((2, 2)))
        assert np.array_equal(NIL_UP @ NIL_DOWN - NIL_DOWN @ NIL_UP, np.diag([1.0, -1.0]))
        assert not commutes(MatrixRateCurve((0, 1, 2), np.array([NIL_UP, NIL_DOWN])))


class TestEigen:
    def test_zero(self):
        p = np.array([3.0, -1.0])
        assert np.array_equal(eigen_evolve(np.zeros((2, 2)), p, 4.0), p)

    def test_diagonal(self):
        out = eigen_evolve(np.diag([0.1, -0.4]), [2.0, 5.0], 3.0)
        assert out == pytest.approx([2 * math.exp(0.3), 5 * math.exp(-1.2)], rel=1e-14)

    @pytest.mark.parametrize("omega, dt", [(1.0, 0.5), (2.0, 3.0), (0.3, 10.0)])
    def test_rotation(self, omega, dt):
        R = np.array([[0.0, -omega], [omega, 0.0]])
        eig = eigen_decompose(R)
        assert sorted(eig.eigenvalues.imag) == pytest.approx([-omega, omega])
        p0 = np.array([0.6, -1.3])
        out = eigen_evolve(R, p0, dt)
        assert np.abs(out - rotation(omega * dt) @ p0).max() <= 1e-12
        assert np.abs(out - ordered_exp(MatrixRateCurve.constant(R, 0, dt), 0, dt).apply(p0)).max() <= 1e-12

    def test_modes_grow_independently(self):
        R = np.array([[0.1, -0.8], [0.5, -0.2]])
        eig = eigen_decompose(R)
        p0 = np.array([1.0, 2.0])
        dt = 1.7
        assert np.allclose(eig.modes(eig.evolve_complex(p0, dt)), np.exp(eig.eigenvalues * dt) * eig.modes(p0))

    def test_defective(self):
        with pytest.raises(NonDiagonalizableError):
            eigen_evolve(NIL_UP, [1.0, 1.0], 1.0)

    def test_decomposition_invariants(self):
        rng = np.random.default_rng(8)
        R = rng.normal(size=(3, 3))
        e = eigen_decompose(R)
        assert np.abs((e.basis * e.eigenvalues) @ e.basis_inverse - R).max() <= 1e-9
        assert np.abs(e.basis @ e.basis_inverse - np.eye(3)).max() <= 1e-10


class TestScalarReduction:
    def test_ordered_exp_vs_utility(self):
        rc = RateCurve((0, 1, 3), (0.04, -0.02))
        mc = MatrixRateCurve((0, 1, 3), np.array([[[0.04]], [[-0.02]]]))
        assert ordered_exp(mc, 0.2, 2.6).matrix[0, 0] == pytest.approx(utility_from_rate(rc, 0.2, 2.6).factor, rel=1e-12)

    def test_rates_and_compounding(self):
        u = utility_from_rate(RateCurve.flat(0.07, 0, 2), 0, 2)
        um = UtilityMatrix(0, 2, np.array([[u.factor]]))
        assert matrix_lower_rate(um)[0, 0] == pytest.approx(lower_rate(u), rel=1e-12)
        assert matrix_upper_rate(um)[0, 0] == pytest.approx(upper_rate(u), rel=1e-12)
        rates = [0.1, -0.05, 0.2]
        assert discrete_evolve_lower([[[r]] for r in rates], [10.0])[0] == pytest.approx(compound_lower(rates, 10.0), rel=1e-12)

    def test_eigen_scalar(self):
        assert eigen_evolve([[0.05]], [100.0], 2.0)[0] == pytest.approx(100 * math.exp(0.1), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.float64, (3, 3), elements=st.floats(-0.25, 0.25)),
    st.lists(arrays(np.float64, (3, 3), elements=st.floats(-0.25, 0.25)), max_size=30),
    arrays(np.float64, 3, elements=st.floats(-100, 100)),
)
def test_inverse_evolution_property(first, rest, p0):
    lowers = [first] + rest
    uppers = [lower_to_upper_matrix(L) for L in lowers]
    p = discrete_evolve_lower(lowers, p0)
    back = discrete_evolve_upper(uppers, p)
    assert np.abs(back - p0).max() <= 1e-10 * max(1.0, np.abs(p0).max())
