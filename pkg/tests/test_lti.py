"""Tests for the LTI system module."""

import numpy as np
import pytest

from gapmor.linalg import SingularMatrixError, spectral_abscissa
from gapmor.lti import (
    DimensionMismatchError,
    InterpolationData,
    NonzeroFeedthroughError,
    StateSpace,
    closed_loop_pole_residue,
    conjugate_pairs,
    coprime_factorize,
    error_system,
    pole_residue,
    transfer_eval,
)

POINTS = [0.3 + 1.7j, 2.5, -0.4 + 0.2j, 10j]


class TestStateSpace:
    """Tests for realizations."""

    def test_dimensions_and_default_feedthrough(self):
        """Test n, m, p and zero D."""
        sys = StateSpace(-np.eye(3), np.ones((3, 2)), np.ones((1, 3)))
        assert (sys.n, sys.m, sys.p) == (3, 2, 1)
        assert sys.d.shape == (1, 2)
        assert not sys.has_feedthrough()

    def test_row_vector_input_is_transposed(self):
        """Test a 1-D B becomes a column."""
        sys = StateSpace(-np.eye(3), [1.0, 2.0, 3.0], [1.0, 0.0, 0.0])
        assert sys.b.shape == (3, 1)
        assert sys.c.shape == (1, 3)

    def test_matrices_are_read_only_copies(self):
        """Test the realization does not alias caller arrays."""
        a = -np.eye(2)
        sys = StateSpace(a, np.ones((2, 1)), np.ones((1, 2)))
        a[0, 0] = 5.0
        assert sys.a[0, 0] == -1.0
        with pytest.raises(ValueError):
            sys.a[0, 0] = 3.0

    def test_non_square_a_raises(self):
        """Test a rectangular A is rejected."""
        with pytest.raises(DimensionMismatchError):
            StateSpace(np.ones((2, 3)), np.ones((2, 1)), np.ones((1, 3)))

    def test_mismatched_c_raises(self):
        """Test C with the wrong column count is rejected."""
        with pytest.raises(DimensionMismatchError):
            StateSpace(-np.eye(3), np.ones((3, 1)), np.ones((1, 2)))

    def test_non_finite_entries_raise(self):
        """Test NaN entries are rejected."""
        with pytest.raises(ValueError):
            StateSpace(np.array([[np.nan]]), [[1.0]], [[1.0]])

    def test_evaluate_matches_formula(self, mimo_system):
        """Test D + C (sI - A)^{-1} B."""
        s = 0.7 + 2.0j
        expected = mimo_system.c @ np.linalg.solve(s * np.eye(mimo_system.n) - mimo_system.a, mimo_system.b)
        assert np.allclose(transfer_eval(mimo_system, s), expected)

    def test_evaluate_at_pole_raises(self):
        """Test evaluation at an eigenvalue is singular."""
        sys = StateSpace(np.diag([-1.0, -2.0]), np.ones((2, 1)), np.ones((1, 2)))
        with pytest.raises(SingularMatrixError):
            sys.evaluate(-1.0)

    def test_derivative_by_finite_difference(self, stable_system):
        """Test evaluate_derivative against a central difference."""
        s, h = 0.8 + 0.5j, 1e-6
        approx = (stable_system.evaluate(s + h) - stable_system.evaluate(s - h)) / (2 * h)
        assert np.allclose(stable_system.evaluate_derivative(s), approx, rtol=1e-5)


class TestPoleResidue:
    """Tests for pole-residue forms."""

    @pytest.mark.parametrize("s", POINTS)
    def test_resummation_matches_transfer(self, mimo_system, s):
        """Test the pole-residue sum equals the transfer function."""
        pr = pole_residue(mimo_system)
        assert np.allclose(pr.evaluate(s), mimo_system.evaluate(s), rtol=1e-9, atol=1e-12)

    def test_poles_are_eigenvalues(self, unstable_system):
        """Test the poles are the eigenvalues of A."""
        pr = pole_residue(unstable_system)
        expected = np.sort_complex(np.linalg.eigvals(unstable_system.a))
        assert np.allclose(np.sort_complex(pr.poles), expected)


class TestCoprimeFactorization:
    """Tests for the closed-loop factorization."""

    def test_closed_loop_is_stable(self, unstable_system):
        """Test sigma(A_F) lies in the open left half-plane."""
        clf = coprime_factorize(unstable_system)
        assert spectral_abscissa(clf.a_f) < 0

    @pytest.mark.parametrize("s", POINTS[:2])
    def test_coprime_identity(self, mimo_system, s):
        """Test M(s)^{-1} N(s) = G(s) and M^{-1}(s) M(s) = I."""
        clf = coprime_factorize(mimo_system)
        m = clf.m_system().evaluate(s)
        n = clf.n_system().evaluate(s)
        g = mimo_system.evaluate(s)
        assert np.linalg.norm(np.linalg.solve(m, n) - g) < 1e-9 * (1 + np.linalg.norm(g))
        assert np.allclose(clf.m_inverse_system().evaluate(s) @ m, np.eye(2), atol=1e-9)

    def test_gf_realization_blocks(self, mimo_system):
        """Test G_F = [M, N] column-wise."""
        clf = coprime_factorize(mimo_system)
        s = 1.0 + 1.0j
        gf = clf.gf.evaluate(s)
        assert np.allclose(gf[:, :2], clf.m_system().evaluate(s))
        assert np.allclose(gf[:, 2:], clf.n_system().evaluate(s))

    def test_closed_loop_pole_residue_matches_gf(self, unstable_system):
        """Test the closed-loop pole-residue form re-sums to G_F."""
        clf = coprime_factorize(unstable_system)
        pr = closed_loop_pole_residue(clf)
        assert pr.f is not None
        for s in POINTS:
            assert np.allclose(pr.evaluate(s), clf.gf.evaluate(s), rtol=1e-9, atol=1e-12)

    def test_mirrored_poles_annihilate_directions(self, unstable_system):
        """Test G(-lambda_i) b_i = -f_i and G_F(-lambda_i) [f_i; b_i] = 0."""
        clf = coprime_factorize(unstable_system)
        pr = closed_loop_pole_residue(clf)
        for lam, f, b in zip(pr.poles, pr.f, pr.b):
            assert np.allclose(unstable_system.evaluate(-lam) @ b, -f, atol=1e-8)
            assert np.allclose(clf.gf.evaluate(-lam) @ np.concatenate([f, b]), 0.0, atol=1e-8)

    def test_feedthrough_rejected(self):
        """Test D != 0 is rejected."""
        sys = StateSpace(-np.eye(2), np.ones((2, 1)), np.ones((1, 2)), [[1.0]])
        with pytest.raises(NonzeroFeedthroughError):
            coprime_factorize(sys)


class TestInterpolationData:
    """Tests for shift and direction sets."""

    def test_imaginary_shift_rejected(self):
        """Test shifts on the imaginary axis are rejected."""
        with pytest.raises(ValueError):
            InterpolationData([1j, -1j], np.ones((2, 1)), np.ones((2, 1)))

    def test_unpaired_complex_shift_rejected(self):
        """Test sets not closed under conjugation are rejected."""
        with pytest.raises(ValueError):
            InterpolationData([1 + 1j, 2.0], np.ones((2, 1)), np.ones((2, 1)))

    def test_direction_rows_must_match(self):
        """Test mismatched direction counts are rejected."""
        with pytest.raises(DimensionMismatchError):
            InterpolationData([1.0, 2.0], np.ones((3, 1)), np.ones((2, 1)))

    def test_canonical_order(self):
        """Test reals first ascending, then pairs with positive imaginary part first."""
        data = InterpolationData(
            [2 - 1j, 5.0, 2 + 1j, 1.0],
            np.array([[1 - 2j], [3.0], [1 + 2j], [4.0]]),
            np.ones((4, 1)),
        )
        canon = data.canonical()
        assert np.allclose(canon.shifts, [1.0, 5.0, 2 + 1j, 2 - 1j])
        assert np.allclose(canon.right[:, 0], [4.0, 3.0, 1 + 2j, 1 - 2j])
        assert canon.shifts[3] == np.conj(canon.shifts[2])

    def test_conjugate_pairs(self):
        """Test real indices and pair indices."""
        real_idx, pairs = conjugate_pairs(np.array([1 - 1j, 3.0, 1 + 1j]))
        assert real_idx == [1]
        assert pairs == [(2, 0)]


class TestErrorSystem:
    """Tests for error realizations."""

    def test_difference_of_transfer_functions(self, stable_system):
        """Test the block realization equals the difference."""
        other = StateSpace(-np.eye(2), np.ones((2, 1)), np.ones((1, 2)))
        err = error_system(stable_system, other)
        s = 0.5 + 0.5j
        expected = stable_system.evaluate(s) - other.evaluate(s)
        assert err.n == stable_system.n + 2
        assert np.allclose(err.evaluate(s), expected)
        assert np.allclose(StateSpace(err.a, err.b, err.c).evaluate(s), expected)

    def test_identical_operands(self, stable_system):
        """Test identical operands are detected."""
        assert error_system(stable_system, stable_system).identical_operands

    def test_dimension_mismatch(self, stable_system, mimo_system):
        """Test different input/output counts are rejected."""
        with pytest.raises(DimensionMismatchError):
            error_system(stable_system, mimo_system)
