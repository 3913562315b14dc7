"""Tests for the dense linear algebra module."""

import numpy as np
import pytest

from gapmor import linalg
from gapmor.linalg import (
    DefectiveMatrixError,
    NotStabilizingError,
    SingularMatrixError,
    SpectrumCollisionError,
    SubspaceDimensionError,
)
from gapmor.models import random_stabilizable


class TestSolveLinear:
    """Tests for LU-based solves."""

    def test_solves_well_conditioned_system(self):
        """Test the solution satisfies the equation."""
        rng = np.random.default_rng(0)
        a = rng.standard_normal((6, 6)) + 6 * np.eye(6)
        rhs = rng.standard_normal((6, 2))
        x = linalg.solve_linear(a, rhs)
        assert np.allclose(a @ x, rhs)

    def test_singular_matrix_raises(self):
        """Test a rank-one matrix is rejected."""
        with pytest.raises(SingularMatrixError):
            linalg.solve_linear(np.ones((3, 3)), np.ones(3))

    def test_non_square_raises(self):
        """Test a rectangular matrix is rejected."""
        with pytest.raises(ValueError):
            linalg.solve_linear(np.ones((2, 3)), np.ones(2))


class TestEig:
    """Tests for the eigendecomposition wrapper."""

    def test_left_and_right_vectors(self):
        """Test A V = V diag(lambda) and W^T V = I."""
        a = random_stabilizable(6, n_unstable=1, seed=2).a
        ed = linalg.eig(a)
        assert np.allclose(a @ ed.right, ed.right * ed.eigenvalues)
        assert np.allclose(ed.left.T @ a, ed.eigenvalues[:, None] * ed.left.T)
        assert np.allclose(ed.left.T @ ed.right, np.eye(6), atol=1e-10)

    def test_conjugate_pairs_are_adjacent(self):
        """Test complex eigenvalues come in adjacent conjugate pairs."""
        ed = linalg.eig(np.array([[-1.0, 2.0], [-2.0, -1.0]]))
        assert ed.eigenvalues[0] == pytest.approx(np.conj(ed.eigenvalues[1]))

    def test_defective_matrix_raises(self):
        """Test a Jordan block is rejected."""
        with pytest.raises(DefectiveMatrixError):
            linalg.eig(np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_spectral_abscissa(self):
        """Test the abscissa of a diagonal matrix."""
        assert linalg.spectral_abscissa(np.diag([-3.0, 0.5, -1.0])) == pytest.approx(0.5)
        assert linalg.spectral_abscissa(np.zeros((0, 0))) == -np.inf


class TestMatrixEquations:
    """Tests for the Sylvester and Lyapunov solvers."""

    @pytest.mark.parametrize("seed", range(100))
    def test_sylvester_residual(self, seed):
        """Test A X + X B + C = 0 holds relative to the size of its terms."""
        rng = np.random.default_rng(seed)
        a = random_stabilizable(2 + seed % 9, seed=seed).a
        b = random_stabilizable(1 + seed % 5, seed=1000 + seed).a.T
        c = rng.standard_normal((a.shape[0], b.shape[0]))
        x = linalg.solve_sylvester(a, b, c)
        scale = np.linalg.norm(a) * np.linalg.norm(x) + np.linalg.norm(x) * np.linalg.norm(b) + np.linalg.norm(c)
        assert np.linalg.norm(a @ x + x @ b + c) <= 1e-10 * scale

    @pytest.mark.parametrize("seed", range(100))
    def test_lyapunov_residual(self, seed):
        """Test the Lyapunov solution is symmetric and satisfies the equation."""
        sys = random_stabilizable(2 + seed % 9, m=1 + seed % 3, seed=seed)
        q = sys.b @ sys.b.T
        x = linalg.solve_lyapunov(sys.a, q)
        scale = 2 * np.linalg.norm(sys.a) * np.linalg.norm(x) + np.linalg.norm(q)
        assert np.allclose(x, x.T, rtol=0, atol=1e-12 * np.linalg.norm(x))
        assert np.linalg.norm(sys.a @ x + x @ sys.a.T + q) <= 1e-10 * scale

    def test_lyapunov_collision_raises(self):
        """Test eigenvalues +1 and -1 collide."""
        with pytest.raises(SpectrumCollisionError):
            linalg.solve_lyapunov(np.diag([1.0, -1.0]), np.eye(2))

    def test_sylvester_collision_raises(self):
        """Test sigma(A) meeting sigma(-B) is rejected."""
        with pytest.raises(SpectrumCollisionError):
            linalg.solve_sylvester(np.diag([2.0]), np.diag([-2.0]), np.ones((1, 1)))


class TestRiccati:
    """Tests for the Riccati solvers."""

    @pytest.mark.parametrize("seed", range(100))
    def test_filter_care_stabilizes(self, seed):
        """Test P is symmetric PSD, small residual, and A - P C^T C is stable."""
        sys = random_stabilizable(2 + seed % 9, m=1 + seed % 2, p=1 + (seed // 3) % 2,
                                  n_unstable=seed % 3, seed=seed)
        p = linalg.solve_filter_care(sys.a, sys.b, sys.c)
        res = linalg.riccati_residual(sys.a, sys.b, sys.c, p)
        gain = p @ sys.c.T
        scale = (2 * np.linalg.norm(sys.a) * np.linalg.norm(p) + np.linalg.norm(gain) ** 2
                 + np.linalg.norm(sys.b) ** 2)
        assert np.allclose(p, p.T, rtol=0, atol=1e-12 * max(1.0, np.linalg.norm(p)))
        assert np.linalg.eigvalsh(p).min() > -1e-10 * max(1.0, np.linalg.norm(p))
        assert np.linalg.norm(res) <= 1e-9 * scale
        assert linalg.spectral_abscissa(sys.a - gain @ sys.c) < 0

    def test_control_care_is_dual(self):
        """Test A - B B^T Q is stable and the control equation holds."""
        sys = random_stabilizable(6, n_unstable=2, seed=9)
        q = linalg.solve_control_care(sys.a, sys.b, sys.c)
        res = sys.a.T @ q + q @ sys.a - q @ sys.b @ sys.b.T @ q + sys.c.T @ sys.c
        assert np.linalg.norm(res) <= 1e-8 * max(1.0, np.linalg.norm(q)) ** 2
        assert linalg.spectral_abscissa(sys.a - sys.b @ sys.b.T @ q) < 0

    def test_scalar_equation(self):
        """Test the closed form for a = 1, b = c = 1: P = 1 + sqrt(2)."""
        p = linalg.solve_filter_care(np.array([[1.0]]), np.array([[1.0]]), np.array([[1.0]]))
        assert p[0, 0] == pytest.approx(1.0 + np.sqrt(2.0))

    def test_undetectable_unstable_mode_raises(self):
        """Test an unstable mode invisible to C cannot be stabilized."""
        a = np.diag([1.0, -1.0])
        b = np.array([[1.0], [1.0]])
        c = np.array([[0.0, 1.0]])
        with pytest.raises((NotStabilizingError, SubspaceDimensionError)):
            linalg.solve_filter_care(a, b, c)


class TestPsdFactor:
    """Tests for PSD factors."""

    def test_factor_reproduces_matrix(self):
        """Test L L^T equals the input."""
        rng = np.random.default_rng(7)
        g = rng.standard_normal((5, 3))
        x = g @ g.T
        l = linalg.psd_factor(x)
        assert np.allclose(l @ l.T, x)
