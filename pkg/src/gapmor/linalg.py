"""
Dense linear algebra module for gapmor.
Factorizations, eigendecompositions and the Lyapunov/Sylvester/Riccati
solvers that the system and reduction modules rely on.
"""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as spla

logger = logging.getLogger(__name__)


class NumericalError(Exception):
    """Base exception for numerical failures."""
    pass


class SingularMatrixError(NumericalError):
    """Raised when a pivot falls below the conditioning threshold."""
    pass


class DefectiveMatrixError(NumericalError):
    """Raised when a matrix is not semi-simple to tolerance."""
    pass


class ConvergenceFailure(NumericalError):
    """Raised when an iterative LAPACK kernel hits its iteration cap."""
    pass


class SpectrumCollisionError(NumericalError):
    """Raised when lambda_i(A) + mu_j(B) is numerically zero."""
    pass


class NotStabilizingError(NumericalError):
    """Raised when a Riccati solution does not stabilize the closed loop."""
    pass


class SubspaceDimensionError(NumericalError):
    """Raised when the stable invariant subspace has the wrong dimension."""
    pass


class RankDeficientError(NumericalError):
    """Raised when a basis or factor lost rank."""
    pass


PIVOT_TOL = 1e-14
COLLISION_TOL = 1e-10
DEFECT_TOL = 1e-8
RICCATI_REFINE_TOL = 1e-9


@dataclass(frozen=True)
class Eigendecomposition:
    """
    Eigenvalues with right and left eigenvectors of a real matrix.

    Left vectors follow the transpose convention ``w_i^T A = lambda_i w_i^T``
    and are normalized so that ``W^T V = I``.
    """
    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray


def _fro(a: np.ndarray) -> float:
    return float(np.linalg.norm(a)) if a.size else 0.0


def solve_linear(a: np.ndarray, rhs: np.ndarray, pivot_tol: float = PIVOT_TOL) -> np.ndarray:
    """
    Solve ``a @ x = rhs`` by LU factorization with partial pivoting.

    Args:
        a: Square real or complex matrix
        rhs: Right-hand side (vector or matrix)
        pivot_tol: Smallest admissible ratio between the smallest and the
            largest pivot magnitude

    Returns:
        Solution with the shape of ``rhs``

    Raises:
        SingularMatrixError: If a pivot falls below the threshold
    """
    a = np.asarray(a)
    rhs = np.asarray(rhs)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"Expected a square matrix, got shape {a.shape}")
    if a.shape[0] == 0:
        return np.zeros_like(rhs, dtype=np.result_type(a, rhs))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", spla.LinAlgWarning)
        lu, piv = spla.lu_factor(a, check_finite=False)

    pivots = np.abs(np.diag(lu))
    scale = np.abs(lu).max()
    if scale == 0.0 or pivots.min() <= pivot_tol * scale:
        raise SingularMatrixError(
            f"Matrix is singular to working precision "
            f"(pivot ratio {pivots.min() / scale if scale else 0.0:.3e})"
        )
    return spla.lu_solve((lu, piv), rhs, check_finite=False)


def eig(a: np.ndarray, defect_tol: float = DEFECT_TOL) -> Eigendecomposition:
    """
    Eigendecomposition with left vectors taken as the inverse transpose
    of the right eigenvector matrix.

    LAPACK returns complex conjugate eigenvalues of a real matrix in
    adjacent positions, positive imaginary part first, with conjugate
    eigenvectors; that ordering is kept.

    Raises:
        DefectiveMatrixError: If cond(V) exceeds ``1 / defect_tol``
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if n == 0:
        empty = np.zeros((0, 0), dtype=complex)
        return Eigendecomposition(np.zeros(0, dtype=complex), empty, empty)

    try:
        lam, v = spla.eig(a, check_finite=False)
    except np.linalg.LinAlgError as e:
        raise ConvergenceFailure(f"Eigenvalue iteration failed: {e}") from e

    lam = lam.astype(complex)
    v = v.astype(complex)
    cond = np.linalg.cond(v)
    if not np.isfinite(cond) or cond > 1.0 / defect_tol:
        raise DefectiveMatrixError(
            f"Eigenvector matrix condition {cond:.3e} exceeds {1.0 / defect_tol:.1e}; "
            "matrix is not semi-simple to tolerance"
        )
    w = solve_linear(v, np.eye(n, dtype=complex)).T
    return Eigendecomposition(lam, v, w)


def real_schur(a: np.ndarray) -> tuple:
    """
    Real Schur decomposition ``Q^T A Q = T``.

    Returns:
        Tuple (Q, T) with Q orthogonal and T quasi-upper-triangular
    """
    a = np.asarray(a, dtype=float)
    try:
        t, q = spla.schur(a, output="real", check_finite=False)
    except np.linalg.LinAlgError as e:
        raise ConvergenceFailure(f"QR iteration failed: {e}") from e
    return q, t


def spectral_abscissa(a: np.ndarray) -> float:
    """Largest real part of the spectrum of ``a`` (``-inf`` when empty)."""
    a = np.asarray(a, dtype=float)
    if a.shape[0] == 0:
        return -np.inf
    return float(spla.eigvals(a, check_finite=False).real.max())


def _check_collision(lam: np.ndarray, mu: np.ndarray, scale: float) -> None:
    if lam.size == 0 or mu.size == 0:
        return
    gap = np.abs(lam[:, None] + mu[None, :]).min()
    if gap <= COLLISION_TOL * max(scale, 1.0):
        raise SpectrumCollisionError(
            f"Spectra collide: min |lambda_i + mu_j| = {gap:.3e}"
        )


def solve_sylvester(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """
    Solve ``A X + X B + C = 0`` with the Bartels-Stewart scheme.

    Raises:
        SpectrumCollisionError: If sigma(A) and sigma(-B) intersect
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    if c.shape != (a.shape[0], b.shape[0]):
        raise ValueError(f"Right-hand side has shape {c.shape}, expected {(a.shape[0], b.shape[0])}")
    if c.size == 0:
        return np.zeros_like(c)
    _check_collision(spla.eigvals(a), spla.eigvals(b), _fro(a) + _fro(b))
    return spla.solve_sylvester(a, b, -c)


def solve_lyapunov(a: np.ndarray, q: np.ndarray) -> np.ndarray:
    """
    Solve ``A X + X A^T + Q = 0`` for symmetric ``Q``.

    Returns:
        Symmetric solution X

    Raises:
        SpectrumCollisionError: If lambda_i(A) + lambda_j(A) is numerically zero
    """
    a = np.asarray(a, dtype=float)
    q = np.asarray(q, dtype=float)
    if q.size == 0:
        return np.zeros_like(q)
    lam = spla.eigvals(a)
    _check_collision(lam, lam, 2.0 * _fro(a))
    x = spla.solve_continuous_lyapunov(a, -q)
    return (x + x.T) / 2.0


def riccati_residual(a: np.ndarray, b: np.ndarray, c: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Residual ``A P + P A^T - P C^T C P + B B^T`` of the filter equation."""
    pc = p @ c.T
    return a @ p + p @ a.T - pc @ pc.T + b @ b.T


def _relative_riccati_residual(a, b, c, p, res) -> float:
    pc = p @ c.T
    scale = 2.0 * _fro(a) * _fro(p) + _fro(pc) ** 2 + _fro(b) ** 2
    return _fro(res) / scale if scale > 0 else 0.0


def solve_filter_care(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """
    Stabilizing solution of ``A P + P A^T - P C^T C P + B B^T = 0``.

    The stable invariant subspace of the Hamiltonian
    ``[[A^T, -C^T C], [-B B^T, -A]]`` is taken from an ordered real Schur
    form; ``P = U2 U1^{-1}`` is symmetrized and, when the relative residual
    exceeds ``RICCATI_REFINE_TOL``, corrected by one Newton step.

    Args:
        a: State matrix (n x n)
        b: Input matrix (n x m)
        c: Output matrix (p x n)

    Returns:
        Symmetric positive semi-definite P with A - P C^T C stable

    Raises:
        SubspaceDimensionError: If the stable subspace dimension is not n
        NotStabilizingError: If A - P C^T C is not asymptotically stable
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0))

    ham = np.block([[a.T, -c.T @ c], [-b @ b.T, -a]])
    try:
        _, z, sdim = spla.schur(ham, output="real", sort="lhp", check_finite=False)
    except np.linalg.LinAlgError as e:
        raise ConvergenceFailure(f"Hamiltonian Schur form failed: {e}") from e
    if sdim != n:
        raise SubspaceDimensionError(
            f"Stable invariant subspace has dimension {sdim}, expected {n}"
        )

    u1 = z[:n, :n]
    u2 = z[n:, :n]
    try:
        p = solve_linear(u1.T, u2.T).T
    except SingularMatrixError as e:
        raise NotStabilizingError("Stable subspace is not a graph subspace") from e
    p = (p + p.T) / 2.0

    res = riccati_residual(a, b, c, p)
    rel = _relative_riccati_residual(a, b, c, p, res)
    if rel > RICCATI_REFINE_TOL:
        logger.debug("Riccati residual %.3e above %.1e, applying a Newton step", rel, RICCATI_REFINE_TOL)
        a_f = a - p @ c.T @ c
        try:
            p_new = p + solve_lyapunov(a_f, res)
            res_new = riccati_residual(a, b, c, p_new)
            if _fro(res_new) < _fro(res):
                p = p_new
        except NumericalError:
            pass

    abscissa = spectral_abscissa(a - p @ c.T @ c)
    if not abscissa < 0.0:
        raise NotStabilizingError(
            f"Closed-loop spectral abscissa {abscissa:.3e} is not negative"
        )
    return p


def solve_control_care(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """
    Stabilizing solution of ``A^T Q + Q A - Q B B^T Q + C^T C = 0``.

    Dual of :func:`solve_filter_care`; ``A - B B^T Q`` is stable.
    """
    a = np.asarray(a, dtype=float)
    return solve_filter_care(a.T, np.asarray(c, dtype=float).T, np.asarray(b, dtype=float).T)


def psd_factor(x: np.ndarray) -> np.ndarray:
    """
    Square factor ``L`` with ``x = L L^T`` for a symmetric positive
    semi-definite ``x``; negative rounding eigenvalues are clipped to zero.
    """
    d, u = np.linalg.eigh((x + x.T) / 2.0)
    return u * np.sqrt(np.clip(d, 0.0, None))
