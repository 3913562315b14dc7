"""
LTI system module for gapmor.
State-space realizations, transfer evaluation, pole-residue forms and
the left-coprime (closed-loop) factorization.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as spla

from .linalg import (
    DEFECT_TOL,
    NumericalError,
    eig,
    solve_filter_care,
    solve_linear,
    spectral_abscissa,
)

logger = logging.getLogger(__name__)

CONJUGATE_TOL = 1e-8

__all__ = [
    "StateSpace",
    "ErrorSystem",
    "PoleResidueForm",
    "ClosedLoopFactorization",
    "InterpolationData",
    "transfer_eval",
    "pole_residue",
    "coprime_factorize",
    "closed_loop_pole_residue",
    "error_system",
    "spectral_abscissa",
    "conjugate_pairs",
]


class UnstableError(NumericalError):
    """Raised when an operation requires an asymptotically stable system."""
    pass


class NonzeroFeedthroughError(NumericalError):
    """Raised when an operation requires D = 0."""
    pass


class DimensionMismatchError(ValueError):
    """Raised when matrix dimensions are inconsistent."""
    pass


def _as_real_matrix(name: str, value) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim < 2:
        arr = np.atleast_2d(arr)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"{name} must be a matrix, got {arr.ndim} dimensions")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class StateSpace:
    """
    Realization (A, B, C, D) of ``G(s) = D + C (sI - A)^{-1} B``.

    Matrices are stored as read-only float arrays. D defaults to zero.
    """
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: Optional[np.ndarray] = None

    def __post_init__(self):
        a = _as_real_matrix("A", self.a)
        if a.shape[0] != a.shape[1]:
            raise DimensionMismatchError(f"A must be square, got shape {a.shape}")
        n = a.shape[0]
        b = _as_real_matrix("B", self.b)
        c = _as_real_matrix("C", self.c)
        if n == 0:
            b = b.reshape(0, b.shape[1] if b.shape[0] == 0 else b.size)
            c = c.reshape(c.shape[0] if c.shape[1] == 0 else c.size, 0)
        elif b.shape[0] != n and b.shape == (1, n):
            b = b.T
        if b.shape[0] != n:
            raise DimensionMismatchError(f"B has shape {b.shape}, expected ({n}, m)")
        if c.shape[1] != n:
            raise DimensionMismatchError(f"C has shape {c.shape}, expected (p, {n})")
        m, p = b.shape[1], c.shape[0]

        if self.d is None:
            d = np.zeros((p, m))
        else:
            d = _as_real_matrix("D", self.d)
            if d.shape != (p, m):
                raise DimensionMismatchError(f"D has shape {d.shape}, expected {(p, m)}")

        for name, arr in (("a", a), ("b", b), ("c", c), ("d", d)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        """State dimension."""
        return self.a.shape[0]

    @property
    def m(self) -> int:
        """Number of inputs."""
        return self.b.shape[1]

    @property
    def p(self) -> int:
        """Number of outputs."""
        return self.c.shape[0]

    def evaluate(self, s: complex) -> np.ndarray:
        """Transfer matrix ``D + C (sI - A)^{-1} B`` at a non-pole ``s``."""
        if self.n == 0:
            return self.d.astype(complex)
        resolvent = solve_linear(s * np.eye(self.n) - self.a, self.b.astype(complex))
        return self.d + self.c @ resolvent

    def evaluate_derivative(self, s: complex) -> np.ndarray:
        """Derivative ``-C (sI - A)^{-2} B`` of the transfer matrix."""
        if self.n == 0:
            return np.zeros((self.p, self.m), dtype=complex)
        shifted = s * np.eye(self.n) - self.a
        once = solve_linear(shifted, self.b.astype(complex))
        return -self.c @ solve_linear(shifted, once)

    def scaled_output(self, k: float) -> "StateSpace":
        return StateSpace(self.a, self.b, k * self.c, k * self.d)

    def has_feedthrough(self) -> bool:
        return bool(np.any(self.d != 0.0))


@dataclass(frozen=True, eq=False)
class ErrorSystem(StateSpace):
    """
    Difference ``minuend - subtrahend`` of two systems with equal feedthrough.

    The realization is block-diagonal with zero feedthrough; transfer
    evaluation goes through the operands so identical operands give zero.
    """
    minuend: Optional[StateSpace] = None
    subtrahend: Optional[StateSpace] = None

    def evaluate(self, s: complex) -> np.ndarray:
        if self.minuend is None or self.subtrahend is None:
            return super().evaluate(s)
        return self.minuend.evaluate(s) - self.subtrahend.evaluate(s)

    def evaluate_derivative(self, s: complex) -> np.ndarray:
        if self.minuend is None or self.subtrahend is None:
            return super().evaluate_derivative(s)
        return self.minuend.evaluate_derivative(s) - self.subtrahend.evaluate_derivative(s)

    @property
    def identical_operands(self) -> bool:
        """True when both operands are the same realization."""
        if self.minuend is None or self.subtrahend is None:
            return False
        if self.minuend is self.subtrahend:
            return True
        return all(
            x.shape == y.shape and np.array_equal(x, y)
            for x, y in zip(
                (self.minuend.a, self.minuend.b, self.minuend.c, self.minuend.d),
                (self.subtrahend.a, self.subtrahend.b, self.subtrahend.c, self.subtrahend.d),
            )
        )


@dataclass(frozen=True, eq=False)
class PoleResidueForm:
    """
    Pole-residue expansion ``d + sum_i c_i [f_i; b_i]^T / (s - poles_i)``.

    Row i of ``c``, ``f`` and ``b`` holds the directions belonging to
    ``poles[i]``. ``f`` is None for a plain (open-loop) expansion.
    """
    poles: np.ndarray
    c: np.ndarray
    b: np.ndarray
    d: np.ndarray
    f: Optional[np.ndarray] = None

    @property
    def order(self) -> int:
        return self.poles.shape[0]

    @property
    def right(self) -> np.ndarray:
        """Stacked right directions ``[f_i; b_i]`` (one row per pole)."""
        if self.f is None:
            return self.b
        return np.hstack([self.f, self.b])

    def evaluate(self, s: complex) -> np.ndarray:
        """Re-summed transfer matrix at ``s``."""
        if self.order == 0:
            return self.d.astype(complex)
        weights = 1.0 / (s - self.poles)
        return self.d + (self.c.T * weights) @ self.right

    def strictly_proper(self) -> "PoleResidueForm":
        return PoleResidueForm(self.poles, self.c, self.b, np.zeros_like(self.d), self.f)


@dataclass(frozen=True, eq=False)
class ClosedLoopFactorization:
    """
    Left-coprime factorization ``G = M^{-1} N`` through the filter gain.

    Attributes:
        base: The factorized realization (A, B, C)
        p: Stabilizing solution of the filter Riccati equation
        f: Gain ``F = P C^T``
        gf: Realization of ``G_F = [M, N]`` with state matrix ``A - F C``
    """
    base: StateSpace
    p: np.ndarray
    f: np.ndarray
    gf: StateSpace

    @property
    def a_f(self) -> np.ndarray:
        return self.gf.a

    def m_system(self) -> StateSpace:
        """``M(s) = I - C (sI - A_F)^{-1} F``."""
        return StateSpace(self.a_f, -self.f, self.base.c, np.eye(self.base.p))

    def n_system(self) -> StateSpace:
        """``N(s) = C (sI - A_F)^{-1} B``."""
        return StateSpace(self.a_f, self.base.b, self.base.c)

    def m_inverse_system(self) -> StateSpace:
        """``M(s)^{-1} = I + C (sI - A)^{-1} F``."""
        return StateSpace(self.base.a, self.f, self.base.c, np.eye(self.base.p))


def conjugate_pairs(values: np.ndarray, tol: float = CONJUGATE_TOL) -> Tuple[List[int], List[Tuple[int, int]]]:
    """
    Split complex values into real entries and conjugate pairs.

    Returns:
        Tuple (real_indices, pairs) where each pair is
        (index with positive imaginary part, index of its conjugate)

    Raises:
        ValueError: If the values are not closed under conjugation
    """
    values = np.asarray(values, dtype=complex)
    scale = np.maximum(1.0, np.abs(values))
    is_real = np.abs(values.imag) <= tol * scale
    real_idx = [int(i) for i in np.flatnonzero(is_real)]
    upper = [int(i) for i in np.flatnonzero(~is_real & (values.imag > 0))]
    lower = [int(i) for i in np.flatnonzero(~is_real & (values.imag < 0))]
    if len(upper) != len(lower):
        raise ValueError("Values are not closed under complex conjugation")

    pairs = []
    remaining = list(lower)
    for i in upper:
        dist = [abs(values[j] - np.conj(values[i])) for j in remaining]
        k = int(np.argmin(dist))
        if dist[k] > tol * 10.0 * scale[i]:
            raise ValueError(f"No conjugate partner for {values[i]}")
        pairs.append((i, remaining.pop(k)))
    return real_idx, pairs


@dataclass(frozen=True, eq=False)
class InterpolationData:
    """
    Shifts with right and left tangential directions.

    Row j of ``right`` (length m) and ``left`` (length p) belong to
    ``shifts[j]``. The triples must be closed under conjugation and no
    shift may lie on the imaginary axis.
    """
    shifts: np.ndarray
    right: np.ndarray
    left: np.ndarray

    def __post_init__(self):
        shifts = np.asarray(self.shifts, dtype=complex).ravel()
        right = np.asarray(self.right, dtype=complex)
        left = np.asarray(self.left, dtype=complex)
        r = shifts.shape[0]
        if right.ndim == 1:
            right = right.reshape(r, -1)
        if left.ndim == 1:
            left = left.reshape(r, -1)
        if right.shape[0] != r or left.shape[0] != r:
            raise DimensionMismatchError(
                f"Expected {r} direction rows, got {right.shape[0]} right and {left.shape[0]} left"
            )
        if not (np.all(np.isfinite(shifts)) and np.all(np.isfinite(right)) and np.all(np.isfinite(left))):
            raise ValueError("Interpolation data contains non-finite entries")
        if np.any(shifts.real == 0.0):
            raise ValueError("Shifts must have nonzero real part")
        conjugate_pairs(shifts)
        object.__setattr__(self, "shifts", shifts)
        object.__setattr__(self, "right", right)
        object.__setattr__(self, "left", left)

    @property
    def order(self) -> int:
        return self.shifts.shape[0]

    def canonical(self) -> "InterpolationData":
        """
        Reorder to real shifts first (ascending), then conjugate pairs
        sorted by (real, imaginary) with the positive imaginary member first.
        Real triples are made exactly real and pair members exact conjugates.
        """
        real_idx, pairs = conjugate_pairs(self.shifts)
        real_idx.sort(key=lambda i: self.shifts[i].real)
        pairs.sort(key=lambda ij: (self.shifts[ij[0]].real, self.shifts[ij[0]].imag))

        shifts, right, left = [], [], []
        for i in real_idx:
            shifts.append(complex(self.shifts[i].real, 0.0))
            right.append(self.right[i].real.astype(complex))
            left.append(self.left[i].real.astype(complex))
        for i, _ in pairs:
            shifts.extend([self.shifts[i], np.conj(self.shifts[i])])
            right.extend([self.right[i], np.conj(self.right[i])])
            left.extend([self.left[i], np.conj(self.left[i])])
        return InterpolationData(np.array(shifts), np.array(right), np.array(left))


def transfer_eval(sys: StateSpace, s: complex) -> np.ndarray:
    """
    Evaluate ``D + C (sI - A)^{-1} B``.

    Raises:
        SingularMatrixError: If ``s`` is numerically a pole
    """
    return sys.evaluate(s)


def pole_residue(sys: StateSpace, defect_tol: float = DEFECT_TOL) -> PoleResidueForm:
    """
    Pole-residue form of ``sys``; residue i is ``(C v_i)(B^T w_i)^T``.

    Raises:
        DefectiveMatrixError: If A is not semi-simple to tolerance
    """
    ed = eig(sys.a, defect_tol)
    c = (sys.c @ ed.right).T
    b = ed.left.T @ sys.b
    return PoleResidueForm(ed.eigenvalues, c, b, sys.d.copy())


def coprime_factorize(sys: StateSpace) -> ClosedLoopFactorization:
    """
    Left-coprime factorization through the stabilizing filter gain.

    Args:
        sys: Stabilizable and detectable realization with D = 0

    Returns:
        ClosedLoopFactorization with ``G_F = [I, 0] + C (sI - A_F)^{-1} [-F, B]``

    Raises:
        NonzeroFeedthroughError: If D is not zero
        NotStabilizingError: If the Riccati solution does not stabilize
    """
    if sys.has_feedthrough():
        raise NonzeroFeedthroughError("Coprime factorization requires zero feedthrough")

    p = solve_filter_care(sys.a, sys.b, sys.c)
    f = p @ sys.c.T
    a_f = sys.a - f @ sys.c
    gf = StateSpace(
        a_f,
        np.hstack([-f, sys.b]),
        sys.c,
        np.hstack([np.eye(sys.p), np.zeros((sys.p, sys.m))]),
    )
    logger.debug(
        "Factorized system of order %d, closed-loop abscissa %.3e",
        sys.n, spectral_abscissa(a_f),
    )
    return ClosedLoopFactorization(base=sys, p=p, f=f, gf=gf)


def closed_loop_pole_residue(clf: ClosedLoopFactorization, defect_tol: float = DEFECT_TOL) -> PoleResidueForm:
    """
    Pole-residue form of ``G_F`` from one eigendecomposition of ``A_F``.

    Directions are ``b_i = B^T w_i``, ``f_i = -F^T w_i`` and ``c_i = C v_i``.
    """
    ed = eig(clf.a_f, defect_tol)
    c = (clf.base.c @ ed.right).T
    b = ed.left.T @ clf.base.b
    f = -ed.left.T @ clf.f
    return PoleResidueForm(ed.eigenvalues, c, b, clf.gf.d.copy(), f)


def error_system(gf: StateSpace, gfr: StateSpace) -> ErrorSystem:
    """
    Realization of ``gf - gfr`` with block-diagonal state matrix.

    Raises:
        DimensionMismatchError: If input/output dimensions or feedthroughs differ
    """
    if gf.m != gfr.m or gf.p != gfr.p:
        raise DimensionMismatchError(
            f"Systems have shapes {gf.p}x{gf.m} and {gfr.p}x{gfr.m}"
        )
    if not np.array_equal(gf.d, gfr.d):
        raise DimensionMismatchError("Systems must have equal feedthrough")
    return ErrorSystem(
        a=spla.block_diag(gf.a, gfr.a),
        b=np.vstack([gf.b, gfr.b]),
        c=np.hstack([gf.c, -gfr.c]),
        d=np.zeros((gf.p, gf.m)),
        minuend=gf,
        subtrahend=gfr,
    )
