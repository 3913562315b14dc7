"""
Reduction module for gapmor.
Interpolatory Petrov-Galerkin projection, IRKA, gap-IRKA and LQG
balanced truncation.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import scipy.linalg as spla

from .linalg import (
    NotStabilizingError,
    NumericalError,
    RankDeficientError,
    SingularMatrixError,
    SubspaceDimensionError,
    psd_factor,
    solve_control_care,
    solve_filter_care,
    solve_linear,
)
from .lti import (
    InterpolationData,
    NonzeroFeedthroughError,
    StateSpace,
    closed_loop_pole_residue,
    conjugate_pairs,
    coprime_factorize,
    pole_residue,
)

logger = logging.getLogger(__name__)

METHODS = ("irka", "gap-irka", "lqgbt")
BALANCINGS = ("lc-lo", "pq")

DEPENDENCE_TOL = 1e-14
INITS = ("default", "spectrum", "dominant", "balanced")
MAX_RETRIES = 3
PERTURBATION = 0.01


class ReductionError(NumericalError):
    """Raised when a reduction run has to be aborted."""

    def __init__(self, message: str, diagnostics: Optional[List[float]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


@dataclass
class ReductionResult:
    """
    Outcome of an interpolatory reduction run.

    Attributes:
        rom: Reduced realization
        method: "irka" or "gap-irka"
        iterations: Number of projections performed
        converged: Whether the shift change fell below the tolerance
        shift_history: Shift set of every iteration, starting with the initial one
        final_interp: Interpolation data the returned rom was built from
        diagnostics: Relative shift change per iteration
        retries: Number of perturbed restarts after reduced Riccati failures
    """
    rom: StateSpace
    method: str
    iterations: int
    converged: bool
    shift_history: List[np.ndarray]
    final_interp: InterpolationData
    diagnostics: List[float] = field(default_factory=list)
    retries: int = 0

    def to_dict(self) -> Dict:
        """Diagnostics record for JSON output."""
        return {
            "method": self.method,
            "order": self.rom.n,
            "iterations": self.iterations,
            "converged": self.converged,
            "retries": self.retries,
            "final_shifts": [[float(s.real), float(s.imag)] for s in self.final_interp.shifts],
            "shift_changes": [float(x) for x in self.diagnostics],
        }


@dataclass
class LqgBtResult:
    """
    Outcome of LQG balanced truncation.

    ``characteristic_values`` are the Hankel singular values of G_F in
    nonincreasing order and ``error_bound`` is twice the sum of the
    truncated ones.
    """
    rom: StateSpace
    characteristic_values: np.ndarray
    error_bound: float
    balancing: str = "lc-lo"
    method: str = "lqgbt"
    converged: bool = True
    iterations: int = 0

    def to_dict(self) -> Dict:
        return {
            "method": self.method,
            "order": self.rom.n,
            "balancing": self.balancing,
            "characteristic_values": [float(x) for x in self.characteristic_values],
            "error_bound": float(self.error_bound),
        }


def _check_order(sys: StateSpace, r: int) -> None:
    if not 1 <= r <= sys.n:
        raise ValueError(f"Reduced order must satisfy 1 <= r <= {sys.n}, got {r}")


def build_bases(sys: StateSpace, data: InterpolationData) -> Tuple[np.ndarray, np.ndarray]:
    """
    Real right and left projection bases for the interpolation data.

    Columns are ``(s_j I - A)^{-1} B r_j`` and ``(s_j I - A^T)^{-1} C^T l_j``;
    every conjugate pair contributes its real and imaginary parts.

    Raises:
        SingularMatrixError: If a shift is an eigenvalue of A
        RankDeficientError: If the columns are linearly dependent
    """
    if data.right.shape[1] != sys.m or data.left.shape[1] != sys.p:
        raise ValueError("Interpolation directions do not match the system dimensions")
    data = data.canonical()
    eye = np.eye(sys.n)
    v_cols, w_cols = [], []
    j = 0
    while j < data.order:
        s = data.shifts[j]
        v = solve_linear(s * eye - sys.a, sys.b @ data.right[j])
        w = solve_linear(s * eye - sys.a.T, sys.c.T @ data.left[j])
        if s.imag == 0.0:
            v_cols.append(v.real)
            w_cols.append(w.real)
            j += 1
        else:
            v_cols.extend([v.real, v.imag])
            w_cols.extend([w.real, w.imag])
            j += 2

    v_mat = np.column_stack(v_cols)
    w_mat = np.column_stack(w_cols)
    _check_independent("right", v_mat)
    _check_independent("left", w_mat)
    return v_mat, w_mat


def _check_independent(name: str, basis: np.ndarray) -> None:
    if basis.shape[1] > basis.shape[0]:
        raise RankDeficientError(f"The {name} basis has {basis.shape[1]} columns in dimension {basis.shape[0]}")
    # distance of each normalized column to the span of the columns before it
    lengths = np.linalg.norm(basis, axis=0)
    if np.any(lengths == 0.0):
        raise RankDeficientError(f"The {name} basis has a zero column")
    r_factor = np.linalg.qr(basis / lengths, mode="r")
    distances = np.abs(np.diag(r_factor))
    if distances.min() <= DEPENDENCE_TOL:
        raise RankDeficientError(
            f"The {name} basis is rank deficient (column {int(np.argmin(distances)) + 1} "
            f"is within {distances.min():.1e} of the span of the others)")


def biorthogonalize(v: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Change the left basis so that ``W^T V = I``.

    Raises:
        SingularMatrixError: If ``V^T W`` is singular
    """
    w_new = solve_linear(w.T @ v, w.T).T
    return v, w_new


def project(sys: StateSpace, v: np.ndarray, w: np.ndarray) -> StateSpace:
    """Petrov-Galerkin projection ``(W^T A V, W^T B, C V)``."""
    if v.shape != w.shape or v.shape[0] != sys.n:
        raise ValueError(f"Bases of shape {v.shape} and {w.shape} do not fit order {sys.n}")
    return StateSpace(w.T @ sys.a @ v, w.T @ sys.b, sys.c @ v, sys.d)


def interpolatory_rom(sys: StateSpace, data: InterpolationData) -> StateSpace:
    """
    Reduced model interpolating ``sys`` tangentially at the shifts.

    Bases are orthonormalized before the biorthogonal change.
    """
    v, w = build_bases(sys, data)
    v = np.linalg.qr(v)[0]
    w = np.linalg.qr(w)[0]
    v, w = biorthogonalize(v, w)
    return project(sys, v, w)


def default_init(sys: StateSpace, r: int, seed: int = 0) -> InterpolationData:
    """
    Real log-spaced shifts on [0.1, 100] with seeded unit-norm directions.

    For r = 1 the single shift is the logarithmic midpoint 10**0.5.
    """
    if r < 1:
        raise ValueError(f"Reduced order must be positive, got {r}")
    shifts = np.array([10 ** 0.5]) if r == 1 else np.logspace(-1, 2, r)
    right, left = _unit_directions(sys, r, seed)
    return InterpolationData(shifts, right, left)


def _unit_directions(sys: StateSpace, r: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    right = rng.standard_normal((r, sys.m))
    left = rng.standard_normal((r, sys.p))
    right /= np.linalg.norm(right, axis=1, keepdims=True)
    left /= np.linalg.norm(left, axis=1, keepdims=True)
    return right, left


def spectrum_init(sys: StateSpace, r: int, seed: int = 0) -> InterpolationData:
    """
    Real shifts spread geometrically over the mirrored stable spectrum of A.

    The shifts cover ``[min -Re(l), max -Re(l)]`` over the stable
    eigenvalues l of A, so large models get shifts where their poles are
    instead of a fixed band. Only eigenvalues of A are computed. Without
    stable eigenvalues this falls back to :func:`default_init`. Directions
    are seeded unit vectors as in :func:`default_init`.
    """
    _check_order(sys, r)
    real_parts = spla.eigvals(sys.a).real
    magnitudes = -real_parts[real_parts < 0.0]
    if magnitudes.size == 0:
        return default_init(sys, r, seed)
    lo = float(magnitudes.min())
    hi = max(float(magnitudes.max()), 10.0 * lo)
    shifts = np.array([np.sqrt(lo * hi)]) if r == 1 else np.geomspace(lo, hi, r)
    right, left = _unit_directions(sys, r, seed)
    return InterpolationData(shifts, right, left)


def balanced_init(sys: StateSpace, r: int, seed: int = 0) -> InterpolationData:
    """
    Mirrored closed-loop poles and residue directions of the LQG balanced
    truncation of order r.

    Solves both full-order Riccati equations. gap-IRKA started here begins
    at the balanced reduced model. ``seed`` is unused.
    """
    rom = lqgbt(sys, r).rom
    pr = closed_loop_pole_residue(coprime_factorize(rom))
    return InterpolationData(-pr.poles, pr.b, pr.c).canonical()


def dominant_init(sys: StateSpace, r: int, seed: int = 0) -> InterpolationData:
    """
    Mirrored full-order closed-loop poles with the largest residues.

    Solves the full-order filter Riccati equation. Conjugate pairs are
    kept together; remaining slots are filled from :func:`default_init`.
    """
    _check_order(sys, r)
    pr = closed_loop_pole_residue(coprime_factorize(sys))
    real_idx, pairs = conjugate_pairs(pr.poles)
    score = np.linalg.norm(pr.c, axis=1) * np.linalg.norm(pr.right, axis=1)
    units = [([i], score[i]) for i in real_idx] + [([i, j], score[i]) for i, j in pairs]
    units.sort(key=lambda u: -u[1])

    chosen: List[int] = []
    for idx, _ in units:
        if len(chosen) + len(idx) <= r:
            chosen.extend(idx)
    shifts = list(-pr.poles[chosen])
    right = list(pr.b[chosen])
    left = list(pr.c[chosen])
    if len(chosen) < r:
        fill = default_init(sys, r - len(chosen), seed)
        shifts.extend(fill.shifts)
        right.extend(fill.right)
        left.extend(fill.left)
    return InterpolationData(np.array(shifts), np.array(right), np.array(left)).canonical()


def _initial_data(sys: StateSpace, r: int, init: Union[str, InterpolationData], seed: int) -> InterpolationData:
    if isinstance(init, InterpolationData):
        if init.order != r:
            raise ValueError(f"Initial data has {init.order} shifts, expected {r}")
        return init.canonical()
    if init == "default":
        return default_init(sys, r, seed)
    if init == "spectrum":
        return spectrum_init(sys, r, seed)
    if init == "dominant":
        return dominant_init(sys, r, seed)
    if init == "balanced":
        return balanced_init(sys, r, seed)
    raise ValueError(f"Unknown initialization: {init}")


def shift_change(old: np.ndarray, new: np.ndarray) -> float:
    """Maximum componentwise relative change between lexicographically sorted shift sets."""
    old = np.asarray(old, dtype=complex)
    new = np.asarray(new, dtype=complex)
    old = old[np.lexsort((old.imag, old.real))]
    new = new[np.lexsort((new.imag, new.real))]
    scale = np.maximum(np.abs(old), np.finfo(float).tiny)
    return float(np.max(np.abs(new - old) / scale))


def _perturb(data: InterpolationData, rng: np.random.Generator) -> InterpolationData:
    shifts = data.shifts.copy()
    real_idx, pairs = conjugate_pairs(shifts)
    for i in real_idx:
        shifts[i] *= 1.0 + PERTURBATION * rng.uniform(-1.0, 1.0)
    for i, j in pairs:
        factor = 1.0 + PERTURBATION * rng.uniform(-1.0, 1.0)
        shifts[i] *= factor
        shifts[j] *= factor
    return InterpolationData(shifts, data.right, data.left).canonical()


def irka(sys: StateSpace, r: int, tol: float = 1e-6, max_iter: int = 100,
         init: Union[str, InterpolationData] = "default", seed: int = 0) -> ReductionResult:
    """
    Iterative rational Krylov algorithm.

    Each step interpolates at the current shifts and replaces them by the
    mirrored poles of the reduced model, with its residue directions.

    Args:
        sys: System to reduce
        r: Reduced order
        tol: Tolerance on the relative shift change
        max_iter: Iteration cap
        init: One of INITS or explicit InterpolationData
        seed: Seed for the initial directions

    Returns:
        ReductionResult; ``converged`` is False when the cap was reached
    """
    _check_order(sys, r)
    if max_iter < 1:
        raise ValueError(f"max_iter must be positive, got {max_iter}")
    data = _initial_data(sys, r, init, seed)
    history = [data.shifts.copy()]
    changes: List[float] = []
    converged = False
    rom = None
    final = data

    for iteration in range(1, max_iter + 1):
        rom = interpolatory_rom(sys, data)
        final = data
        pr = pole_residue(rom)
        new = InterpolationData(-pr.poles, pr.b, pr.c).canonical()
        change = shift_change(data.shifts, new.shifts)
        changes.append(change)
        history.append(new.shifts.copy())
        logger.info("IRKA iteration %d: relative shift change %.3e", iteration, change)
        data = new
        if change <= tol:
            converged = True
            break

    if not converged:
        logger.warning("IRKA did not converge in %d iterations (r=%d)", max_iter, r)
    return ReductionResult(rom, "irka", len(changes), converged, history, final, changes)


def gap_irka(sys: StateSpace, r: int, tol: float = 1e-6, max_iter: int = 100,
             init: Union[str, InterpolationData] = "default", seed: int = 0) -> ReductionResult:
    """
    IRKA driven by the closed-loop pole-residue data of the reduced model.

    Each step projects, solves the reduced filter Riccati equation and
    takes ``-lambda_j``, ``b_j`` and ``c_j`` of the reduced G_F as the next
    shifts and directions. The full-order Riccati equation is never solved
    unless ``init`` is "dominant" or "balanced".

    When the reduced Riccati equation or the projection fails, the current
    shifts are perturbed by 1% seeded multiplicative noise and the step is
    retried, at most three times.

    Raises:
        ReductionError: If the retries are exhausted
    """
    _check_order(sys, r)
    if max_iter < 1:
        raise ValueError(f"max_iter must be positive, got {max_iter}")
    if sys.has_feedthrough():
        raise NonzeroFeedthroughError("gap-IRKA requires zero feedthrough")
    data = _initial_data(sys, r, init, seed)
    rng = np.random.default_rng(seed)
    history = [data.shifts.copy()]
    changes: List[float] = []
    retries = 0
    converged = False
    rom = None
    final = data

    for iteration in range(1, max_iter + 1):
        for attempt in range(MAX_RETRIES + 1):
            try:
                rom = interpolatory_rom(sys, data)
                pr = closed_loop_pole_residue(coprime_factorize(rom))
                break
            except (NotStabilizingError, SubspaceDimensionError,
                    SingularMatrixError, RankDeficientError) as e:
                if attempt == MAX_RETRIES:
                    raise ReductionError(
                        f"gap-IRKA aborted at iteration {iteration} after {MAX_RETRIES} retries: {e}",
                        changes,
                    ) from e
                retries += 1
                logger.warning("gap-IRKA iteration %d: %s; perturbing shifts", iteration, e)
                data = _perturb(data, rng)

        final = data
        new = InterpolationData(-pr.poles, pr.b, pr.c).canonical()
        change = shift_change(data.shifts, new.shifts)
        changes.append(change)
        history.append(new.shifts.copy())
        logger.info("gap-IRKA iteration %d: relative shift change %.3e", iteration, change)
        data = new
        if change <= tol:
            converged = True
            break

    if not converged:
        logger.warning("gap-IRKA did not converge in %d iterations (r=%d)", max_iter, r)
    return ReductionResult(rom, "gap-irka", len(changes), converged, history, final, changes, retries)


def lqgbt(sys: StateSpace, r: int, balancing: str = "lc-lo") -> LqgBtResult:
    """
    LQG balanced truncation by the square-root method.

    Balances ``L_c = P`` against ``L_o = Q (I + P Q)^{-1}`` (or P against Q
    with ``balancing="pq"``), where P and Q solve the filter and control
    Riccati equations.

    Args:
        sys: Stabilizable and detectable system with D = 0
        r: Reduced order
        balancing: "lc-lo" or "pq"

    Returns:
        LqgBtResult with the Hankel singular values of G_F

    Raises:
        RankDeficientError: If r exceeds the numerical rank
    """
    _check_order(sys, r)
    if balancing not in BALANCINGS:
        raise ValueError(f"Unknown balancing: {balancing}")
    if sys.has_feedthrough():
        raise NonzeroFeedthroughError("LQG balanced truncation requires zero feedthrough")

    p = solve_filter_care(sys.a, sys.b, sys.c)
    q = solve_control_care(sys.a, sys.b, sys.c)
    if balancing == "lc-lo":
        lo = solve_linear(np.eye(sys.n) + q @ p, q).T
        lo = (lo + lo.T) / 2.0
    else:
        lo = q

    lp = psd_factor(p)
    lq = psd_factor(lo)
    u, s, vt = spla.svd(lq.T @ lp)
    if s[0] == 0.0 or s[r - 1] <= 1e-14 * s[0]:
        raise RankDeficientError(f"Order {r} exceeds the numerical rank of the balanced product")

    scale = 1.0 / np.sqrt(s[:r])
    t = lp @ vt[:r].T * scale
    t_inv = (scale[:, None] * u[:, :r].T) @ lq.T
    rom = StateSpace(t_inv @ sys.a @ t, t_inv @ sys.b, sys.c @ t)

    hsv = s if balancing == "lc-lo" else s / np.sqrt(1.0 + s ** 2)
    hsv = np.minimum.accumulate(np.clip(hsv, 0.0, None))
    bound = 2.0 * float(np.sum(hsv[r:]))
    logger.info("LQG-BT r=%d: leading value %.3e, bound %.3e", r, hsv[0], bound)
    return LqgBtResult(rom, hsv, bound, balancing)
