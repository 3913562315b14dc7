"""
System norms module for gapmor.
H2 and L-infinity norms and the gap metrics between a system and its
reduced model.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.linalg as spla
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from .linalg import NumericalError, solve_lyapunov, solve_sylvester, spectral_abscissa
from .lti import (
    ClosedLoopFactorization,
    ErrorSystem,
    NonzeroFeedthroughError,
    PoleResidueForm,
    StateSpace,
    UnstableError,
    closed_loop_pole_residue,
    coprime_factorize,
    error_system,
)

logger = logging.getLogger(__name__)

MIRROR_TOL = 1e-10
IMAG_AXIS_TOL = 1e-10
LINF_MAX_ITER = 100
# squares below RESOLUTION times the size of the cancelling terms are noise
RESOLUTION = 1e3 * np.finfo(float).eps
QUAD_REL_TOL = 1e-6
QUAD_LIMIT = 200


class UnstablePoleError(NumericalError):
    """Raised when a pole-residue form has a pole outside the open left half-plane."""
    pass


class MirrorCollisionError(NumericalError):
    """Raised when a mirrored evaluation point coincides with a pole."""
    pass


class ImaginaryAxisPoleError(NumericalError):
    """Raised when a system has a pole on the imaginary axis."""
    pass


@dataclass(frozen=True)
class NormResult:
    """
    Value of a norm or gap together with the method that produced it.

    Attributes:
        value: Nonnegative finite norm value
        method: One of gramian, quadrature, pole-residue, bisection, theorem1
        peak_frequency: Frequency attaining the L-infinity norm
        terms: The two partial sums of the open-loop gap formula
        resolved: False when the difference formula cancelled below its
            rounding level; ``value`` is then that level, an upper estimate
    """
    value: float
    method: str
    peak_frequency: Optional[float] = None
    terms: Optional[Tuple[float, float]] = None
    resolved: bool = True

    def __post_init__(self):
        if not np.isfinite(self.value) or self.value < 0:
            raise ValueError(f"Norm value must be finite and nonnegative, got {self.value}")

    def __float__(self) -> float:
        return float(self.value)


def _sqrt_clamped(square: float) -> float:
    return float(np.sqrt(max(square, 0.0)))


def _from_square(square: float, scale: float, method: str,
                 terms: Optional[Tuple[float, float]] = None) -> NormResult:
    """Norm from a square that was formed as a difference of terms of size ``scale``."""
    if scale == 0.0:
        return NormResult(0.0, method, terms=terms)
    floor = RESOLUTION * scale
    if square > floor:
        return NormResult(float(np.sqrt(square)), method, terms=terms)
    logger.debug("%s square %.3e is below the resolution %.3e", method, square, floor)
    return NormResult(float(np.sqrt(floor)), method, terms=terms, resolved=False)


def _require_stable(sys: StateSpace) -> None:
    abscissa = spectral_abscissa(sys.a)
    if not abscissa < 0.0:
        raise UnstableError(f"System is not asymptotically stable (abscissa {abscissa:.3e})")


def h2_norm_gramian(sys: StateSpace) -> NormResult:
    """
    H2 norm ``sqrt(trace(C X C^T))`` with ``A X + X A^T + B B^T = 0``.

    For an ErrorSystem the Gramian is assembled blockwise from the two
    operands, and identical operands give exactly zero. The square is then
    a difference of operand-sized terms; below ``RESOLUTION`` times their
    size the result is marked unresolved.

    Raises:
        UnstableError: If A is not asymptotically stable
        NonzeroFeedthroughError: If D is not zero
    """
    if sys.has_feedthrough():
        raise NonzeroFeedthroughError("H2 norm requires zero feedthrough")
    if sys.n == 0:
        return NormResult(0.0, "gramian")
    _require_stable(sys)

    if isinstance(sys, ErrorSystem) and sys.minuend is not None:
        if sys.identical_operands:
            return NormResult(0.0, "gramian")
        g1, g2 = sys.minuend, sys.subtrahend
        x11 = solve_lyapunov(g1.a, g1.b @ g1.b.T)
        x22 = solve_lyapunov(g2.a, g2.b @ g2.b.T)
        x12 = solve_sylvester(g1.a, g2.a.T, g1.b @ g2.b.T)
        own = np.trace(g1.c @ x11 @ g1.c.T) + np.trace(g2.c @ x22 @ g2.c.T)
        square = own - 2.0 * np.trace(g1.c @ x12 @ g2.c.T)
        return _from_square(float(square), float(abs(own)), "gramian")

    x = solve_lyapunov(sys.a, sys.b @ sys.b.T)
    return NormResult(_sqrt_clamped(np.trace(sys.c @ x @ sys.c.T)), "gramian")


def _frequency_response(sys: StateSpace) -> Tuple[Callable[[float], np.ndarray], np.ndarray]:
    # strictly proper part C (iw I - A)^{-1} B through the complex Schur form
    t, z = spla.schur(sys.a, output="complex")
    zb = z.conj().T @ sys.b
    cz = sys.c @ z
    eye = np.eye(sys.n)

    def response(w: float) -> np.ndarray:
        return cz @ spla.solve_triangular(1j * w * eye - t, zb)

    return response, np.diag(t)


def h2_norm_quadrature(sys: StateSpace, rel_tol: float = QUAD_REL_TOL) -> NormResult:
    """
    H2 norm from ``(1/pi) * integral_0^inf ||H(iw)||_F^2 dw``.

    An ErrorSystem is evaluated operand by operand, so its response is the
    difference of two responses and not of two Gramian traces. This
    resolves errors far below the Gramian route at the cost of a few
    thousand triangular solves. The half-line is split at frequencies
    spread over the pole magnitudes.

    Args:
        sys: Stable realization with zero feedthrough
        rel_tol: Relative accuracy requested from every integration piece

    Raises:
        UnstableError: If A is not asymptotically stable
        NonzeroFeedthroughError: If D is not zero
    """
    if sys.has_feedthrough():
        raise NonzeroFeedthroughError("H2 norm requires zero feedthrough")
    if sys.n == 0:
        return NormResult(0.0, "quadrature")
    _require_stable(sys)

    if isinstance(sys, ErrorSystem) and sys.minuend is not None:
        if sys.identical_operands:
            return NormResult(0.0, "quadrature")
        first, poles1 = _frequency_response(sys.minuend)
        second, poles2 = _frequency_response(sys.subtrahend)
        poles = np.concatenate([poles1, poles2])

        def response(w: float) -> np.ndarray:
            return first(w) - second(w)
    else:
        response, poles = _frequency_response(sys)

    def integrand(w: float) -> float:
        return float(np.sum(np.abs(response(w)) ** 2))

    magnitudes = np.abs(poles)
    magnitudes = magnitudes[magnitudes > 0.0]
    lo, hi = (1.0, 1.0) if magnitudes.size == 0 else (magnitudes.min(), magnitudes.max())
    lo, hi = 1e-2 * lo, 1e2 * hi
    pieces = int(np.ceil(4 * np.log10(hi / lo))) + 1
    edges = np.concatenate([[0.0], np.geomspace(lo, hi, pieces), [np.inf]])

    total, error = 0.0, 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        value, err = quad(integrand, a, b, epsabs=0.0, epsrel=rel_tol, limit=QUAD_LIMIT)
        total += value
        error += err
    square = total / np.pi
    return NormResult(float(np.sqrt(max(square, 0.0))), "quadrature", resolved=total > error)


def _cross_sum(outer: PoleResidueForm, inner: PoleResidueForm) -> complex:
    # sum_i c_i^T H_inner(-lambda_i) g_i for the strictly proper part of inner
    if outer.order == 0 or inner.order == 0:
        return 0.0j
    left = outer.c @ inner.c.T
    right = inner.right @ outer.right.T
    denom = -(outer.poles[:, None] + inner.poles[None, :])
    return complex(np.sum(left * right.T / denom))


def _check_poles(*forms: PoleResidueForm) -> None:
    for pr in forms:
        if pr.order and not np.all(pr.poles.real < 0.0):
            worst = pr.poles[np.argmax(pr.poles.real)]
            raise UnstablePoleError(f"Pole {worst:.6g} is not in the open left half-plane")
    poles = np.concatenate([pr.poles for pr in forms])
    if poles.size == 0:
        return
    gap = np.abs(poles[:, None] + poles[None, :])
    scale = np.maximum(np.abs(poles), 1.0)[:, None]
    if np.any(gap < MIRROR_TOL * scale):
        raise MirrorCollisionError("A mirrored pole coincides with a pole of the other system")


def _real_part(value: complex, scale: float, label: str) -> float:
    if abs(value.imag) > 1e-9 * max(scale, abs(value.real), 1e-300):
        logger.warning("%s has imaginary residue %.3e", label, value.imag)
    return float(value.real)


def h2_norm_pole_residue(pr: PoleResidueForm) -> NormResult:
    """
    H2 norm of the strictly proper part of a pole-residue form.

    Computes ``sum_k h_k^T H(-mu_k) g_k`` with H re-evaluated from the
    pole-residue sum.

    Raises:
        UnstablePoleError: If a pole is not in the open left half-plane
    """
    if pr.order == 0:
        return NormResult(0.0, "pole-residue")
    _check_poles(pr)
    square = _cross_sum(pr, pr)
    return NormResult(_sqrt_clamped(_real_part(square, abs(square), "H2 norm")), "pole-residue")


def _imaginary_axis_check(sys: StateSpace) -> None:
    if sys.n == 0:
        return
    lam = spla.eigvals(sys.a)
    on_axis = np.abs(lam.real) <= IMAG_AXIS_TOL * np.maximum(np.abs(lam), 1.0)
    if np.any(on_axis):
        raise ImaginaryAxisPoleError(f"System has a pole on the imaginary axis: {lam[on_axis][0]:.6g}")


def _sigma_max(sys: StateSpace, w: float) -> float:
    return float(np.linalg.norm(sys.evaluate(1j * w), 2))


def _hamiltonian(sys: StateSpace, gamma: float) -> np.ndarray:
    d = sys.d
    r = gamma ** 2 * np.eye(sys.m) - d.T @ d
    s = gamma ** 2 * np.eye(sys.p) - d @ d.T
    a_gamma = sys.a + sys.b @ np.linalg.solve(r, d.T @ sys.c)
    return np.block([
        [a_gamma, gamma * sys.b @ np.linalg.solve(r, sys.b.T)],
        [-gamma * sys.c.T @ np.linalg.solve(s, sys.c), -a_gamma.T],
    ])


def _imaginary_frequencies(ham: np.ndarray) -> np.ndarray:
    lam = spla.eigvals(ham)
    tol = 1e-9 * max(1.0, np.linalg.norm(ham, 1))
    freqs = np.abs(lam[np.abs(lam.real) <= tol].imag)
    return np.unique(np.round(freqs, 14))


def _candidate_frequencies(sys: StateSpace) -> np.ndarray:
    grid = [0.0] + list(np.logspace(-4, 4, 50))
    if sys.n:
        lam = spla.eigvals(sys.a)
        grid.extend(np.abs(lam.imag))
        grid.extend(np.abs(lam))
    return np.unique(np.asarray(grid, dtype=float))


def _polish(sys: StateSpace, w: float, value: float) -> Tuple[float, float]:
    width = max(1e-3 * w, 1e-6)
    res = minimize_scalar(
        lambda x: -_sigma_max(sys, x),
        bounds=(max(0.0, w - width), w + width),
        method="bounded",
        options={"xatol": 1e-12 * max(1.0, w)},
    )
    if res.success and -res.fun > value:
        return float(-res.fun), float(res.x)
    return value, w


def linf_norm(sys: StateSpace, rel_tol: float = 1e-6) -> NormResult:
    """
    L-infinity norm by level-set bisection on the Hamiltonian test matrix.

    A level ``gamma`` bounds the norm from above iff the Hamiltonian for
    ``gamma`` has no imaginary eigenvalues. The lower bound is raised by
    evaluating midpoints between the imaginary crossings.

    Args:
        sys: Realization without poles on the imaginary axis
        rel_tol: Relative accuracy of the returned value

    Returns:
        NormResult with the value and a frequency attaining it

    Raises:
        ImaginaryAxisPoleError: If A has an eigenvalue on the imaginary axis
    """
    if sys.n == 0:
        return NormResult(float(np.linalg.norm(sys.d, 2)) if sys.d.size else 0.0, "bisection", 0.0)
    _imaginary_axis_check(sys)

    freqs = _candidate_frequencies(sys)
    values = np.array([_sigma_max(sys, w) for w in freqs])
    k = int(np.argmax(values))
    lower, peak = float(values[k]), float(freqs[k])
    feedthrough = float(np.linalg.norm(sys.d, 2)) if sys.d.size else 0.0
    if feedthrough > lower:
        lower, peak = feedthrough, float("inf")
    if lower == 0.0:
        return NormResult(0.0, "bisection", 0.0)

    for iteration in range(LINF_MAX_ITER):
        gamma = lower * (1.0 + 2.0 * rel_tol)
        crossings = _imaginary_frequencies(_hamiltonian(sys, gamma))
        if crossings.size == 0:
            break
        points = np.concatenate([[0.0], crossings]) if crossings[0] > 0 else crossings
        mids = (points[:-1] + points[1:]) / 2.0 if points.size > 1 else points
        mid_values = np.array([_sigma_max(sys, w) for w in mids])
        j = int(np.argmax(mid_values))
        if mid_values[j] <= lower * (1.0 + rel_tol):
            break
        lower, peak = float(mid_values[j]), float(mids[j])
    else:
        logger.warning("L-infinity bisection stopped after %d iterations", LINF_MAX_ITER)

    if np.isfinite(peak):
        lower, peak = _polish(sys, peak, lower)
    return NormResult(lower, "bisection", peak)


def _factorizations(G: StateSpace, Gr: StateSpace,
                    full: Optional[ClosedLoopFactorization]) -> Tuple[ClosedLoopFactorization, ClosedLoopFactorization]:
    if full is None:
        full = coprime_factorize(G)
    return full, coprime_factorize(Gr)


def h2_gap(G: StateSpace, Gr: StateSpace, full: Optional[ClosedLoopFactorization] = None) -> NormResult:
    """
    H2-gap ``||[M, N] - [M_r, N_r]||_H2`` via the Gramian of the error system.

    A gap too small for the Gramian difference to resolve is recomputed by
    :func:`h2_norm_quadrature`.

    Args:
        G: Full-order system
        Gr: Reduced system
        full: Precomputed factorization of G

    Returns:
        NormResult with method "gramian", or "quadrature" after the fallback
    """
    full, reduced = _factorizations(G, Gr, full)
    err = error_system(full.gf, reduced.gf)
    result = h2_norm_gramian(err)
    if result.resolved:
        return result
    logger.info("H2-gap below the Gramian resolution %.3e, integrating over frequency", result.value)
    return h2_norm_quadrature(err)


def h2_gap_pole_residue(prF: PoleResidueForm, prFr: PoleResidueForm) -> NormResult:
    """
    H2-gap from the closed-loop pole-residue forms of both systems.

    Sums ``c_i^T (G_F - G_Fr)(-lambda_i) [f_i; b_i]`` over the poles of
    G_F and the mirrored expression over the poles of G_Fr.

    Raises:
        UnstablePoleError: If a pole lies outside the open left half-plane
        MirrorCollisionError: If a mirrored pole hits a pole
    """
    _check_poles(prF, prFr)
    first = _cross_sum(prF, prF) - _cross_sum(prF, prFr)
    second = _cross_sum(prFr, prFr) - _cross_sum(prFr, prF)
    total = first + second
    scale = abs(_cross_sum(prF, prF)) + abs(_cross_sum(prFr, prFr))
    square = _real_part(total, scale, "H2-gap")
    return _from_square(square, scale, "pole-residue", (float(first.real), float(second.real)))


def _check_evaluation_points(points: np.ndarray, a: np.ndarray, label: str) -> None:
    if points.size == 0 or a.shape[0] == 0:
        return
    poles = spla.eigvals(a)
    gap = np.abs(points[:, None] - poles[None, :])
    scale = np.maximum(np.abs(points), 1.0)[:, None]
    if np.any(gap < MIRROR_TOL * scale):
        raise MirrorCollisionError(f"A mirrored closed-loop pole coincides with a pole of {label}")


def h2_gap_theorem1(G: StateSpace, Gr: StateSpace,
                    full: Optional[ClosedLoopFactorization] = None) -> NormResult:
    """
    H2-gap through open-loop evaluations of G, Gr and the factors M, M_r.

    The square equals
    ``sum_i c_i^T M_r(-l_i)(G - Gr)(-l_i) b_i + sum_j c_j^T M(-l_j)(Gr - G)(-l_j) b_j``
    with the closed-loop residue data of G (index i) and Gr (index j).
    ``terms`` holds the two sums.

    Each product is evaluated as ``M_r G - N_r`` (and ``M Gr - N``), which
    is the same function because ``M_r Gr = N_r``. A point ``-l`` close to
    a pole of a system makes the factor M of that system nearly vanish,
    and the product of the two would otherwise lose its accuracy.

    Raises:
        UnstablePoleError: If a closed-loop pole is not stable
        MirrorCollisionError: If ``-l_i`` is a pole of G or ``-l_j`` a pole of Gr
    """
    full, reduced = _factorizations(G, Gr, full)
    pr, prr = closed_loop_pole_residue(full), closed_loop_pole_residue(reduced)
    _check_poles(pr, prr)
    _check_evaluation_points(-pr.poles, G.a, "the full system")
    _check_evaluation_points(-prr.poles, Gr.a, "the reduced system")
    m_full, m_red = full.m_system(), reduced.m_system()
    n_full, n_red = full.n_system(), reduced.n_system()

    first = 0.0j
    for lam, c, b in zip(pr.poles, pr.c, pr.b):
        s = -lam
        first += c @ (m_red.evaluate(s) @ G.evaluate(s) - n_red.evaluate(s)) @ b
    second = 0.0j
    for lam, c, b in zip(prr.poles, prr.c, prr.b):
        s = -lam
        second += c @ (m_full.evaluate(s) @ Gr.evaluate(s) - n_full.evaluate(s)) @ b

    total = complex(first + second)
    scale = abs(first) + abs(second)
    square = _real_part(total, scale, "open-loop H2-gap")
    return _from_square(square, scale, "theorem1", (float(first.real), float(second.real)))


def linf_gap(G: StateSpace, Gr: StateSpace, full: Optional[ClosedLoopFactorization] = None,
             rel_tol: float = 1e-6) -> NormResult:
    """L-infinity norm of the closed-loop error ``G_F - G_Fr`` (stable, so equal to H-infinity)."""
    full, reduced = _factorizations(G, Gr, full)
    return linf_norm(error_system(full.gf, reduced.gf), rel_tol)


def l2_error_bound(G: StateSpace, Gr: StateSpace,
                   full: Optional[ClosedLoopFactorization] = None) -> float:
    """
    Upper bound ``||M_r^{-1}||_Linf (1 + ||G||_Linf) ||G - Gr||_H2-gap``
    on the L2 error between G and Gr.

    Raises:
        ImaginaryAxisPoleError: If G or Gr has a pole on the imaginary axis
    """
    _imaginary_axis_check(G)
    _imaginary_axis_check(Gr)
    full, reduced = _factorizations(G, Gr, full)
    gap = h2_gap(G, Gr, full).value
    if gap == 0.0:
        return 0.0
    m_inv = linf_norm(reduced.m_inverse_system()).value
    g_norm = linf_norm(G).value
    return m_inv * (1.0 + g_norm) * gap
