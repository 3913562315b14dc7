"""
Benchmark models for gapmor.
Finite-difference convection-diffusion-reaction system on the unit
square and seeded random stabilizable systems.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.linalg as spla
import scipy.sparse as sp

from .lti import StateSpace

Rectangle = Tuple[Tuple[float, float], Tuple[float, float]]

SCHEMES = ("central", "upwind")
OUTPUT_WEIGHTS = ("indicator", "quadrature")
MEMBERSHIP_TOL = 1e-12


@dataclass(frozen=True)
class ConvDiffConfig:
    """
    Parameters of ``v_t = diffusion * Lap(v) - convection * sin(x) v_x + reaction * v + chi * u``.

    Attributes:
        nx: Interior grid points per axis
        diffusion: Diffusion coefficient
        convection: Coefficient of ``sin(x) v_x``
        reaction: Reaction coefficient
        control_domain: Rectangle ((x0, x1), (y0, y1)) carrying the input
        observation_domain: Rectangle observed by the output
        scheme: Convection stencil, "central" or "upwind"
        output_weight: "indicator" sums the observed grid values,
            "quadrature" weights them by h^2
    """
    nx: int = 20
    diffusion: float = 1.0
    convection: float = 20.0
    reaction: float = 50.0
    control_domain: Rectangle = ((0.2, 0.3), (0.2, 0.3))
    observation_domain: Rectangle = ((0.5, 0.7), (0.7, 0.9))
    scheme: str = "central"
    output_weight: str = "indicator"

    def __post_init__(self):
        if self.nx < 3:
            raise ValueError(f"nx must be at least 3, got {self.nx}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"Unknown scheme '{self.scheme}', expected one of {SCHEMES}")
        if self.output_weight not in OUTPUT_WEIGHTS:
            raise ValueError(f"Unknown output weight '{self.output_weight}', expected one of {OUTPUT_WEIGHTS}")
        for name, rect in (("control_domain", self.control_domain),
                           ("observation_domain", self.observation_domain)):
            for lo, hi in rect:
                if not 0.0 < lo <= hi < 1.0:
                    raise ValueError(f"{name} must lie inside the open unit square, got {rect}")

    @property
    def h(self) -> float:
        return 1.0 / (self.nx + 1)

    @property
    def coordinates(self) -> np.ndarray:
        """Interior grid coordinates ``i * h`` for i = 1..nx."""
        return np.arange(1, self.nx + 1) * self.h


def _indicator(cfg: ConvDiffConfig, rect: Rectangle) -> np.ndarray:
    x = cfg.coordinates
    (x0, x1), (y0, y1) = rect
    in_x = (x >= x0 - MEMBERSHIP_TOL) & (x <= x1 + MEMBERSHIP_TOL)
    in_y = (x >= y0 - MEMBERSHIP_TOL) & (x <= y1 + MEMBERSHIP_TOL)
    # x is the fastest running index
    return np.kron(in_y, in_x).astype(float)


def _first_difference(cfg: ConvDiffConfig, velocity: np.ndarray) -> sp.spmatrix:
    n, h = cfg.nx, cfg.h
    if cfg.scheme == "central":
        return sp.diags([-1.0, 1.0], [-1, 1], shape=(n, n)) / (2.0 * h)
    backward = sp.diags([-1.0, 1.0], [-1, 0], shape=(n, n)) / h
    forward = sp.diags([-1.0, 1.0], [0, 1], shape=(n, n)) / h
    positive = sp.diags((velocity >= 0).astype(float))
    return positive @ backward + (sp.identity(n) - positive) @ forward


def convection_diffusion(cfg: ConvDiffConfig = ConvDiffConfig()) -> StateSpace:
    """
    Finite-difference discretization with homogeneous Dirichlet boundaries.

    The state is the grid function at the ``nx * nx`` interior points with
    x running fastest. B is the indicator of the control rectangle. C is
    the indicator of the observation rectangle, or the composite midpoint
    quadrature (weight h^2) over it with ``output_weight="quadrature"``.
    The indicator output reproduces the published gap magnitudes.

    Args:
        cfg: Model parameters

    Returns:
        Single-input single-output StateSpace of order nx^2
    """
    n, h = cfg.nx, cfg.h
    eye = sp.identity(n, format="csr")
    second = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n)) / h ** 2
    laplacian = sp.kron(eye, second) + sp.kron(second, eye)

    velocity = cfg.convection * np.sin(cfg.coordinates)
    convection = sp.kron(eye, sp.diags(velocity) @ _first_difference(cfg, velocity))

    a = cfg.diffusion * laplacian - convection + cfg.reaction * sp.identity(n * n)
    b = _indicator(cfg, cfg.control_domain)[:, None]
    weight = h ** 2 if cfg.output_weight == "quadrature" else 1.0
    c = weight * _indicator(cfg, cfg.observation_domain)[None, :]
    return StateSpace(a.toarray(), b, c)


def random_stabilizable(n: int, m: int = 1, p: int = 1, n_unstable: int = 0, seed: int = 0) -> StateSpace:
    """
    Seeded random system with exactly ``n_unstable`` eigenvalues in the
    open right half-plane.

    A is an orthogonal similarity of a block-diagonal matrix holding
    stable real eigenvalues, stable 2x2 rotation blocks and unstable real
    eigenvalues; B and C are dense Gaussian.
    """
    if not 0 <= n_unstable <= n:
        raise ValueError(f"n_unstable must lie in [0, {n}], got {n_unstable}")
    rng = np.random.default_rng(seed)
    n_stable = n - n_unstable
    n_pairs = n_stable // 4

    blocks = []
    for _ in range(n_pairs):
        alpha = -rng.uniform(0.2, 3.0)
        beta = rng.uniform(0.5, 5.0)
        blocks.append(np.array([[alpha, beta], [-beta, alpha]]))
    blocks.extend(np.array([[-rng.uniform(0.5, 5.0)]]) for _ in range(n_stable - 2 * n_pairs))
    blocks.extend(np.array([[rng.uniform(0.5, 3.0)]]) for _ in range(n_unstable))

    d = spla.block_diag(*blocks) if blocks else np.zeros((0, 0))

    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    a = q @ d @ q.T
    b = rng.standard_normal((n, m))
    c = rng.standard_normal((p, n))
    return StateSpace(a, b, c)
