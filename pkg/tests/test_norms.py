"""Tests for the system norms module."""

import numpy as np
import pytest

from gapmor import norms
from gapmor.lti import (
    NonzeroFeedthroughError,
    StateSpace,
    UnstableError,
    closed_loop_pole_residue,
    coprime_factorize,
    error_system,
    pole_residue,
)
from gapmor.models import random_stabilizable
from gapmor.reduction import lqgbt

FIRST_ORDER = StateSpace([[-1.0]], [[1.0]], [[1.0]])


def resonant(zeta: float, omega: float = 1.0) -> StateSpace:
    """omega^2 / (s^2 + 2 zeta omega s + omega^2)."""
    return StateSpace([[0.0, 1.0], [-omega ** 2, -2 * zeta * omega]], [[0.0], [omega ** 2]], [[1.0, 0.0]])


def seeded_pair(seed: int):
    full = random_stabilizable(5 + seed % 6, m=1 + seed % 2, p=1 + (seed // 2) % 2, n_unstable=1 + seed % 3, seed=seed)
    reduced = random_stabilizable(1 + seed % 4, m=full.m, p=full.p, n_unstable=seed % 2, seed=100 + seed)
    return full, reduced


def similar(sys: StateSpace, seed: int = 0) -> StateSpace:
    """The same transfer function in coordinates x' = T x."""
    rng = np.random.default_rng(seed)
    t = np.eye(sys.n) + 0.3 * rng.standard_normal((sys.n, sys.n))
    t_inv = np.linalg.inv(t)
    return StateSpace(t @ sys.a @ t_inv, t @ sys.b, sys.c @ t_inv)


def peak_gain(sys: StateSpace) -> float:
    """Largest sampled gain on a logarithmic grid, refined twice around the best sample."""
    def gain(w):
        return np.linalg.norm(sys.evaluate(1j * w), 2)

    freqs = np.concatenate([[0.0], np.logspace(-3, 3, 4001)])
    for _ in range(3):
        gains = np.array([gain(w) for w in freqs])
        k = int(np.argmax(gains))
        lo, hi = freqs[max(k - 1, 0)], freqs[min(k + 1, len(freqs) - 1)]
        freqs = np.linspace(lo, hi, 401)
    return float(gains.max())


class TestH2Norm:
    """Tests for H2 norms of stable systems."""

    def test_first_order_closed_form(self):
        """Test ||1/(s+1)||_H2 = sqrt(1/2)."""
        assert norms.h2_norm_gramian(FIRST_ORDER).value == pytest.approx(np.sqrt(0.5))

    def test_gramian_and_pole_residue_agree(self, stable_system):
        """Test the two H2 formulas on a stable system."""
        value = norms.h2_norm_gramian(stable_system).value
        assert norms.h2_norm_pole_residue(pole_residue(stable_system)).value == pytest.approx(value, rel=1e-8)

    def test_unstable_system_rejected(self, unstable_system):
        """Test the Gramian route refuses unstable systems."""
        with pytest.raises(UnstableError):
            norms.h2_norm_gramian(unstable_system)

    def test_unstable_pole_residue_rejected(self, unstable_system):
        """Test the pole-residue route refuses unstable poles."""
        with pytest.raises(norms.UnstablePoleError):
            norms.h2_norm_pole_residue(pole_residue(unstable_system))

    def test_feedthrough_rejected(self):
        """Test D != 0 has no finite H2 norm."""
        sys = StateSpace([[-1.0]], [[1.0]], [[1.0]], [[0.5]])
        with pytest.raises(NonzeroFeedthroughError):
            norms.h2_norm_gramian(sys)

    def test_output_scaling(self, stable_system):
        """Test ||k G||_H2 = |k| ||G||_H2."""
        value = norms.h2_norm_gramian(stable_system).value
        assert norms.h2_norm_gramian(stable_system.scaled_output(-3.0)).value == pytest.approx(3 * value)

    def test_quadrature_closed_form(self):
        """Test the frequency integral of 1/(s+1) gives sqrt(1/2)."""
        result = norms.h2_norm_quadrature(FIRST_ORDER)
        assert result.method == "quadrature"
        assert result.value == pytest.approx(np.sqrt(0.5), rel=1e-6)

    @pytest.mark.parametrize("seed", range(4))
    def test_quadrature_matches_gramian_on_error_systems(self, seed):
        """Test both H2 routes agree on closed-loop error systems of resolvable size."""
        full, reduced = seeded_pair(seed)
        err = error_system(coprime_factorize(full).gf, coprime_factorize(reduced).gf)
        gramian = norms.h2_norm_gramian(err)
        assert gramian.resolved
        assert norms.h2_norm_quadrature(err).value == pytest.approx(gramian.value, rel=1e-5)


class TestLinfNorm:
    """Tests for the L-infinity norm."""

    def test_first_order_peak_at_zero(self):
        """Test ||1/(s+1)||_Linf = 1."""
        result = norms.linf_norm(FIRST_ORDER)
        assert result.value == pytest.approx(1.0, rel=1e-6)
        assert result.method == "bisection"

    def test_resonance_peak(self):
        """Test the resonant peak 1 / (2 zeta sqrt(1 - zeta^2))."""
        zeta = 0.1
        result = norms.linf_norm(resonant(zeta))
        assert result.value == pytest.approx(1 / (2 * zeta * np.sqrt(1 - zeta ** 2)), rel=1e-5)
        assert result.peak_frequency == pytest.approx(np.sqrt(1 - 2 * zeta ** 2), rel=1e-3)

    def test_bounds_frequency_samples(self, unstable_system):
        """Test the norm dominates sampled gains of an unstable system."""
        value = norms.linf_norm(unstable_system).value
        for w in np.logspace(-2, 2, 40):
            assert np.linalg.norm(unstable_system.evaluate(1j * w), 2) <= value * (1 + 1e-6)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_dense_grid(self, seed):
        """Test the norm agrees with the peak of a refined frequency grid."""
        sys = random_stabilizable(4 + seed % 5, m=1 + seed % 2, p=1 + (seed // 2) % 2,
                                  n_unstable=seed % 3, seed=seed)
        value = norms.linf_norm(sys).value
        assert value == pytest.approx(peak_gain(sys), rel=1e-6)

    def test_imaginary_axis_pole_rejected(self):
        """Test an undamped oscillator is rejected."""
        with pytest.raises(norms.ImaginaryAxisPoleError):
            norms.linf_norm(resonant(0.0))


class TestGapMetrics:
    """Tests for the H2-gap and its alternative formulas."""

    def test_gap_of_system_with_itself_is_zero(self, unstable_system):
        """Test the gap between identical systems is exactly zero."""
        assert norms.h2_gap(unstable_system, unstable_system).value == 0.0

    @pytest.mark.parametrize("seed", range(50))
    def test_three_formulas_agree(self, seed):
        """Test Gramian, pole-residue and open-loop gap formulas agree."""
        full, reduced = seeded_pair(seed)
        clf, clf_r = coprime_factorize(full), coprime_factorize(reduced)
        gramian = norms.h2_gap(full, reduced, clf).value
        residue = norms.h2_gap_pole_residue(closed_loop_pole_residue(clf), closed_loop_pole_residue(clf_r))
        open_loop = norms.h2_gap_theorem1(full, reduced, clf)
        assert residue.value == pytest.approx(gramian, rel=1e-7)
        assert open_loop.value == pytest.approx(gramian, rel=1e-7)
        assert sum(open_loop.terms) == pytest.approx(gramian ** 2, rel=1e-7)

    def test_gap_is_symmetric(self):
        """Test the gap does not depend on the argument order."""
        full, reduced = seeded_pair(1)
        assert norms.h2_gap(full, reduced).value == pytest.approx(norms.h2_gap(reduced, full).value, rel=1e-8)

    def test_gap_dominated_by_linf_gap_on_lqg_truncation(self, unstable_system):
        """Test the L-infinity gap respects the balanced truncation bound."""
        result = lqgbt(unstable_system, 3)
        gap = norms.linf_gap(unstable_system, result.rom).value
        assert gap <= result.error_bound * (1 + 1e-6)

    def test_l2_bound_dominates_sampled_error(self, unstable_system):
        """Test the L2 error bound exceeds sampled gains of G - Gr."""
        rom = lqgbt(unstable_system, 3).rom
        bound = norms.l2_error_bound(unstable_system, rom)
        for w in np.logspace(-2, 2, 40):
            err = unstable_system.evaluate(1j * w) - rom.evaluate(1j * w)
            assert np.linalg.norm(err, 2) <= bound

    def test_l2_bound_zero_for_identical_systems(self, unstable_system):
        """Test the bound vanishes with the gap."""
        assert norms.l2_error_bound(unstable_system, unstable_system) == 0.0

    def test_equal_transfer_functions_fall_back_to_quadrature(self, unstable_system):
        """Test a gap below the Gramian resolution is recomputed by frequency integration."""
        other = similar(unstable_system, seed=4)
        err = error_system(coprime_factorize(unstable_system).gf, coprime_factorize(other).gf)
        gramian = norms.h2_norm_gramian(err)
        assert not gramian.resolved
        assert gramian.value > 0.0
        result = norms.h2_gap(unstable_system, other)
        assert result.method == "quadrature"
        assert result.value < 1e-8 * norms.h2_norm_gramian(coprime_factorize(unstable_system).gf).value

    def test_resolved_gap_keeps_gramian(self):
        """Test a gap of ordinary size is reported by the Gramian route."""
        full, reduced = seeded_pair(2)
        result = norms.h2_gap(full, reduced)
        assert result.method == "gramian"
        assert result.resolved

    @pytest.mark.parametrize("seed", range(20))
    def test_l2_bound_dominates_direct_error(self, seed):
        """Test the bound exceeds the L2 error of G - Gr for stable pairs."""
        full = random_stabilizable(6 + seed % 4, m=1 + seed % 2, p=1 + (seed // 2) % 2, seed=seed)
        reduced = random_stabilizable(1 + seed % 3, m=full.m, p=full.p, seed=300 + seed)
        direct = norms.h2_norm_gramian(error_system(full, reduced)).value
        assert direct <= norms.l2_error_bound(full, reduced)


class TestNormResult:
    """Tests for the result record."""

    def test_negative_value_rejected(self):
        """Test negative values are invalid."""
        with pytest.raises(ValueError):
            norms.NormResult(-1.0, "gramian")

    def test_float_conversion(self):
        """Test float() returns the value."""
        assert float(norms.NormResult(2.5, "bisection")) == 2.5
