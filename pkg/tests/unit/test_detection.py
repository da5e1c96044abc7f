"""Tests for the closed-form detection statistics."""

import math

import numpy as np
import pytest
from scipy.special import gammainc, gammaincc

from src.covert_uav.detection import (
    DetectorParams,
    SlotDetectionInput,
    chi2_scalings,
    dep_multi,
    dep_single,
    fa_md_multi,
    fa_md_single,
    gamma_cap,
    gamma_cap_multi,
    gamma_cap_single,
    kl_divergence,
    pinsker_bound,
    reg_lower_gamma,
    reg_upper_gamma,
)
from src.covert_uav.errors import DomainError, StatModelError
from src.covert_uav.models.trajectory import Mode


def make_input(gamma2, k, p_jam=0.5, gain_jw=1.0, noise=1.0):
    """Input whose K-antenna SINR equals gamma2."""
    return SlotDetectionInput(
        p_s=1.0,
        p_jam=p_jam,
        gain_sw=gamma2 * (noise + p_jam * k * gain_jw) / k,
        gain_jw=gain_jw,
        noise=noise,
    )


class TestRegLowerGamma:
    """Regularized lower incomplete gamma function."""

    def test_order_one(self):
        """P(1, x) = 1 - exp(-x)."""
        for x in (1e-8, 0.3, 1.0, 7.5, 40.0):
            assert reg_lower_gamma(1, x) == pytest.approx(-math.expm1(-x), rel=1e-13)

    def test_zero_argument(self):
        """P(a, 0) = 0."""
        assert reg_lower_gamma(30, 0.0) == 0.0

    def test_known_value(self):
        """P(2, 1) = 1 - 2/e."""
        assert reg_lower_gamma(2, 1.0) == pytest.approx(1 - 2 / math.e, abs=1e-15)
        assert reg_lower_gamma(2, 1.0) == pytest.approx(0.264241, abs=1e-6)

    @pytest.mark.parametrize("a", [1, 2, 10, 30, 100, 300, 1000])
    def test_complements(self, a):
        """P and Q add to one across orders and arguments."""
        for x in a * np.array([0.01, 0.3, 0.99, 1.0, 1.01, 2.0, 5.0]):
            total = reg_lower_gamma(a, float(x)) + reg_upper_gamma(a, float(x))
            assert total == pytest.approx(1.0, abs=1e-14)

    def test_upper_tail_precision(self):
        """Q keeps tails far below the double-precision spacing near one."""
        assert reg_upper_gamma(30, 300.0) == pytest.approx(gammaincc(30, 300.0), rel=1e-10)
        assert 0.0 < reg_upper_gamma(30, 300.0) < 1e-60

    def test_infinite_argument(self):
        """The distribution function reaches one."""
        assert reg_lower_gamma(30, math.inf) == 1.0

    @pytest.mark.parametrize("a,x", [(0, 1.0), (2.5, 1.0), (3, -0.1), (3, math.nan)])
    def test_domain(self, a, x):
        """Non-integer orders and negative arguments are rejected."""
        with pytest.raises(DomainError):
            reg_lower_gamma(a, x)
        with pytest.raises(DomainError):
            reg_upper_gamma(a, x)


class TestDepSingle:
    """Energy-detector error probability."""

    def test_blind_limit(self):
        """Zero or vanishing SINR gives DEP one."""
        assert dep_single(0.0, 30) == 1.0
        assert dep_single(1e-13, 30) == 1.0
        assert dep_single(1e-9, 30) == pytest.approx(1.0, abs=1e-8)

    def test_strictly_decreasing(self):
        """Monotone decrease on a log grid from 1e-4 to 10."""
        values = [dep_single(float(g), 30) for g in np.logspace(-4, 1, 60)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_in_unit_interval(self):
        """Probabilities stay in [0, 1] on a random grid."""
        rng = np.random.default_rng(11)
        for gamma, n_obs in zip(rng.uniform(0, 50, 200), rng.integers(1, 200, 200)):
            assert 0.0 <= dep_single(float(gamma), int(n_obs)) <= 1.0

    def test_fa_md_sum(self):
        """False alarm plus missed detection is the DEP."""
        for gamma in (0.01, 0.2, 0.5, 3.0):
            fa, md = fa_md_single(gamma, 30)
            assert fa + md == pytest.approx(dep_single(gamma, 30), abs=1e-15)
            assert 0.0 <= fa <= 1.0 and 0.0 <= md <= 1.0

    def test_reference_value(self):
        """gamma = 0.5, I = 30 against the defining integral."""
        lower = 30 * math.log1p(0.5) / 0.5
        upper = 1.5 * lower
        expected = 1.0 - (gammainc(30, upper) - gammainc(30, lower))
        assert dep_single(0.5, 30) == pytest.approx(expected, abs=1e-13)

    def test_negative(self):
        """Negative SINR is outside the domain."""
        with pytest.raises(DomainError):
            dep_single(-0.1, 30)


class TestCovertCaps:
    """Bisection roots of the covertness conditions."""

    def test_single_cap_is_root(self):
        """DEP at the cap equals 1 - epsilon."""
        cap = gamma_cap_single(0.05, 30)
        assert dep_single(cap, 30) == pytest.approx(0.95, abs=1e-10)

    def test_single_cap_dense_grid(self):
        """The root separates covert and non-covert SINRs on a fine grid."""
        cap = gamma_cap_single(0.05, 30)
        grid = np.linspace(0.5 * cap, 1.5 * cap, 101)
        covert = [dep_single(float(g), 30) >= 0.95 for g in grid]
        assert all(covert[:50])
        assert not any(covert[51:])

    def test_single_cap_monotone(self):
        """Cap grows with epsilon and shrinks with the observation count."""
        epsilons = (0.01, 0.05, 0.1, 0.2)
        observations = (10, 20, 30, 40)
        caps = np.array([[gamma_cap_single(e, i) for i in observations] for e in epsilons])
        assert np.all(np.diff(caps, axis=0) > 0)
        assert np.all(np.diff(caps, axis=1) < 0)

    def test_small_epsilon(self):
        """Near-perfect covertness forces near-zero SINR."""
        assert gamma_cap_single(1e-6, 30) < 1e-4
        assert gamma_cap_multi(1e-6, 30) < 1e-4

    def test_multi_cap_small_gamma_form(self):
        """KL cap is close to 2*eps/sqrt(I)."""
        cap = gamma_cap_multi(0.05, 30)
        assert cap == pytest.approx(2 * 0.05 / math.sqrt(30), rel=0.02)
        assert cap == pytest.approx(1.826e-2, rel=0.02)
        assert abs(kl_divergence(cap, 30) - 2 * 0.05**2) <= 1e-12

    def test_dispatch(self):
        """gamma_cap selects the warden model."""
        assert gamma_cap(Mode.SINGLE, 0.05, 30) == gamma_cap_single(0.05, 30)
        assert gamma_cap("multi", 0.05, 30) == gamma_cap_multi(0.05, 30)

    @pytest.mark.parametrize("eps", [0.0, 1.0, -0.2])
    def test_epsilon_domain(self, eps):
        """epsilon must lie in (0, 1)."""
        with pytest.raises(DomainError):
            gamma_cap_single(eps, 30)
        with pytest.raises(DomainError):
            gamma_cap_multi(eps, 30)


class TestKlDivergence:
    """KL divergence and the Pinsker bound."""

    def test_zero(self):
        """Identical hypotheses."""
        assert kl_divergence(0.0, 30) == 0.0

    def test_small_gamma(self):
        """D ~ I*gamma^2/2 for small gamma."""
        assert kl_divergence(1e-3, 30) == pytest.approx(30 * 1e-6 / 2, rel=0.01)

    def test_series_branch_continuous(self):
        """The small-gamma series joins the direct formula."""
        below, above = kl_divergence(1e-3 * (1 - 1e-9), 30), kl_divergence(1e-3, 30)
        assert below == pytest.approx(above, rel=1e-7)

    def test_negative(self):
        with pytest.raises(DomainError):
            kl_divergence(-1.0, 30)

    def test_pinsker(self):
        """Boundary values of 1 - sqrt(D/2)."""
        assert pinsker_bound(0.0) == 1.0
        assert pinsker_bound(2.0) == 0.0
        assert pinsker_bound(10.0) == 0.0
        assert pinsker_bound(2 * 0.05**2) == pytest.approx(0.95, abs=1e-15)
        with pytest.raises(DomainError):
            pinsker_bound(-1e-3)


class TestDepMulti:
    """Likelihood-ratio detector at a K-antenna warden."""

    def test_silent(self):
        """No signal, blind detector."""
        inp = SlotDetectionInput(p_s=0.0, p_jam=0.1, gain_sw=1.0, gain_jw=1.0, noise=1.0)
        assert dep_multi(inp, 30, 4) == 1.0

    def test_one_antenna_matches_single(self):
        """With K = 1 the detector is the energy detector."""
        for gamma in (0.02, 0.3, 1.2):
            inp = make_input(gamma, 1)
            assert dep_multi(inp, 30, 1) == pytest.approx(dep_single(inp.gamma1(), 30), abs=1e-12)

    def test_effective_equals_energy_detector_at_gamma2(self):
        """Projected on the common direction the statistic is an energy detector at gamma2."""
        for k in (2, 4, 6):
            inp = make_input(0.2, k, noise=0.7)
            assert dep_multi(inp, 30, k) == pytest.approx(dep_single(inp.gamma2(k), 30), abs=1e-12)

    def test_pinsker_dominance(self):
        """DEP is never below the Pinsker bound."""
        for k in (1, 2, 4, 6, 8):
            for gamma in np.logspace(-3, 0.5, 15):
                inp = make_input(float(gamma), k)
                bound = pinsker_bound(kl_divergence(inp.gamma2(k), 30))
                assert dep_multi(inp, 30, k) >= bound - 1e-12

    def test_scalings_positive(self):
        """Both chi-squared scalings are positive and ordered."""
        inp = make_input(0.1, 4)
        threshold, kappa0, kappa1 = chi2_scalings(inp, 4)
        assert threshold == pytest.approx(math.log1p(0.1), rel=1e-12)
        assert 0.0 < kappa0 < kappa1

    def test_determinant_convention_unit_noise(self):
        """With unit noise power the two conventions coincide."""
        inp = make_input(0.1, 4)
        assert fa_md_multi(inp, 30, 4, "determinant") == pytest.approx(fa_md_multi(inp, 30, 4), abs=1e-14)

    def test_determinant_convention_underflow(self):
        """The literal determinant scaling collapses for tiny noise and many antennas."""
        inp = make_input(0.1, 30, noise=1e-15)
        with pytest.raises(StatModelError):
            dep_multi(inp, 30, 30, convention="determinant")

    def test_unknown_convention(self):
        with pytest.raises(DomainError):
            dep_multi(make_input(0.1, 2), 30, 2, convention="exact")

    def test_zero_noise(self):
        """SINR needs positive noise."""
        inp = SlotDetectionInput(p_s=1.0, p_jam=0.0, gain_sw=1.0, gain_jw=1.0, noise=0.0)
        with pytest.raises(DomainError):
            inp.gamma1()


class TestDetectorParams:
    def test_validation(self):
        """Observation counts and antennas are positive; epsilon is in (0, 1)."""
        assert DetectorParams(n_obs=30, n_antennas=4, epsilon=0.05).n_antennas == 4
        with pytest.raises(Exception):
            DetectorParams(n_obs=0, epsilon=0.05)
        with pytest.raises(Exception):
            DetectorParams(n_obs=30, epsilon=1.0)
