"""Closed-form detection statistics at a warden.

Energy detector (single antenna) and likelihood-ratio detector (K antennas)
over I observations. Every probability returned here lies in [0, 1].
"""

import logging
import math
from functools import lru_cache
from typing import Callable, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import bisect
from scipy.special import gammainc, gammaincc

from .errors import BracketError, DomainError, StatModelError
from .models.trajectory import Mode

logger = logging.getLogger(__name__)

# SINR treated as zero (the detector is blind below it).
GAMMA_FLOOR = 1e-12

BRACKET_START = 1.0
BRACKET_CAP = 1e9
ROOT_RESIDUAL = 1e-12

CONVENTIONS = ("effective", "determinant")


class DetectorParams(BaseModel):
    """Observation count, warden antenna count and covertness tolerance."""

    model_config = ConfigDict(frozen=True)

    n_obs: int = Field(ge=1)
    n_antennas: int = Field(default=1, ge=1)
    epsilon: float = Field(gt=0.0, lt=1.0)


class SlotDetectionInput(BaseModel):
    """Powers and scalar channel gains seen by one warden in one slot."""

    model_config = ConfigDict(frozen=True)

    p_s: float = Field(ge=0.0)
    p_jam: float = Field(ge=0.0)
    gain_sw: float = Field(ge=0.0)
    gain_jw: float = Field(ge=0.0)
    noise: float = Field(ge=0.0)

    def gamma1(self) -> float:
        _require_noise(self.noise)
        return self.p_s * self.gain_sw / (self.p_jam * self.gain_jw + self.noise)

    def gamma2(self, n_antennas: int) -> float:
        _require_noise(self.noise)
        k = float(n_antennas)
        return self.p_s * k * self.gain_sw / (self.noise + self.p_jam * k * self.gain_jw)


def _require_noise(noise: float) -> None:
    if noise <= 0.0:
        raise DomainError("noise power must be positive", noise=noise)


def reg_lower_gamma(a: int, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) for integer order a ≥ 1."""
    _check_gamma_args(a, x)
    return min(1.0, max(0.0, float(gammainc(int(a), x))))


def reg_upper_gamma(a: int, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    _check_gamma_args(a, x)
    return min(1.0, max(0.0, float(gammaincc(int(a), x))))


def _check_gamma_args(a: int, x: float) -> None:
    if a < 1 or int(a) != a:
        raise DomainError("order must be a positive integer", a=a)
    if x < 0.0 or math.isnan(x):
        raise DomainError("argument must be nonnegative", x=x)


def _limits(gamma: float, n_obs: int) -> Tuple[float, float]:
    """Energy thresholds normalized by the noise-only and signal-plus-noise variances."""
    lower = n_obs * math.log1p(gamma) / gamma
    return lower, (1.0 + gamma) * lower


def fa_md_single(gamma1: float, n_obs: int) -> Tuple[float, float]:
    """False-alarm and missed-detection probabilities of the energy detector."""
    if gamma1 < 0.0 or math.isnan(gamma1):
        raise DomainError("SINR must be nonnegative", gamma=gamma1)
    if gamma1 < GAMMA_FLOOR:
        return 1.0, 0.0
    lower, upper = _limits(gamma1, n_obs)
    return reg_upper_gamma(n_obs, upper), reg_lower_gamma(n_obs, lower)


def dep_single(gamma1: float, n_obs: int) -> float:
    """Detection error probability ξ of a single-antenna warden at SINR γ₁."""
    if gamma1 < 0.0 or math.isnan(gamma1):
        raise DomainError("SINR must be nonnegative", gamma=gamma1)
    if gamma1 < GAMMA_FLOOR:
        return 1.0
    lower, upper = _limits(gamma1, n_obs)
    value = 1.0 - (reg_lower_gamma(n_obs, upper) - reg_lower_gamma(n_obs, lower))
    return min(1.0, max(0.0, value))


def kl_divergence(gamma2: float, n_obs: int) -> float:
    """KL divergence (nats) between the warden's observations without and with S."""
    if gamma2 < 0.0 or math.isnan(gamma2):
        raise DomainError("SINR must be nonnegative", gamma=gamma2)
    if gamma2 < 1e-3:
        # ln(1+γ) − γ/(1+γ) = Σ_{n≥2} (−1)^n (n−1)/n γ^n
        per_obs = math.fsum((-1) ** n * (n - 1) / n * gamma2**n for n in range(2, 12))
    else:
        per_obs = math.log1p(gamma2) - gamma2 / (1.0 + gamma2)
    return n_obs * per_obs


def pinsker_bound(divergence: float) -> float:
    """Lower bound 1 − √(D/2) on the detection error probability."""
    if divergence < 0.0:
        raise DomainError("divergence must be nonnegative", divergence=divergence)
    return max(0.0, 1.0 - math.sqrt(divergence / 2.0))


def _bisect_decreasing(func: Callable[[float], float], what: str) -> float:
    """Root of a function positive at 0 and eventually negative."""
    hi = BRACKET_START
    while func(hi) > 0.0:
        hi *= 2.0
        if hi > BRACKET_CAP:
            raise BracketError(f"no bracket up to {BRACKET_CAP:g} for {what}", what=what)
    root = bisect(func, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=2000)
    residual = abs(func(root))
    if residual > ROOT_RESIDUAL:
        logger.warning("Bisection residual %.3e for %s exceeds %.0e", residual, what, ROOT_RESIDUAL)
    return float(root)


@lru_cache(maxsize=256)
def gamma_cap_single(eps: float, n_obs: int) -> float:
    """Largest γ₁ with dep_single(γ₁) ≥ 1 − ε."""
    if not 0.0 < eps < 1.0:
        raise DomainError("epsilon must lie in (0, 1)", epsilon=eps)
    target = 1.0 - eps
    return _bisect_decreasing(lambda g: dep_single(g, n_obs) - target, f"gamma_cap_single({eps}, {n_obs})")


@lru_cache(maxsize=256)
def gamma_cap_multi(eps: float, n_obs: int) -> float:
    """Largest γ₂ whose KL divergence stays at 2ε² (Pinsker bound 1 − ε)."""
    if not 0.0 < eps < 1.0:
        raise DomainError("epsilon must lie in (0, 1)", epsilon=eps)
    target = 2.0 * eps * eps
    return _bisect_decreasing(lambda g: target - kl_divergence(g, n_obs), f"gamma_cap_multi({eps}, {n_obs})")


def gamma_cap(mode: Union[Mode, str], eps: float, n_obs: int) -> float:
    """Covert SINR cap for the given warden receiver model."""
    if Mode(mode) is Mode.SINGLE:
        return gamma_cap_single(eps, n_obs)
    return gamma_cap_multi(eps, n_obs)


def chi2_scalings(
    inp: SlotDetectionInput, n_antennas: int, convention: str = "effective"
) -> Tuple[float, float, float]:
    """Threshold λ and the per-hypothesis scalings κ₀, κ₁ of the LRT statistic.

    With identical-entry channel vectors the statistic lives on the all-ones
    direction, where the covariances have eigenvalues V₀ = σ² + K·P_J|h_JW|²
    and V₁ = V₀ + K·P_S|h_SW|². ``effective`` scales by V_j; ``determinant``
    scales by det(K_j) = V_j·σ^{2(K−1)}.
    """
    if convention not in CONVENTIONS:
        raise DomainError(f"unknown convention {convention!r}", convention=convention)
    _require_noise(inp.noise)
    k = float(n_antennas)
    signal = k * inp.p_s * inp.gain_sw
    v0 = inp.noise + k * inp.p_jam * inp.gain_jw
    v1 = v0 + signal
    bracket = signal / (v0 * v1)
    if convention == "determinant":
        # log-space keeps σ^{2(K−1)} representable for large K
        scale = math.exp((n_antennas - 1) * math.log(inp.noise))
        kappa0, kappa1 = v0 * scale * bracket, v1 * scale * bracket
    else:
        kappa0, kappa1 = v0 * bracket, v1 * bracket
    threshold = math.log1p(signal / v0)
    return threshold, kappa0, kappa1


def fa_md_multi(
    inp: SlotDetectionInput, n_obs: int, n_antennas: int, convention: str = "effective"
) -> Tuple[float, float]:
    """False-alarm and missed-detection probabilities of the K-antenna LRT detector."""
    if inp.p_s * inp.gain_sw == 0.0:
        return 1.0, 0.0
    per_obs, kappa0, kappa1 = chi2_scalings(inp, n_antennas, convention)
    for name, kappa in (("kappa0", kappa0), ("kappa1", kappa1)):
        if not math.isfinite(kappa) or kappa <= 0.0:
            raise StatModelError(
                f"chi-squared scaling {name} = {kappa!r} is not positive",
                kappa0=kappa0,
                kappa1=kappa1,
                convention=convention,
            )
    lam = n_obs * per_obs
    fa = reg_upper_gamma(n_obs, lam / kappa0)
    md = reg_lower_gamma(n_obs, lam / kappa1)
    return fa, md


def dep_multi(
    inp: SlotDetectionInput, n_obs: int, n_antennas: int, convention: str = "effective"
) -> float:
    """Detection error probability of a K-antenna warden."""
    fa, md = fa_md_multi(inp, n_obs, n_antennas, convention)
    return min(1.0, max(0.0, fa + md))
