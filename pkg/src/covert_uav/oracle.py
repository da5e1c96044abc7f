"""Independent numerical checks of the closed-form detection statistics.

Simulated detectors, quadrature and dense covariance algebra. The detector
thresholds are restated here rather than imported, so a mistake in
``detection`` cannot cancel against the same mistake in its oracle.
"""

import logging
import math
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.integrate import quad
from scipy.special import gammaln

from .detection import (
    SlotDetectionInput,
    dep_single,
    fa_md_multi,
    fa_md_single,
    gamma_cap_multi,
    gamma_cap_single,
    kl_divergence,
)
from .errors import DomainError, SingularCovariance, StatModelError

logger = logging.getLogger(__name__)

# Trials below which a mismatch is reported as inconclusive instead of failed.
MIN_CONCLUSIVE_TRIALS = 10_000

# Complex samples generated per chunk (bounds memory use).
CHUNK_SAMPLES = 4_000_000

H0, H1 = 0, 1


class McConfig(BaseModel):
    """One Monte-Carlo experiment."""

    model_config = ConfigDict(frozen=True)

    trials: int = Field(ge=1)
    seed: int = Field(default=42, ge=0, lt=2**64)
    input: SlotDetectionInput
    n_obs: int = Field(ge=1)
    n_antennas: int = Field(default=1, ge=1)
    chunk_size: Optional[int] = Field(default=None, ge=1)

    def chunks(self) -> List[int]:
        size = self.chunk_size or max(1, CHUNK_SAMPLES // (self.n_obs * self.n_antennas))
        full, rest = divmod(self.trials, size)
        return [size] * full + ([rest] if rest else [])


class McEstimate(BaseModel):
    """Empirical false-alarm and missed-detection rates with 3σ binomial half-widths."""

    fa_hat: float
    md_hat: float
    fa_halfwidth: float
    md_halfwidth: float
    trials: int

    @property
    def ci_halfwidth(self) -> float:
        return max(self.fa_halfwidth, self.md_halfwidth)

    @property
    def dep_hat(self) -> float:
        return self.fa_hat + self.md_hat


def _halfwidth(p: float, n: int, z: float = 3.0) -> float:
    return z * math.sqrt(p * (1.0 - p) / n)


def _streams(cfg: McConfig) -> Tuple[List[np.random.Generator], List[np.random.Generator]]:
    """One Philox generator per (hypothesis, chunk); results do not depend on chunk order."""
    chunks = cfg.chunks()
    per_hypothesis = np.random.SeedSequence(cfg.seed).spawn(2)
    return tuple(
        [np.random.Generator(np.random.Philox(child)) for child in seq.spawn(len(chunks))]
        for seq in per_hypothesis
    )


def _complex_normal(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    """Unit-variance circularly symmetric complex Gaussian samples."""
    parts = rng.standard_normal(shape + (2,))
    return (parts[..., 0] + 1j * parts[..., 1]) * math.sqrt(0.5)


def _estimate(fa_hits: int, md_hits: int, trials: int) -> McEstimate:
    fa, md = fa_hits / trials, md_hits / trials
    return McEstimate(
        fa_hat=fa,
        md_hat=md,
        fa_halfwidth=_halfwidth(fa, trials),
        md_halfwidth=_halfwidth(md, trials),
        trials=trials,
    )


def simulate_single(cfg: McConfig) -> McEstimate:
    """Energy detector at a single-antenna warden.

    The warden sums the power of I received symbols and declares S active
    when the sum reaches ζ = I·σ₀²σ₁²·ln(σ₁²/σ₀²)/(σ₁² − σ₀²).
    """
    if cfg.n_antennas != 1:
        raise DomainError("simulate_single needs n_antennas = 1", n_antennas=cfg.n_antennas)
    inp = cfg.input
    if inp.noise <= 0.0:
        raise SingularCovariance("noise power must be positive", noise=inp.noise)
    jam = inp.p_jam * inp.gain_jw
    sig = inp.p_s * inp.gain_sw
    var0 = inp.noise + jam
    var1 = var0 + sig
    if sig > 0.0:
        zeta = cfg.n_obs * var0 * var1 * math.log(var1 / var0) / (var1 - var0)
    else:
        zeta = cfg.n_obs * var0

    rng0, rng1 = _streams(cfg)
    fa_hits = md_hits = 0
    for size, g0, g1 in zip(cfg.chunks(), rng0, rng1):
        silent = _complex_normal(g0, (size, cfg.n_obs)) * math.sqrt(var0)
        active = _complex_normal(g1, (size, cfg.n_obs)) * math.sqrt(var1)
        fa_hits += int(np.count_nonzero(np.sum(np.abs(silent) ** 2, axis=1) >= zeta))
        md_hits += int(np.count_nonzero(np.sum(np.abs(active) ** 2, axis=1) < zeta))
    return _estimate(fa_hits, md_hits, cfg.trials)


def _covariances(inp: SlotDetectionInput, n_antennas: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """K₀, K₁ and Δ = K₁ − K₀ for identical-entry channel vectors."""
    if inp.noise <= 0.0:
        raise SingularCovariance("noise power must be positive", noise=inp.noise)
    ones = np.ones((n_antennas, n_antennas))
    k0 = inp.noise * np.eye(n_antennas) + inp.p_jam * inp.gain_jw * ones
    delta = inp.p_s * inp.gain_sw * ones
    return k0, k0 + delta, delta


def simulate_multi(cfg: McConfig) -> McEstimate:
    """Likelihood-ratio detector at a K-antenna warden.

    Each observation is y = √(P_J|h|²)·1·x_J + √(P_S|g|²)·1·x_S + n, and the
    warden declares S active when Ω = Σ yᴴ(K₀⁻¹ − K₁⁻¹)y reaches
    λ = I·ln(det K₁ / det K₀).
    """
    inp = cfg.input
    k = cfg.n_antennas
    k0, k1, _ = _covariances(inp, k)
    weight = np.linalg.inv(k0) - np.linalg.inv(k1)
    lam = cfg.n_obs * (np.linalg.slogdet(k1)[1] - np.linalg.slogdet(k0)[1])
    amp_j = math.sqrt(inp.p_jam * inp.gain_jw)
    amp_s = math.sqrt(inp.p_s * inp.gain_sw)
    amp_n = math.sqrt(inp.noise)

    def statistic(rng: np.random.Generator, size: int, active: bool) -> np.ndarray:
        y = amp_n * _complex_normal(rng, (size, cfg.n_obs, k))
        y += amp_j * _complex_normal(rng, (size, cfg.n_obs, 1))
        if active:
            y += amp_s * _complex_normal(rng, (size, cfg.n_obs, 1))
        return np.real(np.sum(np.conj(y) * (y @ weight.T), axis=(1, 2)))

    rng0, rng1 = _streams(cfg)
    fa_hits = md_hits = 0
    for size, g0, g1 in zip(cfg.chunks(), rng0, rng1):
        fa_hits += int(np.count_nonzero(statistic(g0, size, False) >= lam))
        md_hits += int(np.count_nonzero(statistic(g1, size, True) < lam))
    return _estimate(fa_hits, md_hits, cfg.trials)


def kl_matrix_oracle(inp: SlotDetectionInput, n_obs: int, n_antennas: int) -> float:
    """KL divergence (nats) between CN(0, K₀)^I and CN(0, K₁)^I by dense linear algebra.

    Evaluated as I·[ln det(𝕀 + K₀⁻¹Δ) − tr(K₁⁻¹Δ)], which equals
    I·[tr(K₁⁻¹K₀) − K + ln(det K₁/det K₀)] without its cancellation.
    """
    k0, k1, delta = _covariances(inp, n_antennas)
    chol = np.linalg.cholesky(k0)
    half = np.linalg.solve(chol, delta)
    whitened = np.linalg.solve(chol, half.T).T
    eigenvalues = np.linalg.eigvalsh((whitened + whitened.T) / 2.0)
    if np.any(eigenvalues <= -1.0):
        raise SingularCovariance("covariance ratio is not positive definite")
    # det(𝕀 + K₀⁻¹Δ) = det(𝕀 + L⁻¹ΔL⁻ᵀ) with K₀ = LLᵀ
    logdet = math.fsum(math.log1p(float(mu)) for mu in eigenvalues)
    trace = float(np.trace(np.linalg.solve(k1, delta)))
    return float(n_obs * (logdet - trace))


def dep_quadrature(gamma1: float, n_obs: int) -> float:
    """Detection error probability of the energy detector by adaptive quadrature."""
    if gamma1 < 0.0 or math.isnan(gamma1):
        raise DomainError("SINR must be nonnegative", gamma=gamma1)
    if gamma1 == 0.0:
        return 1.0
    lower = n_obs * math.log1p(gamma1) / gamma1
    upper = (1.0 + gamma1) * lower
    log_norm = float(gammaln(n_obs))

    def density(t: float) -> float:
        return math.exp((n_obs - 1) * math.log(t) - t - log_norm)

    mode = n_obs - 1.0
    points = [mode] if lower < mode < upper else None
    mass, _ = quad(density, lower, upper, epsabs=1e-13, epsrel=1e-12, limit=200, points=points)
    return min(1.0, max(0.0, 1.0 - mass))


# ---------------------------------------------------------------------------
# Verification battery
# ---------------------------------------------------------------------------


class VerificationCase(BaseModel):
    name: str
    kind: str
    closed_form: float
    estimate: float
    tolerance: float
    verdict: str = "pass"
    details: Dict[str, Any] = Field(default_factory=dict)

    @property
    def gap(self) -> float:
        return abs(self.estimate - self.closed_form)


class VerificationReport(BaseModel):
    seed: int
    trials: int
    z: float
    cases: List[VerificationCase] = Field(default_factory=list)

    @property
    def failures(self) -> List[VerificationCase]:
        return [c for c in self.cases if c.verdict == "fail"]

    @property
    def passed(self) -> bool:
        return not self.failures

    def counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for case in self.cases:
            counts[case.verdict] = counts.get(case.verdict, 0) + 1
        return counts


def _band(p: float, n: int, z: float) -> float:
    """z-sigma binomial band, never narrower than z counts."""
    return z * math.sqrt(max(p * (1.0 - p), 1.0 / n) / n)


def _mc_verdict(gap: float, tolerance: float, trials: int) -> str:
    if gap <= tolerance:
        return "pass"
    return "inconclusive" if trials < MIN_CONCLUSIVE_TRIALS else "fail"


def _input_for_gamma1(gamma: float, p_jam: float, gain_jw: float, noise: float = 1.0) -> SlotDetectionInput:
    return SlotDetectionInput(
        p_s=1.0, p_jam=p_jam, gain_sw=gamma * (p_jam * gain_jw + noise), gain_jw=gain_jw, noise=noise
    )


def _input_for_gamma2(
    gamma: float, n_antennas: int, p_jam: float, gain_jw: float, noise: float = 1.0
) -> SlotDetectionInput:
    k = float(n_antennas)
    return SlotDetectionInput(
        p_s=1.0,
        p_jam=p_jam,
        gain_sw=gamma * (noise + p_jam * k * gain_jw) / k,
        gain_jw=gain_jw,
        noise=noise,
    )


def _add_pair(
    report: VerificationReport,
    name: str,
    closed: Tuple[float, float],
    est: McEstimate,
    details: Dict[str, Any],
    kind: str = "montecarlo",
) -> None:
    for label, c, e in (("fa", closed[0], est.fa_hat), ("md", closed[1], est.md_hat)):
        tol = _band(c, est.trials, report.z)
        case = VerificationCase(
            name=f"{name}.{label}",
            kind=kind,
            closed_form=c,
            estimate=e,
            tolerance=tol,
            details=details,
        )
        if kind == "info":
            case.verdict = "info"
        else:
            case.verdict = _mc_verdict(case.gap, tol, est.trials)
        report.cases.append(case)


def _single_cases(report: VerificationReport, rng: np.random.Generator, seeds) -> None:
    n_obs = 30
    gammas = [0.5] + list(np.exp(rng.uniform(math.log(0.05), math.log(1.0), size=4)))
    for idx, gamma in enumerate(gammas):
        inp = _input_for_gamma1(float(gamma), p_jam=float(rng.uniform(0.2, 1.0)), gain_jw=float(rng.uniform(0.5, 2.0)))
        est = simulate_single(McConfig(trials=report.trials, seed=next(seeds), input=inp, n_obs=n_obs))
        _add_pair(report, f"single[{idx}]", fa_md_single(inp.gamma1(), n_obs), est,
                  {"gamma1": inp.gamma1(), "n_obs": n_obs})


def _multi_cases(report: VerificationReport, rng: np.random.Generator, seeds) -> None:
    n_obs = 30
    for idx, k in enumerate((2, 4, 6, 2, 4)):
        gamma = float(np.exp(rng.uniform(math.log(0.05), math.log(0.5))))
        inp = _input_for_gamma2(
            gamma, k, p_jam=float(rng.uniform(0.2, 1.0)), gain_jw=float(rng.uniform(0.5, 2.0)),
            noise=float(rng.uniform(0.5, 2.0)),
        )
        est = simulate_multi(McConfig(trials=report.trials, seed=next(seeds), input=inp, n_obs=n_obs, n_antennas=k))
        details = {"gamma2": inp.gamma2(k), "n_obs": n_obs, "n_antennas": k}
        _add_pair(report, f"multi[{idx}]", fa_md_multi(inp, n_obs, k), est, details)
        try:
            literal = fa_md_multi(inp, n_obs, k, convention="determinant")
        except StatModelError as e:
            logger.warning("Determinant convention undefined for multi[%d]: %s", idx, e.message)
            continue
        _add_pair(report, f"multi[{idx}].determinant", literal, est, details, kind="info")


def _consistency_cases(report: VerificationReport, seeds) -> None:
    n_obs = 30
    inp = _input_for_gamma1(0.3, p_jam=0.5, gain_jw=1.0)
    single = simulate_single(McConfig(trials=report.trials, seed=next(seeds), input=inp, n_obs=n_obs))
    multi = simulate_multi(McConfig(trials=report.trials, seed=next(seeds), input=inp, n_obs=n_obs, n_antennas=1))
    for label, a, b in (("fa", single.fa_hat, multi.fa_hat), ("md", single.md_hat, multi.md_hat)):
        tol = report.z * math.sqrt(max(a * (1 - a) + b * (1 - b), 2.0 / report.trials) / report.trials)
        case = VerificationCase(
            name=f"multi_k1_vs_single.{label}", kind="montecarlo", closed_form=a, estimate=b, tolerance=tol
        )
        case.verdict = _mc_verdict(case.gap, tol, report.trials)
        report.cases.append(case)

    blind = SlotDetectionInput(p_s=0.0, p_jam=0.5, gain_sw=1.0, gain_jw=1.0, noise=1.0)
    for name, est in (
        ("blind.single", simulate_single(McConfig(trials=report.trials, seed=next(seeds), input=blind, n_obs=n_obs))),
        ("blind.multi", simulate_multi(
            McConfig(trials=report.trials, seed=next(seeds), input=blind, n_obs=n_obs, n_antennas=4))),
    ):
        tol = report.z * math.sqrt(0.5 / report.trials)
        case = VerificationCase(name=name, kind="montecarlo", closed_form=1.0, estimate=est.dep_hat, tolerance=tol)
        case.verdict = _mc_verdict(case.gap, tol, report.trials)
        report.cases.append(case)


def _kl_cases(report: VerificationReport) -> None:
    worst = 0.0
    worst_point: Dict[str, Any] = {}
    grid = [(1, 1), (10, 2), (30, 1), (30, 2), (30, 4), (30, 8), (50, 6), (100, 3), (7, 5), (200, 16)]
    for n_obs, k in grid:
        for gamma in np.logspace(-2, 1, 20):
            inp = _input_for_gamma2(float(gamma), k, p_jam=0.5, gain_jw=1.0)
            closed = kl_divergence(inp.gamma2(k), n_obs)
            dense = kl_matrix_oracle(inp, n_obs, k)
            rel = abs(dense - closed) / closed
            if rel > worst:
                worst, worst_point = rel, {"gamma2": float(gamma), "n_obs": n_obs, "n_antennas": k}
    report.cases.append(
        VerificationCase(
            name="kl_matrix_grid",
            kind="analytic",
            closed_form=0.0,
            estimate=worst,
            tolerance=1e-10,
            verdict="pass" if worst <= 1e-10 else "fail",
            details={"points": len(grid) * 20, "worst": worst_point},
        )
    )


def _quadrature_cases(report: VerificationReport) -> None:
    worst = 0.0
    for gamma in np.logspace(-2, 1, 20):
        worst = max(worst, abs(dep_quadrature(float(gamma), 30) - dep_single(float(gamma), 30)))
    report.cases.append(
        VerificationCase(
            name="dep_quadrature_grid",
            kind="analytic",
            closed_form=0.0,
            estimate=worst,
            tolerance=1e-9,
            verdict="pass" if worst <= 1e-9 else "fail",
            details={"points": 20, "n_obs": 30},
        )
    )


def _cap_cases(report: VerificationReport) -> None:
    eps, n_obs = 0.05, 30
    single = gamma_cap_single(eps, n_obs)
    multi = gamma_cap_multi(eps, n_obs)
    small_gamma = 2.0 * eps / math.sqrt(n_obs)
    checks = [
        ("cap_single.dep", 1.0 - eps, dep_single(single, n_obs), 1e-10, {"gamma_cap": single}),
        ("cap_multi.small_gamma", small_gamma, multi, 0.02 * small_gamma, {"gamma_cap": multi}),
        ("cap_multi.kl", 2.0 * eps * eps, kl_divergence(multi, n_obs), 1e-12, {"gamma_cap": multi}),
    ]
    for name, closed, value, tol, details in checks:
        report.cases.append(
            VerificationCase(
                name=name,
                kind="analytic",
                closed_form=closed,
                estimate=value,
                tolerance=tol,
                verdict="pass" if abs(value - closed) <= tol else "fail",
                details=details,
            )
        )


def run_battery(trials: int, seed: int = 42, z: float = 3.0) -> VerificationReport:
    """Every detection check: simulations, the dense KL grid, quadrature and the covert caps."""
    if trials < 1:
        raise DomainError("trials must be positive", trials=trials)
    report = VerificationReport(seed=seed, trials=trials, z=z)
    rng = np.random.default_rng(seed)
    seeds = iter(int(s) for s in rng.integers(0, 2**63, size=64))

    logger.info("Verification battery: %d trials per case, seed %d", trials, seed)
    _single_cases(report, rng, seeds)
    _multi_cases(report, rng, seeds)
    _consistency_cases(report, seeds)
    _kl_cases(report)
    _quadrature_cases(report)
    _cap_cases(report)

    for case in report.cases:
        if case.verdict == "fail":
            logger.warning(
                "FAIL %s: closed form %.6g, estimate %.6g, tolerance %.3g",
                case.name, case.closed_form, case.estimate, case.tolerance,
            )
        else:
            logger.debug("%s %s: gap %.3g (tolerance %.3g)", case.verdict, case.name, case.gap, case.tolerance)
    logger.info("Verification battery finished: %s", report.counts())
    return report
