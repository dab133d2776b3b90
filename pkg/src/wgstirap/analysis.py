"""Scalar diagnostics, analytic threshold estimates and threshold extraction.

Probabilities
    :func:`transfer_probability` (bare amplitudes), :func:`transfer_probability_adiabatic`
    and :func:`nonadiabatic_probability` (adiabatic coefficients).
Estimates
    Landau-Zener decay of the nonadiabatic probability and the critical
    absorption rates for target- and initial-waveguide absorption.
Extraction
    First 0.5 crossing of a monotone cubic interpolant of P(gamma).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .model import ConfigError, ModelConfig, Site
from .propagate import IntegratorSettings, integrate_adiabatic_exact, integrate_reduced

GAMMA_3_4 = math.gamma(0.75)
NORM_FLOOR = 1e-300
CROSSING_LEVEL = 0.5
WIDTH_LEVELS = (0.9, 0.1)


class ZeroNormError(ArithmeticError):
    """Final state has (numerically) zero norm, so P is undefined."""


class NoCrossingError(ValueError):
    pass


class ThresholdRegimeError(ValueError):
    """Parameters lie outside the range where a positive threshold exists."""


class Method(enum.Enum):
    LZ_ANALYTIC = "lz"
    SEMI_ANALYTIC = "semianalytic"
    SWEEP_EXTRACTION = "sweep"
    INITIAL_SITE_ANALYTIC = "initial"


@dataclass(frozen=True)
class ThresholdEstimate:
    gamma_cr: float
    width: float
    method: Method
    inputs: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return dict(gamma_cr=self.gamma_cr, width=self.width, method=self.method.value,
                    inputs=dict(self.inputs))


# -- probabilities -----------------------------------------------------------

def _norm2(x):
    n2 = float(np.sum(np.abs(x) ** 2))
    if not n2 > NORM_FLOOR:
        raise ZeroNormError(f"squared norm {n2:.3g} is below {NORM_FLOOR:g}")
    return n2


def transfer_probability(final) -> float:
    """P = |c1|^2 / sum |cn|^2 for a bare-basis state."""
    n = np.abs(np.asarray(final, dtype=complex)) ** 2
    # same squares in numerator and denominator keep P inside [0, 1]
    _norm2(np.sqrt(n))
    return float(n[0] / (n[0] + n[1] + n[2]))


def transfer_probability_adiabatic(coeffs) -> float:
    """P = |a0|^2 / (|a0|^2 + 2|a+-|^2), with |a+-|^2 the mean of |a+|^2 and |a-|^2."""
    am, a0, ap = np.abs(np.asarray(coeffs, dtype=complex)) ** 2
    _norm2(np.asarray(coeffs))
    return float(a0 / (a0 + am + ap))


def nonadiabatic_probability(coeffs, convention: str = "per_state") -> float:
    """Population leaked into the bright states.

    ``"per_state"`` returns (|a+|^2 + |a-|^2)/2, the quantity with
    |a+-(L)| ~ sqrt(P_nonad) and |a0|^2 = 1 - 2 P_nonad; ``"summed"`` returns
    |a+|^2 + |a-|^2.
    """
    am, _, ap = np.abs(np.asarray(coeffs, dtype=complex)) ** 2
    if convention == "per_state":
        return float(0.5 * (am + ap))
    if convention == "summed":
        return float(am + ap)
    raise ValueError(f"unknown convention {convention!r}")


# -- Landau-Zener ------------------------------------------------------------

def lz_exponent(a: float) -> float:
    """Decay constant 2 Gamma(3/4)^2 / (a sqrt(pi)) of the Landau-Zener estimate."""
    if a <= 0:
        raise ConfigError("Landau-Zener estimate needs a > 0")
    return 2.0 * GAMMA_3_4 ** 2 / (a * math.sqrt(math.pi))


def lz_estimate(a: float, L: float) -> float:
    """exp(-lz_exponent(a) L)."""
    return math.exp(-lz_exponent(a) * L)


def lz_estimate_quadrature(a: float, L: float) -> float:
    """Same estimate from the gap integral to the nearest exceptional point.

    exp(-2 int_0^{Im z0} sqrt(2 cos(2 a xi / L)) dxi), Im z0 = pi L / (4a).
    After t = 2 a xi / L the integrand vanishes like a square root at
    t = pi/2, so quad is given that factor as an algebraic endpoint weight.
    """
    if a <= 0:
        raise ConfigError("Landau-Zener estimate needs a > 0")
    if L == 0:
        return 1.0
    # sqrt(cos t) = sqrt(pi/2 - t) * g(t) with g smooth on [0, pi/2]
    def g(t):
        s = math.pi / 2 - t
        return math.sqrt(2 * math.cos(t) / s) if s > 1e-12 else math.sqrt(2.0)

    val, _ = quad(g, 0.0, math.pi / 2, weight="alg", wvar=(0.0, 0.5), epsabs=0, epsrel=1e-13)
    return math.exp(-2.0 * L / (2 * a) * val)


# -- critical absorption -----------------------------------------------------

def gamma_cr_from_pnonad(p_nonad: float, L: float, method: Method = Method.SEMI_ANALYTIC,
                         **inputs) -> ThresholdEstimate:
    """gamma_cr = ln(1/(2 P_nonad) - 1) / L with width 2/L."""
    if not 0 < p_nonad < 0.5:
        raise ThresholdRegimeError(f"P_nonad must lie in (0, 1/2) for a threshold, got {p_nonad}")
    if L <= 0:
        raise ConfigError("L must be positive")
    g = math.log(1.0 / (2.0 * p_nonad) - 1.0) / L
    return ThresholdEstimate(g, 2.0 / L, method, dict(L=L, p_nonad=p_nonad, **inputs))


def gamma_cr_lz(a: float, L: float) -> ThresholdEstimate:
    """Landau-Zener threshold; ``inputs['asymptote']`` holds the large-L form."""
    k = lz_exponent(a)
    if L <= 0:
        raise ConfigError("L must be positive")
    if k * L <= math.log(4.0):
        raise ThresholdRegimeError(
            f"device too short: exp({k * L:.4g})/2 - 1 <= 1 gives no positive threshold")
    # ln(e^{kL}/2 - 1) = kL - ln 2 + ln(1 - 2 e^{-kL}), stable for large L
    g = (k * L - math.log(2.0) + math.log1p(-2.0 * math.exp(-k * L))) / L
    return ThresholdEstimate(g, 2.0 / L, Method.LZ_ANALYTIC,
                             dict(a=a, L=L, p_nonad=math.exp(-k * L),
                                  asymptote=k - math.log(2.0) / L))


def gamma_cr_initial(a: float, L: float) -> ThresholdEstimate:
    """(4/L) ln(L / (2 a e^{-3a/2})) for absorption in the initial waveguide."""
    if a <= 0 or L <= 0:
        raise ConfigError("need a > 0 and L > 0")
    arg = L / (2 * a * math.exp(-1.5 * a))
    if arg <= 1:
        raise ThresholdRegimeError(
            f"L = {L} is below 2 a e^(-3a/2) = {2 * a * math.exp(-1.5 * a):.4g}; no positive threshold")
    return ThresholdEstimate(4.0 / L * math.log(arg), 2.0 / L, Method.INITIAL_SITE_ANALYTIC,
                             dict(a=a, L=L))


def measure_pnonad(cfg: ModelConfig, frame: str = "exact",
                   settings: IntegratorSettings | None = None) -> float:
    """Per-state nonadiabatic probability at z = L from a0(0) = 1."""
    if frame == "exact":
        traj = integrate_adiabatic_exact(cfg, settings=settings, zs=np.array([0.0, cfg.L]))
    elif frame == "reduced":
        traj = integrate_reduced(cfg, settings=settings, zs=np.array([0.0, cfg.L]))
    else:
        raise ValueError(f"frame must be 'exact' or 'reduced', got {frame!r}")
    return nonadiabatic_probability(traj.final_coeffs)


def gamma_cr_semianalytic(a: float, L: float, measure_gamma: float = 0.2,
                          site: Site = Site.TARGET, frame: str = "exact",
                          settings: IntegratorSettings | None = None) -> ThresholdEstimate:
    """Threshold from P_nonad measured with absorption ``measure_gamma``.

    The exact adiabatic frame is the default because the reduced model
    neglects O(gamma) corrections to the eigenvectors, which change P_nonad
    at gamma = 0.2 by a factor of about two.
    """
    cfg = ModelConfig(a, L, measure_gamma, site)
    p = measure_pnonad(cfg, frame, settings)
    return gamma_cr_from_pnonad(p, L, Method.SEMI_ANALYTIC, a=a, measure_gamma=measure_gamma,
                                frame=frame)


# -- extraction from sampled P(gamma) ------------------------------------------

def _level_crossings(f, gammas, P, level, lo, hi):
    """All roots of f(g) = level on grid intervals inside [lo, hi]."""
    roots = []
    for i in range(len(gammas) - 1):
        g0, g1 = gammas[i], gammas[i + 1]
        if g1 < lo or g0 > hi:
            continue
        p0, p1 = P[i] - level, P[i + 1] - level
        if p0 == 0:
            roots.append(g0)
        elif p0 * p1 < 0:
            roots.append(brentq(lambda g: f(g) - level, g0, g1, xtol=1e-14))
    if P[-1] == level and gammas[-1] <= hi:
        roots.append(gammas[-1])
    return roots


def threshold_from_column(gammas, P, **inputs) -> ThresholdEstimate:
    """Extract gamma_cr and width from P sampled on an increasing gamma grid.

    gamma_cr is the first point, scanning up from the smallest gamma, where
    the monotone cubic (PCHIP) interpolant drops below 0.5. The width is
    gamma(P = 0.1) - gamma(P = 0.9): the last 0.9 crossing before gamma_cr
    and the first 0.1 crossing after it, before P climbs back above 0.5.
    It is NaN when P does not reach both levels on that stretch.
    """
    gammas = np.asarray(gammas, dtype=float)
    P = np.asarray(P, dtype=float)
    if gammas.ndim != 1 or gammas.shape != P.shape or gammas.size < 2:
        raise ValueError("gammas and P must be 1-D arrays of equal length >= 2")
    if not np.all(np.diff(gammas) > 0):
        raise ValueError("gamma grid must be strictly increasing")
    if not np.all(np.isfinite(P)):
        raise ValueError("P column has holes")
    if P[0] < CROSSING_LEVEL:
        raise NoCrossingError("P starts below 0.5; there is no adiabatic region to leave")
    f = PchipInterpolator(gammas, P)
    below = np.nonzero(P < CROSSING_LEVEL)[0]
    if below.size == 0:
        raise NoCrossingError(f"P stays above 0.5 up to gamma = {gammas[-1]:g}")
    i = below[0]
    g_cr = brentq(lambda g: f(g) - CROSSING_LEVEL, gammas[i - 1], gammas[i], xtol=1e-14)
    # stretch on which P stays below 0.5 after the crossing
    back = np.nonzero(P[i:] >= CROSSING_LEVEL)[0]
    end = gammas[i + back[0]] if back.size else gammas[-1]
    hi_roots = _level_crossings(f, gammas, P, WIDTH_LEVELS[0], gammas[0], g_cr)
    lo_roots = _level_crossings(f, gammas, P, WIDTH_LEVELS[1], g_cr, end)
    g_hi = max(hi_roots) if hi_roots else math.nan
    g_lo = min(lo_roots) if lo_roots else math.nan
    return ThresholdEstimate(float(g_cr), float(g_lo - g_hi), Method.SWEEP_EXTRACTION,
                             dict(inputs, gamma_p09=g_hi, gamma_p01=g_lo))


def threshold_from_sweep(diagram, L: float, a_index: int = 0) -> ThresholdEstimate:
    """Threshold of a phase diagram at device length ``L``.

    If ``L`` is a grid value its column is used directly; otherwise the
    thresholds of the two neighbouring columns are interpolated linearly in L.
    """
    Ls = diagram.Ls
    P = diagram.P[a_index]
    a = float(diagram.spec.a_values[a_index])
    if not Ls[0] - 1e-12 * abs(Ls[0]) <= L <= Ls[-1] + 1e-12 * abs(Ls[-1]):
        raise ValueError(f"L = {L} is outside the sweep range [{Ls[0]}, {Ls[-1]}]")
    hit = np.nonzero(np.isclose(Ls, L, rtol=1e-12, atol=0))[0]
    if hit.size:
        li = int(hit[0])
        return threshold_from_column(diagram.gammas, P[li], a=a, L=float(Ls[li]))
    j = int(np.searchsorted(Ls, L))
    lo = threshold_from_column(diagram.gammas, P[j - 1], a=a, L=float(Ls[j - 1]))
    hi = threshold_from_column(diagram.gammas, P[j], a=a, L=float(Ls[j]))
    t = (L - Ls[j - 1]) / (Ls[j] - Ls[j - 1])
    return ThresholdEstimate((1 - t) * lo.gamma_cr + t * hi.gamma_cr,
                             (1 - t) * lo.width + t * hi.width, Method.SWEEP_EXTRACTION,
                             dict(a=a, L=float(L), interpolated_between=(float(Ls[j - 1]), float(Ls[j]))))
