"""Three-waveguide STIRAP model with optional absorption.

The waveguides are numbered 1 (target, left), 2 (central) and 3 (initial,
right). Light launched into waveguide 3 is carried to waveguide 1 by the
zero-energy dark state as the couplings ``v(z)`` and ``w(z)`` are swept along
the device length ``L``. Absorption is modelled by a ``-i*gamma`` entry on
one diagonal element of the Hamiltonian.

All functions here are closed forms. The numerical counterparts live in
:mod:`wgstirap.eigen`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import mpmath
import numpy as np


class Site(enum.IntEnum):
    """Waveguide carrying the absorption. The value is the 1-based index."""

    NONE = 0
    TARGET = 1
    CENTER = 2
    INITIAL = 3

    @classmethod
    def parse(cls, value) -> "Site":
        if isinstance(value, Site):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        return cls[str(value).strip().upper()]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Physical setup: coupling exponent ``a``, length ``L``, absorption ``gamma``
    on waveguide ``site``."""

    a: float
    L: float
    gamma: float = 0.0
    site: Site = Site.NONE

    def __post_init__(self):
        object.__setattr__(self, "site", Site.parse(self.site))
        for name in ("a", "L", "gamma"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ConfigError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.L <= 0:
            raise ConfigError(f"L must be positive, got {self.L}")
        if self.a < 0:
            raise ConfigError(f"a must be non-negative, got {self.a}")
        if self.gamma < 0:
            raise ConfigError(f"gamma must be non-negative (gain is not supported), got {self.gamma}")

    @property
    def absorbing(self) -> bool:
        return self.site != Site.NONE and self.gamma > 0

    def replace(self, **changes) -> "ModelConfig":
        fields = dict(a=self.a, L=self.L, gamma=self.gamma, site=self.site)
        fields.update(changes)
        return ModelConfig(**fields)


@dataclass(frozen=True)
class Spectrum:
    """Instantaneous eigensystem at ``z``.

    ``energies`` are ordered (E-, E0, E+) and ``vectors[j]`` is the eigenvector
    belonging to ``energies[j]``, c-normalized (``vectors[j] @ vectors[j] == 1``
    without conjugation).
    """

    z: complex
    energies: np.ndarray
    vectors: np.ndarray
    theta: complex
    omega: complex


@dataclass(frozen=True)
class Ep3Location:
    n: int
    z: complex


def couplings(z, cfg: ModelConfig):
    """Return ``(v, w)`` at ``z``; ``z`` may be complex or an array."""
    zc = np.asarray(z)
    v = np.exp(-cfg.a * (zc - cfg.L / 2) / cfg.L)
    w = 1.0 / v
    if np.ndim(z) == 0:
        return v[()], w[()]
    return v, w


def hamiltonian(z, cfg: ModelConfig) -> np.ndarray:
    v, w = couplings(z, cfg)
    H = np.zeros((3, 3), dtype=complex)
    H[0, 1] = H[1, 0] = v
    H[1, 2] = H[2, 1] = w
    if cfg.site != Site.NONE:
        k = int(cfg.site) - 1
        H[k, k] = -1j * cfg.gamma
    return H


def hamiltonian_derivative(z, cfg: ModelConfig) -> np.ndarray:
    """dH/dz; the absorption term is constant in z."""
    v, w = couplings(z, cfg)
    k = cfg.a / cfg.L
    dH = np.zeros((3, 3), dtype=complex)
    dH[0, 1] = dH[1, 0] = -k * v
    dH[1, 2] = dH[2, 1] = k * w
    return dH


def mixing_angle(z, cfg: ModelConfig):
    """Return ``(theta, omega)`` with tan(theta) = v/w and omega = sqrt(v^2 + w^2).

    For real z, theta = atan2(v, w) lies in (0, pi/2).
    """
    v, w = couplings(z, cfg)
    if np.iscomplexobj(v):
        omega = np.sqrt(v * v + w * w)
        theta = np.arctan(v / w)
        return theta, omega
    return np.arctan2(v, w), np.hypot(v, w)


def dark_state(z, cfg: ModelConfig) -> np.ndarray:
    theta, _ = mixing_angle(z, cfg)
    return np.array([np.cos(theta), 0.0, -np.sin(theta)])


def analytic_spectrum(z: float, cfg: ModelConfig) -> Spectrum:
    """Closed-form eigensystem of the absorption-free Hamiltonian at real ``z``."""
    if cfg.absorbing:
        raise ConfigError("closed-form spectrum requires gamma = 0 or site = NONE")
    if np.iscomplexobj(z) and np.imag(z) != 0:
        raise ConfigError("closed-form spectrum is for real z")
    z = float(np.real(z))
    theta, omega = mixing_angle(z, cfg)
    s, c = np.sin(theta), np.cos(theta)
    r = 1 / np.sqrt(2)
    vectors = np.array([
        [s * r, -r, c * r],
        [c, 0.0, -s],
        [s * r, r, c * r],
    ])
    return Spectrum(z=z, energies=np.array([-omega, 0.0, omega]), vectors=vectors,
                    theta=theta, omega=omega)


def perturbative_imag_shifts(z, cfg: ModelConfig):
    """First-order imaginary parts (Im E-, Im E0, Im E+) caused by the absorption.

    Real parts are unchanged at first order. ``site = NONE`` gives zeros.
    """
    v, w = couplings(z, cfg)
    om2 = v * v + w * w
    g = cfg.gamma
    if cfg.site == Site.TARGET:
        side, mid = -g * v * v / (2 * om2), -g * w * w / om2
    elif cfg.site == Site.INITIAL:
        side, mid = -g * w * w / (2 * om2), -g * v * v / om2
    elif cfg.site == Site.CENTER:
        side, mid = -g / 2 + 0 * om2, 0 * om2
    else:
        side, mid = 0 * om2, 0 * om2
    return side, mid, side


def perturbed_dark_state(z, cfg: ModelConfig) -> np.ndarray:
    """First-order dark state for target-waveguide absorption.

    Returned as printed, without re-normalization; its c-norm is 1 + O(gamma^2).
    """
    if cfg.site != Site.TARGET:
        raise ConfigError("perturbed dark state is defined for site = TARGET")
    v, w = couplings(z, cfg)
    theta, omega = mixing_angle(z, cfg)
    c, s = np.cos(theta), np.sin(theta)
    return np.array([c, 1j * cfg.gamma * c * s / omega, -s], dtype=complex)


def ep3_locations(cfg: ModelConfig, n_min: int = 0, n_max: int = 0) -> list[Ep3Location]:
    """Triple exceptional points of the absorption-free Hamiltonian in the complex z plane."""
    if cfg.a <= 0:
        raise ConfigError("exceptional points exist only for a > 0")
    locs = [Ep3Location(n, cfg.L * complex(0.5, (1 + 2 * n) * np.pi / (4 * cfg.a)))
            for n in range(n_min, n_max + 1)]
    return sorted(locs, key=lambda p: (abs(p.z.imag), p.n))


def nonadiabatic_coupling_analytic(z, cfg: ModelConfig):
    """Coupling strength sqrt(2) a / (L omega^2) between the dark and bright states."""
    v, w = couplings(z, cfg)
    return np.sqrt(2) * cfg.a / (cfg.L * (v * v + w * w))


def coalescence_residual(z, cfg: ModelConfig, dps: int = 40) -> float:
    """Largest pairwise eigenvalue gap of the absorption-free Hamiltonian at complex ``z``.

    The matrix is built and diagonalized in ``dps``-digit arithmetic. Near a
    triple degeneracy the gaps grow like the cube (or square) root of any
    perturbation, so double precision alone cannot resolve coalescence below
    ~1e-8. Pass an mpmath number (see :func:`ep3_location_mp`) to avoid
    rounding the location itself.
    """
    with mpmath.workdps(dps):
        zz = mpmath.mpc(z)
        half = mpmath.mpf(cfg.L) / 2
        v = mpmath.exp(-mpmath.mpf(cfg.a) * (zz - half) / mpmath.mpf(cfg.L))
        w = 1 / v
        H = mpmath.matrix([[0, v, 0], [v, 0, w], [0, w, 0]])
        E = mpmath.eig(H, left=False, right=False)
        return float(max(abs(E[i] - E[j]) for i in range(3) for j in range(i + 1, 3)))


def ep3_location_mp(cfg: ModelConfig, n: int, dps: int = 40):
    """High-precision EP3 position for use with :func:`coalescence_residual`."""
    if cfg.a <= 0:
        raise ConfigError("exceptional points exist only for a > 0")
    with mpmath.workdps(dps):
        return mpmath.mpf(cfg.L) * mpmath.mpc(0.5, (1 + 2 * n) * mpmath.pi / (4 * mpmath.mpf(cfg.a)))
