"""Propagation along the device: bare basis, exact adiabatic frame, reduced models.

All integrations use the compiled Dormand-Prince 5(4) driver in
:mod:`wgstirap._kernels` with PI step-size control and quartic dense output
on the requested sample grid.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .eigen import NearDefectiveError, instantaneous_frame
from .model import ConfigError, ModelConfig, Site, analytic_spectrum, couplings


class StepFailureError(RuntimeError):
    pass


class Variant(enum.IntEnum):
    """Reduced adiabatic-frame models: Hermitian eigenvectors plus first-order decay rates."""

    HERMITIAN = _kernels.VARIANT_HERMITIAN
    TARGET_ABSORPTION = _kernels.VARIANT_TARGET
    INITIAL_ABSORPTION = _kernels.VARIANT_INITIAL

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, Variant):
            return value
        key = str(value).strip().upper()
        aliases = {"TARGET": "TARGET_ABSORPTION", "INITIAL": "INITIAL_ABSORPTION", "NONE": "HERMITIAN"}
        return cls[aliases.get(key, key)]

    @classmethod
    def for_site(cls, cfg: ModelConfig) -> "Variant":
        if cfg.site == Site.TARGET:
            return cls.TARGET_ABSORPTION
        if cfg.site == Site.INITIAL:
            return cls.INITIAL_ABSORPTION
        if cfg.site == Site.NONE or cfg.gamma == 0:
            return cls.HERMITIAN
        raise ConfigError("no reduced model for central-waveguide absorption")


@dataclass(frozen=True)
class IntegratorSettings:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_step: float = 0.1
    sample_count: int = 201

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol"):
            tol = getattr(self, name)
            if not 1e-14 <= tol <= 1e-3:
                raise ConfigError(f"{name} must lie in [1e-14, 1e-3], got {tol}")
        if not 0 < self.max_step <= 1:
            raise ConfigError(f"max_step is a fraction of L in (0, 1], got {self.max_step}")
        if self.sample_count < 2:
            raise ConfigError("sample_count must be at least 2")

    def replace(self, **changes) -> "IntegratorSettings":
        fields = dict(rel_tol=self.rel_tol, abs_tol=self.abs_tol,
                      max_step=self.max_step, sample_count=self.sample_count)
        fields.update(changes)
        return IntegratorSettings(**fields)


@dataclass
class Trajectory:
    """Samples of a propagation.

    ``states[k]`` is the bare-basis amplitude vector (c1, c2, c3) at ``zs[k]``;
    ``coeffs[k]`` holds (a-, a0, a+) in the adiabatic frame when available.
    """

    cfg: ModelConfig
    frame: str
    zs: np.ndarray
    states: np.ndarray | None = None
    coeffs: np.ndarray | None = None
    stats: dict = field(default_factory=dict)

    @property
    def norms(self) -> np.ndarray:
        return np.sum(np.abs(self.states) ** 2, axis=1)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_coeffs(self) -> np.ndarray:
        return self.coeffs[-1]


def sample_grid(cfg: ModelConfig, settings: IntegratorSettings) -> np.ndarray:
    zs = np.linspace(0.0, cfg.L, settings.sample_count)
    zs[-1] = cfg.L
    return zs


def _run(mode, selector, cfg, y0, zs, settings):
    p = np.array([cfg.a, cfg.L, cfg.gamma, float(selector)])
    out = np.empty((zs.size, 3), dtype=complex)
    status, accepted, rejected, nfev = _kernels.dopri5(
        mode, p, np.asarray(y0, dtype=complex), 0.0, cfg.L, zs,
        settings.rel_tol, settings.abs_tol, settings.max_step * cfg.L,
        1e-12 * cfg.L, 50_000_000, out)
    stats = dict(accepted=int(accepted), rejected=int(rejected), nfev=int(nfev))
    if status == _kernels.STEP_UNDERFLOW:
        raise StepFailureError(f"step size fell below 1e-12 L after {accepted} steps")
    if status == _kernels.TOO_MANY_STEPS:
        raise StepFailureError(f"step limit reached after {accepted} accepted steps")
    if status == _kernels.NEAR_DEFECTIVE:
        raise NearDefectiveError("adiabatic frame approached an exceptional point on the real axis")
    return out, stats


def initial_state(cfg: ModelConfig, kind="dark") -> np.ndarray:
    """Launch state for the bare equation.

    ``"dark"`` is the exact instantaneous dark state at z = 0 (so that
    a0(0) = 1, a+-(0) = 0); ``"basis3"`` is waveguide 3 alone. An explicit
    3-vector is passed through.
    """
    if isinstance(kind, str):
        if kind == "dark":
            return instantaneous_frame(0.0, cfg).vectors[1].copy()
        if kind == "basis3":
            return np.array([0, 0, 1], dtype=complex)
        raise ConfigError(f"unknown initial state {kind!r}; expected 'dark' or 'basis3'")
    psi = np.asarray(kind, dtype=complex)
    if psi.shape != (3,) or not np.any(psi):
        raise ConfigError("initial state must be a nonzero 3-vector")
    return psi


def integrate_bare(cfg: ModelConfig, initial="dark", settings: IntegratorSettings | None = None,
                   zs=None) -> Trajectory:
    """Solve i dpsi/dz = H(z) psi from 0 to L."""
    settings = settings or IntegratorSettings()
    psi0 = initial_state(cfg, initial)
    zs = sample_grid(cfg, settings) if zs is None else np.asarray(zs, dtype=float)
    states, stats = _run(_kernels.MODE_BARE, int(cfg.site), cfg, psi0, zs, settings)
    return Trajectory(cfg=cfg, frame="bare", zs=zs, states=states, stats=stats)


def _reconstruct(cfg, zs, coeffs, vectors_at):
    states = np.empty_like(coeffs)
    for k, z in enumerate(zs):
        states[k] = coeffs[k] @ vectors_at(z)
    return states


def integrate_adiabatic_exact(cfg: ModelConfig, initial_coeffs=(0, 1, 0),
                              settings: IntegratorSettings | None = None, zs=None) -> Trajectory:
    """Integrate da_j/dz = -i E_j a_j - sum_k C_jk a_k in the exact instantaneous frame.

    Energies and eigenvectors come from :func:`wgstirap.eigen.instantaneous_frame`
    at every stage point. Bare states are reconstructed as sum_j a_j phi_j.
    """
    settings = settings or IntegratorSettings()
    zs = sample_grid(cfg, settings) if zs is None else np.asarray(zs, dtype=float)
    coeffs, stats = _run(_kernels.MODE_EXACT_FRAME, int(cfg.site), cfg, initial_coeffs, zs, settings)
    states = _reconstruct(cfg, zs, coeffs, lambda z: instantaneous_frame(z, cfg).vectors)
    return Trajectory(cfg=cfg, frame="adiabatic", zs=zs, states=states, coeffs=coeffs, stats=stats)


def reduced_vectors(z, cfg: ModelConfig) -> np.ndarray:
    """Frame in which the reduced models are written.

    The printed reduced equations correspond to the absorption-free
    eigenvectors with phi+- multiplied by -1 relative to the closed form.
    """
    V = analytic_spectrum(z, cfg.replace(gamma=0.0)).vectors.astype(complex)
    V[0] *= -1
    V[2] *= -1
    return V


def integrate_reduced(cfg: ModelConfig, variant=None, settings: IntegratorSettings | None = None,
                      initial_coeffs=(0, 1, 0), zs=None) -> Trajectory:
    """Integrate one of the reduced 3x3 adiabatic-frame models.

    ``variant`` defaults to the one matching ``cfg.site``; a mismatch raises
    :class:`ConfigError`.
    """
    settings = settings or IntegratorSettings()
    expected = Variant.for_site(cfg)
    variant = expected if variant is None else Variant.parse(variant)
    if variant != expected and not (variant == Variant.HERMITIAN and cfg.gamma == 0):
        raise ConfigError(f"variant {variant.name} does not match absorption site {cfg.site.name}")
    zs = sample_grid(cfg, settings) if zs is None else np.asarray(zs, dtype=float)
    coeffs, stats = _run(_kernels.MODE_REDUCED, int(variant), cfg, initial_coeffs, zs, settings)
    states = _reconstruct(cfg, zs, coeffs, lambda z: reduced_vectors(z, cfg))
    return Trajectory(cfg=cfg, frame=f"reduced:{variant.name.lower()}", zs=zs,
                      states=states, coeffs=coeffs, stats=stats)


def project_adiabatic(traj: Trajectory, cfg: ModelConfig | None = None) -> Trajectory:
    """Fill ``coeffs`` with a_j(z) = phi_j(z) . psi(z) in the exact instantaneous frame."""
    cfg = cfg or traj.cfg
    coeffs = np.empty_like(traj.states)
    for k, z in enumerate(traj.zs):
        coeffs[k] = instantaneous_frame(z, cfg).vectors @ traj.states[k]
    traj.coeffs = coeffs
    return traj


@dataclass(frozen=True)
class InitialDecay:
    a0: complex
    a_plus: complex
    a_minus: complex
    modulus: float
    asymptote: float


def closed_form_initial_decay(cfg: ModelConfig, z) -> InitialDecay:
    """Small-z solution of the reduced model with absorption in the initial waveguide.

    Valid for z << L and e^{-2a} << 1, where omega ~ e^{a/2} and the dark
    state simply decays at rate gamma while feeding the bright states.
    """
    if cfg.site != Site.INITIAL:
        raise ConfigError("closed form applies to absorption in the initial waveguide")
    a, L, g = cfg.a, cfg.L, cfg.gamma
    drive = a * np.exp(-a) * np.sqrt(2) / L
    osc = np.exp(a / 2)
    a0 = np.exp(-g * z)

    def bright(sign):
        lam = sign * 1j * osc - g
        return -drive / (lam) * np.exp(-sign * 1j * osc * z) * (1 - np.exp(lam * z))

    modulus = drive / np.sqrt(g * g + np.exp(a)) * np.sqrt(
        np.maximum(1 - 2 * np.cos(osc * z) * np.exp(-g * z) + np.exp(-2 * g * z), 0.0))
    asymptote = drive / np.sqrt(g * g + np.exp(a))
    return InitialDecay(a0=a0, a_plus=bright(1), a_minus=bright(-1), modulus=modulus, asymptote=asymptote)


def coupling_check(z, cfg: ModelConfig):
    """v(z) w(z); identically one. Used by tests of the coupling profile."""
    v, w = couplings(z, cfg)
    return v * w
