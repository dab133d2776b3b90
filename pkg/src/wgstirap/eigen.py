"""Exact eigensystems of 3x3 complex symmetric Hamiltonians.

Eigenvectors are normalized with the bilinear c-product ``u @ v`` (no complex
conjugation), which is the natural pairing of left and right eigenvectors
for a complex symmetric matrix. For real symmetric input it coincides with
the ordinary inner product.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import ModelConfig, Spectrum, hamiltonian, mixing_angle

MINUS, ZERO, PLUS = 0, 1, 2

EP_THRESHOLD = _kernels.EP_THRESHOLD
SYMMETRY_TOL = 1e-12
MAX_DOUBLINGS = 10


class EigenError(ArithmeticError):
    pass


class NearDefectiveError(EigenError):
    """An eigenvector is (nearly) self-orthogonal: the matrix is close to an exceptional point."""


class DegenerateError(EigenError):
    """A repeated eigenvalue with a multi-dimensional eigenspace; labels are not unique."""


class RefinementLimitError(EigenError):
    pass


def cproduct(u, v):
    """Bilinear product sum(u * v) without conjugation."""
    return np.sum(np.asarray(u) * np.asarray(v), axis=-1)


def _check_status(status, what="matrix"):
    if status == _kernels.NEAR_DEFECTIVE:
        raise NearDefectiveError(f"{what} is within {EP_THRESHOLD:g} of an exceptional point")
    if status == _kernels.DEGENERATE:
        raise DegenerateError(f"{what} has a degenerate eigenspace")


def eigensystem(H, z=None) -> Spectrum:
    """Diagonalize a complex symmetric 3x3 matrix.

    Eigenvalues come from the characteristic cubic (Cardano, one Newton
    polish per root), eigenvectors from cross products of the rows of
    ``H - E``. Pairs are sorted by real part, each vector is c-normalized and
    its largest component has positive real part.

    Raises
    ------
    ValueError
        If ``H`` is not 3x3 or not symmetric to 1e-12.
    NearDefectiveError
        If an eigenvector's c-norm is below ``EP_THRESHOLD`` before normalization.
    """
    H = np.asarray(H, dtype=complex)
    if H.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {H.shape}")
    asym = np.max(np.abs(H - H.T))
    if asym > SYMMETRY_TOL * max(1.0, np.max(np.abs(H))):
        raise ValueError(f"matrix is not symmetric (max |H - H^T| = {asym:.3g})")
    E = np.empty(3, dtype=complex)
    V = np.empty((3, 3), dtype=complex)
    status = _kernels.eig3(np.ascontiguousarray(H), E, V)
    _check_status(status)
    _kernels.sort_and_sign(E, V)
    return Spectrum(z=z, energies=E, vectors=V, theta=None, omega=None)


def instantaneous_frame(z: float, cfg: ModelConfig) -> Spectrum:
    """Exact eigensystem of the model at real ``z``, labeled (E-, E0, E+).

    Each exact eigenvector is matched to the absorption-free eigenvector it
    overlaps most and its sign is chosen so that the c-product with that
    reference is positive. The labels and signs are therefore smooth in ``z``
    and, for gamma = 0, identical to :func:`wgstirap.model.analytic_spectrum`.
    """
    E = np.empty(3, dtype=complex)
    V = np.empty((3, 3), dtype=complex)
    status = _kernels.model_frame(float(z), cfg.a, cfg.L, cfg.gamma, int(cfg.site), E, V)
    _check_status(status, f"H(z={z})")
    theta, omega = mixing_angle(float(z), cfg)
    return Spectrum(z=float(z), energies=E, vectors=V, theta=theta, omega=omega)


def frame_couplings(z: float, cfg: ModelConfig) -> np.ndarray:
    """Matrix ``C[j, k] = <phi_j | d phi_k/dz>`` in the instantaneous frame.

    Computed from dH/dz through ``phi_j . H' phi_k / (E_k - E_j)``; this holds
    exactly for c-normalized eigenvectors of a symmetric matrix.
    """
    spec = instantaneous_frame(z, cfg)
    C = np.empty((3, 3), dtype=complex)
    _kernels.frame_couplings(float(z), cfg.a, cfg.L, spec.energies, spec.vectors, C)
    return C


@dataclass(frozen=True)
class AlignedSpectrumPath:
    """Spectra along a z grid with labels and eigenvector signs continuous in z.

    ``energies[k, j]`` and ``vectors[k, j]`` belong to label j (E-, E0, E+) at ``zs[k]``.
    """

    cfg: ModelConfig
    zs: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray

    def spectrum(self, k: int) -> Spectrum:
        theta, omega = mixing_angle(float(self.zs[k]), self.cfg)
        return Spectrum(z=float(self.zs[k]), energies=self.energies[k],
                        vectors=self.vectors[k], theta=theta, omega=omega)


def _raw(z, cfg):
    H = hamiltonian(z, cfg)
    E = np.empty(3, dtype=complex)
    V = np.empty((3, 3), dtype=complex)
    _check_status(_kernels.eig3(H, E, V), f"H(z={z})")
    return E, V


def _continue(E_prev, V_prev, E, V):
    """Order (E, V) to follow (E_prev, V_prev); returns None if the energy
    continuity test fails."""
    overlap = np.abs(V_prev @ V.T)
    best, perm = -1.0, None
    for p in _kernels._PERMS:
        s = overlap[0, p[0]] + overlap[1, p[1]] + overlap[2, p[2]]
        if s > best:
            best, perm = s, p
    E = E[perm]
    V = V[perm]
    for j in range(3):
        own = abs(E[j] - E_prev[j])
        for i in range(3):
            if i != j and not own < abs(E[j] - E_prev[i]):
                return None
    signs = np.where(np.real(np.sum(V_prev * V, axis=1)) < 0, -1.0, 1.0)
    return E, V * signs[:, None]


def _step(cfg, z0, z1, E0, V0, depth):
    E, V = _raw(z1, cfg)
    nxt = _continue(E0, V0, E, V)
    if nxt is not None:
        return nxt
    if depth >= MAX_DOUBLINGS:
        raise RefinementLimitError(
            f"cannot establish label continuity between z={z0} and z={z1} "
            f"after {MAX_DOUBLINGS} interval halvings")
    zm = 0.5 * (z0 + z1)
    Em, Vm = _step(cfg, z0, zm, E0, V0, depth + 1)
    return _step(cfg, zm, z1, Em, Vm, depth + 1)


def align_path(cfg: ModelConfig, zs) -> AlignedSpectrumPath:
    """Follow the three eigenpairs along a monotone grid ``zs``.

    The first point is labeled like :func:`instantaneous_frame`; every later
    point is matched to its predecessor by eigenvector overlap, checked for
    energy continuity (intervals are halved up to ``MAX_DOUBLINGS`` times
    when the check fails) and sign-aligned so consecutive c-products of the
    same label have positive real part.
    """
    zs = np.asarray(zs, dtype=float)
    if zs.ndim != 1 or zs.size < 1:
        raise ValueError("zs must be a non-empty 1-D grid")
    d = np.diff(zs)
    if zs.size > 1 and not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("zs must be strictly monotone")
    if zs.min() < 0 or zs.max() > cfg.L:
        raise ValueError("zs must lie within [0, L]")
    first = instantaneous_frame(zs[0], cfg)
    energies = np.empty((zs.size, 3), dtype=complex)
    vectors = np.empty((zs.size, 3, 3), dtype=complex)
    energies[0], vectors[0] = first.energies, first.vectors
    for k in range(1, zs.size):
        energies[k], vectors[k] = _step(cfg, zs[k - 1], zs[k], energies[k - 1], vectors[k - 1], 0)
    return AlignedSpectrumPath(cfg=cfg, zs=zs, energies=energies, vectors=vectors)


def numeric_coupling(path: AlignedSpectrumPath, j: int, k: int, index: int) -> complex:
    """Finite-difference coupling ``<phi_j | d phi_k/dz>`` at ``path.zs[index]``.

    Central differences in the interior (second order, non-uniform grids
    allowed); first-order one-sided differences at the two ends.
    """
    zs, V = path.zs, path.vectors
    n = zs.size
    if n < 2:
        raise ValueError("need at least two grid points")
    if index < 0:
        index += n
    if 0 < index < n - 1:
        h1 = zs[index] - zs[index - 1]
        h2 = zs[index + 1] - zs[index]
        deriv = (h1 ** 2 * V[index + 1, k] - h2 ** 2 * V[index - 1, k]
                 + (h2 ** 2 - h1 ** 2) * V[index, k]) / (h1 * h2 * (h1 + h2))
    elif index == 0:
        deriv = (V[1, k] - V[0, k]) / (zs[1] - zs[0])
    else:
        deriv = (V[-1, k] - V[-2, k]) / (zs[-1] - zs[-2])
    return complex(cproduct(V[index, j], deriv))
