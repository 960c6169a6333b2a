"""Linear stability of equilibria and of the quadratic trap model.

The trap Hamiltonian (see :func:`hamgeom.models.trap`) linearizes to
``x'' = B y' - k1 x``, ``y'' = -B x' - k2 y``, ``z'' = -k3 z`` with
characteristic polynomial ``(l^4 + (k1 + k2 + B^2) l^2 + k1 k2)(l^2 + k3)``.
Its curvature tensor at any phase point is ``diag(k1 + B^2/4, k2 + B^2/4, k3)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dynamics
from .errors import NotEquilibriumError
from .models import HamiltonianModel, as_point

EQUILIBRIUM_TOL = 1e-10
REAL_PART_TOL = 1e-9
SEMISIMPLE_TOL = 1e-7
HARMONIC_TOL = 1e-12


@dataclass
class Linearization:
    matrix: np.ndarray
    eigenvalues: np.ndarray


def linearize(model: HamiltonianModel, equilibrium) -> Linearization:
    """Constant-coefficient Jacobi system ``X' = Omega Hess(H) X`` at an equilibrium.

    Raises:
        NotEquilibriumError: the phase velocity at the point exceeds 1e-10.
    """
    z = as_point(equilibrium).z.astype(float)
    vel, A = dynamics.flow_matrix(model, z)
    if np.max(np.abs(vel)) > EQUILIBRIUM_TOL:
        raise NotEquilibriumError(f"phase velocity {np.max(np.abs(vel)):.3g} at the point is not zero")
    return Linearization(A, np.linalg.eigvals(A))


def spectral_verdict(A, eigenvalues=None, eigenvectors=None):
    """``(stable, marginal)`` for a real flow matrix.

    Stable means every eigenvalue has ``|Re| <= 1e-9 * scale`` and every
    cluster of nearly equal eigenvalues has a full set of eigenvectors
    (numerical rank at relative tolerance 1e-7). ``marginal`` flags repeated
    (resonant) or zero eigenvalues, where the verdict is sensitive to
    perturbations.
    """
    if eigenvalues is None:
        eigenvalues, eigenvectors = np.linalg.eig(A)
    lam = np.asarray(eigenvalues)
    scale = max(1.0, float(np.max(np.abs(lam))))
    if np.any(np.abs(lam.real) > REAL_PART_TOL * scale):
        return False, False
    if eigenvectors is None:
        eigenvalues, eigenvectors = np.linalg.eig(A)
        lam = eigenvalues
    marginal = bool(np.any(np.abs(lam) <= SEMISIMPLE_TOL * scale))
    used = np.zeros(lam.size, dtype=bool)
    for i in range(lam.size):
        if used[i]:
            continue
        cluster = np.abs(lam - lam[i]) <= np.sqrt(SEMISIMPLE_TOL) * scale
        used |= cluster
        m = int(cluster.sum())
        if m == 1:
            continue
        marginal = True
        V = eigenvectors[:, cluster]
        V = V / np.linalg.norm(V, axis=0)
        sv = np.linalg.svd(V, compute_uv=False)
        if int(np.sum(sv > SEMISIMPLE_TOL * sv[0])) < m:
            return False, True
    return True, marginal


def trap_flow_matrix(k1, k2, k3, B):
    """Flow matrix of the trap at the origin; broadcasts over the parameters."""
    k1, k2, k3, B = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (k1, k2, k3, B)))
    A = np.zeros(k1.shape + (6, 6))
    h = 0.5 * B
    # dq/dt = H_pq q + p
    A[..., 0, 1] = h
    A[..., 1, 0] = -h
    A[..., 0, 3] = A[..., 1, 4] = A[..., 2, 5] = 1.0
    # dp/dt = -H_qq q - H_qp p
    A[..., 3, 0] = -(h * h + k1)
    A[..., 4, 1] = -(h * h + k2)
    A[..., 5, 2] = -k3
    A[..., 3, 4] = h
    A[..., 4, 3] = -h
    return A


def trap_characteristic_roots(k1, k2, k3, B):
    """Roots of ``(l^4 + (k1 + k2 + B^2) l^2 + k1 k2)(l^2 + k3)``."""
    quartic = np.array([1.0, 0.0, k1 + k2 + B * B, 0.0, k1 * k2])
    return np.roots(np.polymul(quartic, [1.0, 0.0, k3]))


def trap_curvature_eigs(k1, k2, k3, B):
    return np.array([k1 + 0.25 * B * B, k2 + 0.25 * B * B, k3])


def trap_sufficient_criterion(k1, k2, k3, B):
    """``k3 > 0``, ``k1 < 0``, ``k2 < 0`` and ``B^2/2 > sqrt(k1 k2) + (|k1| + |k2|)/2``."""
    k1, k2, k3, B = (np.asarray(x, dtype=float) for x in (k1, k2, k3, B))
    signs = (k3 > 0) & (k1 < 0) & (k2 < 0)
    with np.errstate(invalid="ignore"):
        ineq = 0.5 * B * B > np.sqrt(np.abs(k1 * k2)) + 0.5 * (np.abs(k1) + np.abs(k2))
    return signs & ineq


@dataclass
class StabilityReport:
    k: tuple
    B: float
    eigenvalues: np.ndarray
    spectrally_stable: bool
    marginal: bool
    curvature_eigs: np.ndarray
    curvature_positive: bool
    sufficient_criterion_met: bool
    harmonic: bool

    def as_dict(self):
        return {
            "k": [float(x) for x in self.k],
            "B": float(self.B),
            "eigenvalues": [[float(z.real), float(z.imag)] for z in _sorted(self.eigenvalues)],
            "spectrally_stable": bool(self.spectrally_stable),
            "marginal": bool(self.marginal),
            "curvature_eigs": [float(x) for x in self.curvature_eigs],
            "curvature_positive": bool(self.curvature_positive),
            "sufficient_criterion_met": bool(self.sufficient_criterion_met),
            "harmonic": bool(self.harmonic),
        }


def _sorted(lam):
    lam = np.round(np.asarray(lam), 12) + 0.0
    return sorted(lam, key=lambda z: (z.real, z.imag))


def assess(k1: float, k2: float, k3: float, B: float) -> StabilityReport:
    """Spectral stability and curvature diagnostics for the trap model."""
    A = trap_flow_matrix(k1, k2, k3, B)
    lam, vec = np.linalg.eig(A)
    stable, marginal = spectral_verdict(A, lam, vec)
    ce = trap_curvature_eigs(k1, k2, k3, B)
    return StabilityReport((k1, k2, k3), B, lam, stable, marginal, ce, bool(np.all(ce > 0)),
                           bool(trap_sufficient_criterion(k1, k2, k3, B)),
                           abs(k1 + k2 + k3) <= HARMONIC_TOL)


@dataclass
class GridSweep:
    """Flags over a parameter grid; every array has shape (N,)."""

    k1: np.ndarray
    k2: np.ndarray
    k3: np.ndarray
    B: np.ndarray
    spectrally_stable: np.ndarray
    marginal: np.ndarray
    curvature_positive: np.ndarray
    sufficient_criterion_met: np.ndarray

    def violations(self):
        """Indices violating each implication."""
        s = self.spectrally_stable
        return {
            "curvature_positive=>stable": np.flatnonzero(self.curvature_positive & ~s),
            "k3<0=>unstable": np.flatnonzero((self.k3 < 0) & s),
            "sufficient_criterion=>stable": np.flatnonzero(self.sufficient_criterion_met & ~s),
        }


def sweep(k1s, k2s, k3s, Bs) -> GridSweep:
    """Assess every combination of the given parameter values (vectorized)."""
    K1, K2, K3, BB = (x.ravel() for x in np.meshgrid(k1s, k2s, k3s, Bs, indexing="ij"))
    A = trap_flow_matrix(K1, K2, K3, BB)
    lam, vec = np.linalg.eig(A)
    scale = np.maximum(1.0, np.abs(lam).max(axis=1))
    imag_only = np.all(np.abs(lam.real) <= REAL_PART_TOL * scale[:, None], axis=1)
    gaps = np.where(np.eye(6, dtype=bool), np.inf, np.abs(lam[:, :, None] - lam[:, None, :]))
    close = np.any(gaps <= np.sqrt(SEMISIMPLE_TOL) * scale[:, None, None], axis=(1, 2))
    close |= np.any(np.abs(lam) <= SEMISIMPLE_TOL * scale[:, None], axis=1)
    stable = imag_only.copy()
    marginal = np.zeros_like(stable)
    for i in np.flatnonzero(imag_only & close):
        stable[i], marginal[i] = spectral_verdict(A[i], lam[i], vec[i])
    ce = np.stack([K1 + 0.25 * BB * BB, K2 + 0.25 * BB * BB, K3], axis=1)
    return GridSweep(K1, K2, K3, BB, stable, marginal, np.all(ce > 0, axis=1),
                     trap_sufficient_criterion(K1, K2, K3, BB))
