"""Hamilton's equations, Jacobi fields and the second variation of the action.

Phase states are flat vectors ``z = (q_1..q_n, p_1..p_n)``. Jacobi fields
``(xi, pi)`` solve the linearized flow ``X' = Omega Hess(H) X`` with
``Omega = [[0, I], [-I, 0]]``, i.e.::

    xi^i' = H^i_j xi^j + H^ij pi_j
    pi_i' = -H_ij xi^j - H^j_i pi_j
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from . import geometry
from .errors import GridMismatchError, StepFailure
from .models import HamiltonianModel, PhasePoint, as_point, hessian_from_jet

ENERGY_TOL = 1e-9


def phase_velocity(model: HamiltonianModel, z):
    """``dz/dt = (dH/dp, -dH/dq)``."""
    n = model.n
    j = model.jet(PhasePoint.from_z(z), 1)
    g = j.coeffs[..., 1:]
    return np.concatenate([g[..., n:], -g[..., :n]], axis=-1)


def flow_matrix(model: HamiltonianModel, z):
    """Linearized flow matrix ``Omega Hess(H)`` at ``z`` (2n x 2n)."""
    n = model.n
    _, grad, hess = hessian_from_jet(model.jet(PhasePoint.from_z(z), 2))
    A = np.empty(hess.shape)
    A[..., :n, :] = hess[..., n:, :]
    A[..., n:, :] = -hess[..., :n, :]
    vel = np.concatenate([grad[..., n:], -grad[..., :n]], axis=-1)
    return vel, A


@dataclass
class Trajectory:
    """Discretized orbit with a dense interpolant and an energy log."""

    model: HamiltonianModel
    t: np.ndarray
    states: np.ndarray
    interpolant: Callable = field(repr=False)
    energy: np.ndarray = field(repr=False, default=None)
    method: str = "dop853"
    _cache: dict = field(repr=False, default_factory=dict)

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def q(self):
        return self.states[:, : self.n]

    @property
    def p(self):
        return self.states[:, self.n:]

    @property
    def T(self) -> float:
        return float(self.t[-1] - self.t[0])

    def __call__(self, t):
        """Interpolated states, shape ``np.shape(t) + (2n,)``."""
        t = np.asarray(t, dtype=float)
        out = np.asarray(self.interpolant(t.ravel()))
        return out.T.reshape(t.shape + (2 * self.n,))

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy - self.energy[0])))

    def quadrature_nodes(self, nodes_per_panel: int = 8, min_panels: int = 8):
        """Gauss-Legendre nodes and weights on panels tied to the step grid."""
        key = ("gl", nodes_per_panel, min_panels)
        if key not in self._cache:
            edges = np.asarray(self.t, dtype=float)
            if edges.size - 1 < min_panels:
                k = int(np.ceil(min_panels / (edges.size - 1)))
                edges = np.concatenate(
                    [np.linspace(a, b, k + 1)[:-1] for a, b in zip(edges[:-1], edges[1:])]
                    + [edges[-1:]])
            x, w = np.polynomial.legendre.leggauss(nodes_per_panel)
            a, b = edges[:-1, None], edges[1:, None]
            tn = 0.5 * (b - a) * x + 0.5 * (b + a)
            wn = 0.5 * (b - a) * w
            self._cache[key] = (tn.ravel(), wn.ravel())
        return self._cache[key]


def _check_energy(model, states, energy_tol, t):
    H = model.value(PhasePoint.from_z(states))
    drift = np.abs(H - H[0])
    bad = drift > energy_tol * (1.0 + abs(H[0]))
    if np.any(bad):
        k = int(np.argmax(bad))
        raise StepFailure(f"energy drift {drift[k]:.3g} exceeds tolerance at t={t[k]:.6g}",
                          last_time=float(t[max(k - 1, 0)]))
    return H


def integrate(model: HamiltonianModel, initial, T: float, tol: float = 1e-12,
              method: str = "dop853", steps: Optional[int] = None,
              energy_tol: Optional[float] = ENERGY_TOL) -> Trajectory:
    """Integrate Hamilton's equations from ``initial`` over ``[0, T]``.

    ``method="dop853"`` is adaptive 8th-order Runge-Kutta with relative and
    absolute tolerance ``tol``; ``method="midpoint"`` is the fixed-step
    implicit midpoint rule (symplectic) with ``steps`` steps.
    """
    z0 = as_point(initial).z.astype(float)
    if z0.ndim != 1:
        raise ValueError("integrate takes a single initial phase point")
    if not np.isfinite(T):
        raise ValueError("T must be finite")
    if method == "dop853":
        def rhs(t, z):
            return phase_velocity(model, z)

        sol = solve_ivp(rhs, (0.0, T), z0, method="DOP853", rtol=tol, atol=tol,
                        dense_output=True)
        if sol.status != 0:
            raise StepFailure(f"integration failed: {sol.message}",
                              last_time=float(sol.t[-1]) if sol.t.size else 0.0)
        t, states, interp = sol.t, sol.y.T, sol.sol
    elif method == "midpoint":
        t, states, interp = _implicit_midpoint(model, z0, T, steps or 1000, tol)
    else:
        raise ValueError(f"unknown integration method {method!r}")
    if not np.all(np.isfinite(states)):
        raise StepFailure("non-finite state encountered", last_time=float(t[0]))
    H = (_check_energy(model, states, energy_tol, t) if energy_tol is not None
         else model.value(PhasePoint.from_z(states)))
    return Trajectory(model, t, states, interp, H, method)


def _implicit_midpoint(model, z0, T, steps, tol):
    h = T / steps
    n2 = z0.size
    zs = np.empty((steps + 1, n2))
    zs[0] = z0
    z = z0.copy()
    eye = np.eye(n2)
    for k in range(steps):
        znew = z + h * phase_velocity(model, z)
        for _ in range(50):
            mid = 0.5 * (z + znew)
            vel, A = flow_matrix(model, mid)
            r = znew - z - h * vel
            if np.max(np.abs(r)) <= tol * (1.0 + np.max(np.abs(z))):
                break
            znew = znew - np.linalg.solve(eye - 0.5 * h * A, r)
        else:
            raise StepFailure("implicit midpoint iteration did not converge", last_time=k * h)
        z = znew
        zs[k + 1] = z
    t = np.linspace(0.0, T, steps + 1)
    dz = phase_velocity(model, zs)
    spline = CubicHermiteSpline(t, zs, dz, axis=0)
    return t, zs, lambda tt: spline(tt).T


@dataclass
class JacobiField:
    """Jacobi fields along an orbit; ``xi``/``pi`` have shape (len(t), n, m)."""

    t: np.ndarray
    xi: np.ndarray
    pi: np.ndarray
    trajectory: Trajectory = field(repr=False, default=None)
    interpolant: Callable = field(repr=False, default=None)

    def __call__(self, t):
        """Interpolated ``(xi, pi)`` at times ``t``."""
        n = self.xi.shape[1]
        m = self.xi.shape[2]
        t = np.asarray(t, dtype=float)
        y = np.asarray(self.interpolant(t.ravel())).T
        X = y[:, 2 * n:].reshape(t.shape + (2 * n, m))
        return X[..., :n, :], X[..., n:, :]


def _augmented(model, z0, X0, T, tol, t_eval=None):
    n2 = z0.size
    m = X0.shape[1]

    def rhs(t, y):
        z = y[:n2]
        X = y[n2:].reshape(n2, m)
        vel, A = flow_matrix(model, z)
        return np.concatenate([vel, (A @ X).ravel()])

    y0 = np.concatenate([z0, X0.ravel()])
    sol = solve_ivp(rhs, (0.0, T), y0, method="DOP853", rtol=tol, atol=tol, dense_output=True,
                    t_eval=t_eval)
    if sol.status != 0:
        raise StepFailure(f"integration failed: {sol.message}",
                          last_time=float(sol.t[-1]) if sol.t.size else 0.0)
    Y = sol.y.T
    return sol, Y[:, :n2], Y[:, n2:].reshape(-1, n2, m)


def jacobi_evolve(traj: Trajectory, xi0, pi0, tol: float = 1e-12) -> JacobiField:
    """Propagate Jacobi fields with initial data ``(xi0, pi0)`` along ``traj``.

    ``xi0``/``pi0`` have shape ``(n,)`` or ``(n, m)`` for ``m`` fields at once.
    The base orbit is re-integrated together with the fields so second
    derivatives of H are always taken on the exact orbit; output lives on
    the trajectory's time grid.
    """
    n = traj.n
    xi0 = np.asarray(xi0, dtype=float)
    pi0 = np.asarray(pi0, dtype=float)
    single = xi0.ndim == 1 and pi0.ndim == 1
    xi0 = xi0.reshape(n, -1)
    pi0 = pi0.reshape(n, -1)
    xi0, pi0 = np.broadcast_arrays(xi0, pi0)
    X0 = np.concatenate([xi0, pi0], axis=0)
    sol, Z, X = _augmented(traj.model, traj.states[0], X0, traj.T, tol, t_eval=traj.t - traj.t[0])
    xi, pi = X[:, :n, :], X[:, n:, :]
    jf = JacobiField(traj.t, xi, pi, traj, sol.sol)
    jf.single = single
    return jf


def flow_sensitivity(model: HamiltonianModel, initial, T: float, tol: float = 1e-12):
    """Final state and the full monodromy ``dz(T)/dz(0)``."""
    z0 = as_point(initial).z.astype(float)
    n2 = z0.size
    sol, Z, X = _augmented(model, z0, np.eye(n2), T, tol)
    return Z[-1], X[-1]


def symplectic_pairing(f1: JacobiField, f2: JacobiField, k1: int = 0, k2: int = 0):
    """``pi . xi' - pi' . xi`` along the orbit; conserved by the linear flow."""
    return (np.einsum("ti,ti->t", f1.pi[:, :, k1], f2.xi[:, :, k2])
            - np.einsum("ti,ti->t", f2.pi[:, :, k2], f1.xi[:, :, k1]))


def covariant_rate(model: HamiltonianModel, point, xi, xidot):
    """``xidot^k + gamma^k_j xi^j`` at ``point`` (batched points allowed)."""
    res = geometry.curvature(model, point)
    return np.asarray(xidot) + np.einsum("...kj,...j->...k", res.gamma, np.asarray(xi))


def _node_geometry(traj: Trajectory, form: str, nodes_per_panel: int, min_panels: int):
    key = (form, nodes_per_panel, min_panels)
    if key not in traj._cache:
        tn, _ = traj.quadrature_nodes(nodes_per_panel, min_panels)
        pts = PhasePoint.from_z(traj(tn))
        if form == "raw":
            table = geometry.DerivTable(pts, traj.model.jet(pts, 2))
            Hpp = table.matrix("pp")
            geometry.check_convex(Hpp)
            traj._cache[key] = {"G": np.linalg.inv(Hpp), "pq": table.matrix("pq"),
                                "qq": table.matrix("qq")}
        else:
            res = geometry.curvature(traj.model, pts)
            traj._cache[key] = {"G": res.G, "gamma": res.gamma, "R": res.R}
    return traj._cache[key]


def second_variation(traj: Trajectory, xi, form: str = "covariant",
                     nodes_per_panel: int = 8, min_panels: int = 8) -> float:
    """Second variation of the action along ``traj`` for the variation ``xi``.

    ``xi`` is either a callable ``t -> (xi(t), xidot(t))`` (arrays with the
    time axis first and ``n`` last) or a pair of such arrays sampled at
    ``traj.quadrature_nodes(nodes_per_panel, min_panels)``.

    ``form="raw"``:
      ``1/2 G xidot xidot - xidot^i xi^j G_ik H^k_j
      + 1/2 xi xi (-H_ij + H^k_i H^l_j G_kl)``;
    ``form="covariant"``: ``1/2 G_ij xirate^i xirate^j - 1/2 xi^i xi^j R_ij``
    with ``xirate = xidot + gamma xi``. The two agree when ``xi`` vanishes
    at both ends.
    """
    if form not in ("raw", "covariant"):
        raise ValueError(f"unknown form {form!r}")
    tn, wn = traj.quadrature_nodes(nodes_per_panel, min_panels)
    if callable(xi):
        x, xd = xi(tn)
    else:
        x, xd = xi
    x = np.asarray(x, dtype=float)
    xd = np.asarray(xd, dtype=float)
    if x.shape != (tn.size, traj.n) or xd.shape != x.shape:
        raise GridMismatchError(
            f"variation sampled with shape {x.shape}, expected {(tn.size, traj.n)}")
    geo = _node_geometry(traj, form, nodes_per_panel, min_panels)
    G = geo["G"]
    if form == "raw":
        pq, qq = geo["pq"], geo["qq"]
        kin = 0.5 * np.einsum("tij,ti,tj->t", G, xd, xd)
        cross = -np.einsum("ti,tj,tik,tkj->t", xd, x, G, pq)
        pot = 0.5 * np.einsum("ti,tj,tij->t", x, x,
                              -qq + np.einsum("tki,tlj,tkl->tij", pq, pq, G))
        integrand = kin + cross + pot
    else:
        rate = xd + np.einsum("tkj,tj->tk", geo["gamma"], x)
        integrand = (0.5 * np.einsum("tij,ti,tj->t", G, rate, rate)
                     - 0.5 * np.einsum("ti,tj,tij->t", x, x, geo["R"]))
    return float(np.dot(wn, integrand))


def action(traj: Trajectory, nodes_per_panel: int = 8, min_panels: int = 8) -> float:
    """``int (p . qdot - H) dt`` along the orbit with ``qdot = dH/dp``."""
    tn, wn = traj.quadrature_nodes(nodes_per_panel, min_panels)
    z = traj(tn)
    pts = PhasePoint.from_z(z)
    j = traj.model.jet(pts, 1)
    n = traj.n
    qdot = j.coeffs[..., 1 + n:]
    lag = np.einsum("ti,ti->t", pts.p, qdot) - j.value
    return float(np.dot(wn, lag))
