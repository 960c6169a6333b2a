"""Two-point boundary problems: the action ``s_T(Q, Q')`` and the eikonal ``sigma_E``.

Argument order follows the mathematical notation: ``s_T(Q, Q')`` is the
action of the orbit with ``q(0) = Q'`` and ``q(T) = Q``. ``shoot`` takes the
start point first since it integrates forward from it.

``sigma_E(Q, Q') = min_T [E T + s_T(Q, Q')]`` is taken as the first local
minimum along the smooth branch of shooting solutions obtained by
continuation in ``T``. Since ``d s_T / dT = -H`` on the shot orbit, the
derivative of the objective is ``E - H(T)`` and the minimizer is the time at
which the connecting orbit has energy ``E``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import dynamics
from .errors import (NoBracketError, NoConvergenceError, SingularSensitivityError,
                     StepFailure)
from .models import HamiltonianModel, PhasePoint

SHOOT_TOL = 1e-10
HALF_UNITS_ENERGY = 0.5
SINGULAR_REL = 1e-8


def _is_singular(J, T):
    sv = np.linalg.svd(J, compute_uv=False)
    return sv[-1] <= SINGULAR_REL * max(sv[0], T)


@dataclass
class ShootingResult:
    p0: np.ndarray
    trajectory: dynamics.Trajectory
    miss: float
    iterations: int
    sensitivity: np.ndarray

    @property
    def energy(self) -> float:
        return float(self.trajectory.energy[0])


@dataclass
class EikonalValue:
    sigma: float
    T: float
    s_T: float
    bracket: tuple
    energy_residual: float
    shot: ShootingResult


def momentum_for_velocity(model: HamiltonianModel, q, v, p_guess=None, tol=1e-13, maxiter=50):
    """Solve ``dH/dp (q, p) = v`` for ``p`` by Newton's method (needs convexity in p)."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    n = model.n
    p = np.zeros(n) if p_guess is None else np.asarray(p_guess, dtype=float).copy()
    for _ in range(maxiter):
        _, grad, hess = model.hessian(PhasePoint(q, p))
        r = grad[n:] - v
        if np.max(np.abs(r)) <= tol * (1.0 + np.max(np.abs(v))):
            break
        p = p - np.linalg.solve(hess[n:, n:], r)
    return p


def _endpoint(model, q_start, p0, T, tol):
    z0 = np.concatenate([q_start, p0])
    zT, M = dynamics.flow_sensitivity(model, PhasePoint.from_z(z0), T, tol)
    n = model.n
    return zT[:n], M[:n, n:]


def _newton(model, q_start, q_end, T, p0, shoot_tol, maxiter, tol):
    """Damped Newton on ``p0 -> q(T) - Q``; returns (p0, miss, iters, J, singular)."""
    qT, J = _endpoint(model, q_start, p0, T, tol)
    F = qT - q_end
    miss = float(np.max(np.abs(F)))
    for it in range(1, maxiter + 1):
        if miss <= shoot_tol:
            return p0, miss, it - 1, J, False
        if _is_singular(J, T):
            return p0, miss, it, J, True
        step = np.linalg.solve(J, F)
        big = 1e3 * (1.0 + np.linalg.norm(p0))
        if np.linalg.norm(step) > big:
            step *= big / np.linalg.norm(step)
        lam = 1.0
        while True:
            trial = p0 - lam * step
            try:
                qT2, J2 = _endpoint(model, q_start, trial, T, tol)
                miss2 = float(np.max(np.abs(qT2 - q_end)))
            except StepFailure:
                miss2 = np.inf
            if miss2 < miss or lam < 1e-4:
                break
            lam *= 0.5
        if not np.isfinite(miss2):
            return p0, miss, it, J, False
        p0, J, F, miss = trial, J2, qT2 - q_end, miss2
    return p0, miss, maxiter, J, False


def shoot(model: HamiltonianModel, q_start, q_end, T: float, p0_guess=None,
          shoot_tol: float = SHOOT_TOL, maxiter: int = 30, tol: float = 1e-12,
          starts: int = 24, seed: int = 0) -> ShootingResult:
    """Find ``p0`` such that the orbit from ``(q_start, p0)`` reaches ``q_end`` at time ``T``.

    Newton's method uses the sensitivity ``dq(T)/dp0`` from ``n`` Jacobi
    fields with ``xi(0) = 0`` and ``pi(0) = e_k``. If the initial guess
    (default: the momentum whose velocity is the straight-line velocity)
    fails, momenta of magnitude ``sqrt(2 E')`` are sampled for a ladder of
    energies ``E'``.

    Raises:
        SingularSensitivityError: the sensitivity is rank deficient at every
            attempted start (``T`` is at or near a conjugate time).
        NoConvergenceError: no start converged; ``best_miss`` is reported.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    q_start = np.asarray(q_start, dtype=float)
    q_end = np.asarray(q_end, dtype=float)
    n = model.n
    if p0_guess is None:
        p0_guess = momentum_for_velocity(model, q_start, (q_end - q_start) / T)
    guesses = [np.asarray(p0_guess, dtype=float)]
    rng = np.random.default_rng(seed)
    e0 = max(0.5 * float(np.dot(guesses[0], guesses[0])), 1e-2)
    ladder = e0 * np.array([1.0, 0.25, 4.0, 0.0625, 16.0])
    per = starts // ladder.size
    for e in ladder if per else ():
        d = rng.normal(size=(per, n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        guesses.extend(np.sqrt(2 * e) * d)
    best = np.inf
    singular_all = True
    for g in guesses:
        try:
            p0, miss, its, J, singular = _newton(model, q_start, q_end, T, g, shoot_tol, maxiter, tol)
        except StepFailure:
            singular_all = False
            continue
        best = min(best, miss)
        if miss <= shoot_tol:
            if _is_singular(J, T):
                raise SingularSensitivityError(
                    f"dq(T)/dp0 is singular at the solution (T={T:.6g} is a conjugate time)")
            traj = dynamics.integrate(model, PhasePoint(q_start, p0), T, tol)
            return ShootingResult(p0, traj, miss, its, J)
        singular_all = singular_all and singular
    if singular_all:
        raise SingularSensitivityError(
            f"dq(T)/dp0 is rank deficient at every start (T={T:.6g} is near a conjugate time)")
    raise NoConvergenceError(f"shooting failed; best miss {best:.3g}", best_miss=best)


def action_s(model: HamiltonianModel, q_end, q_start, T: float, p0_guess=None,
             return_shot: bool = False, **kwargs):
    """``s_T(Q, Q')``: the action ``int (p q' - H) dt`` of the orbit from ``Q'`` to ``Q``."""
    shot = shoot(model, q_start, q_end, T, p0_guess, **kwargs)
    s = dynamics.action(shot.trajectory)
    return (s, shot) if return_shot else s


def _resolve_energy(E):
    return HALF_UNITS_ENERGY if E is None else float(E)


def eikonal_sigma(model: HamiltonianModel, q_end, q_start, E: Optional[float] = None,
                  T_min: Optional[float] = None, T_max: Optional[float] = None,
                  growth: float = 1.25, tol: float = 1e-12) -> EikonalValue:
    """``sigma_E(Q, Q') = min_T [E T + s_T(Q, Q')]`` on the first smooth branch.

    ``E=None`` selects the ``E = 1/2`` unit convention. ``T`` is scanned
    geometrically from ``T_min`` (default: a tenth of the free-flight time
    ``|Q - Q'| / sqrt(2E)``) by continuation of the shooting solution until
    ``E - H(T)`` changes sign. If ``H(T)`` turns upward without crossing
    ``E``, the turn is searched for a narrow crossing window; a branch whose
    energy minimum stays above ``E`` has no minimizer. The
    bracket is refined by Brent's method (bisection with inverse quadratic
    steps) on ``E - H(T) = 0``, the stationarity condition of the objective.

    Raises:
        NoBracketError: the scan met a conjugate point, lost the branch or
            left the range before the objective turned upward.
    """
    E = _resolve_energy(E)
    if E <= 0:
        raise ValueError("E must be positive")
    q_end = np.asarray(q_end, dtype=float)
    q_start = np.asarray(q_start, dtype=float)
    dist = float(np.linalg.norm(q_end - q_start))
    if dist == 0.0:
        raise NoBracketError("coincident endpoints: the minimizing time is zero")
    t_free = dist / np.sqrt(2 * E)
    T_lo = T_min if T_min is not None else 0.1 * t_free
    T_hi = T_max if T_max is not None else 200.0 * t_free

    cache = {}

    def shot_at(T, guess):
        if T not in cache:
            cache[T] = shoot(model, q_start, q_end, T, guess, tol=tol, starts=0)
        return cache[T]

    def dfdT(T, guess):
        return E - shot_at(T, guess).energy

    def guess_for(T):
        Ts = sorted(cache, key=lambda t: abs(t - T))
        return cache[Ts[0]].p0

    class _Crossed(Exception):
        pass

    def dip_below(a, b, guess, samples=16):
        # H(T) turned upward inside (a, b). A narrow window with H < E can hide
        # between scan points: sweep coarsely by continuation, then minimize H
        # near the lowest sample, stopping at the first T with H < E. Shots
        # that fail (a conjugate time inside the window) are skipped.
        seen = []
        last_above = a
        for t in np.linspace(a, b, samples + 1)[1:-1]:
            try:
                sh = shot_at(t, guess)
            except (SingularSensitivityError, NoConvergenceError, StepFailure):
                continue
            if sh.energy < E:
                return (last_above, t)
            last_above, guess = t, sh.p0
            seen.append((t, sh.energy))
        if not seen:
            return None
        k = min(range(len(seen)), key=lambda i: seen[i][1])
        lo = seen[k - 1][0] if k > 0 else a
        hi = seen[k + 1][0] if k + 1 < len(seen) else b
        hit = []

        def energy(t):
            try:
                sh = shot_at(t, guess_for(t))
            except (SingularSensitivityError, NoConvergenceError, StepFailure):
                return np.inf
            if sh.energy < E:
                hit.append(t)
                raise _Crossed
            return sh.energy

        try:
            minimize_scalar(energy, bounds=(lo, hi), method="bounded", options={"xatol": 1e-9 * hi})
        except _Crossed:
            return (lo, hit[0])
        return None

    guess = None
    history = []
    T = T_lo
    bracket = None
    while T <= T_hi:
        try:
            sh = shot_at(T, guess)
        except (SingularSensitivityError, NoConvergenceError, StepFailure) as exc:
            raise NoBracketError(f"smooth branch lost at T={T:.6g}: {exc}") from None
        H = sh.energy
        if E - H > 0:
            if not history:
                raise NoBracketError("objective is already increasing at the smallest scanned time")
            bracket = (history[-1][0], T)
            break
        if len(history) >= 2 and history[-1][1] < history[-2][1] and H > history[-1][1]:
            bracket = dip_below(history[-2][0], T, guess)
            if bracket is None:
                raise NoBracketError(
                    f"energy along the smooth branch stays above E={E:.6g} near T={T:.6g}")
            break
        guess = sh.p0
        history.append((T, H))
        T = T * growth
    if bracket is None:
        raise NoBracketError(f"no interior minimum of E T + s_T for T in [{T_lo:.4g}, {T_hi:.4g}]")

    # sigma is stationary in T, so an error dT in the root costs O(dT^2) in sigma
    a, b = bracket
    T_star = brentq(lambda t: dfdT(t, guess_for(t)), a, b, xtol=1e-10 * b, rtol=1e-12)
    sh = shot_at(T_star, guess_for(T_star))
    s = dynamics.action(sh.trajectory)
    return EikonalValue(E * T_star + s, T_star, s, bracket, abs(E - sh.energy), sh)


def hj_residual(model: HamiltonianModel, func: Callable, Q, mode: str = "stationary",
                h: float = 1e-4, E: Optional[float] = None, T: Optional[float] = None) -> float:
    """Hamilton-Jacobi residual of ``func`` from central differences at ``Q``.

    ``mode="stationary"``: ``func(Q)`` is ``sigma_E``; returns
    ``|H(Q, grad sigma) - E|``. ``mode="timedep"``: ``func(Q, T)`` is ``s_T``;
    returns ``|H(Q, grad s) + ds/dT|``.
    """
    Q = np.asarray(Q, dtype=float)
    n = Q.size
    eye = np.eye(n)
    if mode == "stationary":
        E = _resolve_energy(E)
        grad = np.array([(func(Q + h * eye[k]) - func(Q - h * eye[k])) / (2 * h) for k in range(n)])
        return float(abs(model.value(PhasePoint(Q, grad)) - E))
    if mode == "timedep":
        if T is None:
            raise ValueError("timedep mode needs T")
        grad = np.array([(func(Q + h * eye[k], T) - func(Q - h * eye[k], T)) / (2 * h)
                         for k in range(n)])
        dT = (func(Q, T + h) - func(Q, T - h)) / (2 * h)
        return float(abs(model.value(PhasePoint(Q, grad)) + dT))
    raise ValueError(f"unknown mode {mode!r}")


@dataclass
class SymmetryProbe:
    forward: float
    backward: float
    difference: float


def symmetry_probe(model: HamiltonianModel, Q, Q_prime, E: Optional[float] = None,
                   **kwargs) -> SymmetryProbe:
    """``sigma_E(Q, Q')`` and ``sigma_E(Q', Q)`` with their absolute difference."""
    fwd = eikonal_sigma(model, Q, Q_prime, E, **kwargs).sigma
    bwd = eikonal_sigma(model, Q_prime, Q, E, **kwargs).sigma
    return SymmetryProbe(fwd, bwd, abs(fwd - bwd))


def sho_action(Q, Qp, T, omega=1.0):
    """Closed-form ``s_T`` of the one-dimensional oscillator."""
    w = omega
    return w / (2 * np.sin(w * T)) * ((Q * Q + Qp * Qp) * np.cos(w * T) - 2 * Q * Qp)


def sho_sigma(Q, Qp, E, omega=1.0):
    """``|int_{Q'}^{Q} sqrt(2E - omega^2 q^2) dq|`` for a direct oscillator path."""
    w = omega
    a = np.sqrt(2 * E) / w

    def prim(x):
        return 0.5 * w * (x * np.sqrt(a * a - x * x) + a * a * np.arcsin(x / a))

    return abs(prim(Q) - prim(Qp))


def constant_field_action(Z, Zp, T, B):
    """Closed-form ``s_T`` for the uniform field in the symmetric gauge."""
    Z = np.asarray(Z, dtype=float)
    Zp = np.asarray(Zp, dtype=float)
    d2 = float(np.sum((Z - Zp) ** 2))
    cross = Z[0] * Zp[1] - Z[1] * Zp[0]
    return 0.25 * B / np.tan(0.5 * B * T) * d2 - 0.5 * B * cross


def constant_field_sigma(Z, Zp, E, B):
    """Closed-form ``sigma_E`` (minor-arc branch) for the uniform field."""
    Z = np.asarray(Z, dtype=float)
    Zp = np.asarray(Zp, dtype=float)
    d = float(np.linalg.norm(Z - Zp))
    v = np.sqrt(2 * E)
    if B * d >= 2 * v:
        raise NoBracketError("points are farther apart than one cyclotron diameter")
    cross = Z[0] * Zp[1] - Z[1] * Zp[0]
    return (2 * E / B * np.arcsin(B * d / (2 * v)) + 0.5 * d * np.sqrt(2 * E - 0.25 * B * B * d * d)
            - 0.5 * B * cross)
