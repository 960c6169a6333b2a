"""Momentum averages with the Boltzmann weight ``exp(-H) d^n p / (2 pi)^(n/2)``.

At fixed ``q`` the weight is centred at the minimizer ``p*`` of ``H(q, .)``
and whitened by the Cholesky factor ``L`` of ``H^ij(q, p*)``: with
``p = p* + L^-T u`` the measure becomes ``exp(-H_min) / det L`` times the
standard normal density in ``u``. For Hamiltonians quadratic in ``p`` this
is exact; otherwise the leftover factor ``exp(-(H - H_min - |u|^2 / 2))`` is
folded into the integrand.

Temperature is fixed to one.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Callable, Optional

import numpy as np

from . import geometry, jets, riemann
from .errors import GridTooCoarseError, NotIntegrableError
from .models import HamiltonianModel, PhasePoint, emd

CHUNK = 8192


@dataclass(frozen=True)
class QuadratureSpec:
    """How to integrate over momenta.

    ``method`` is ``"analytic_gaussian"``, ``"gauss_hermite"`` or
    ``"monte_carlo"``. ``nodes=None`` picks 4 nodes per axis for models
    quadratic in ``p`` (exact for the polynomial integrands that arise) and
    20 (one or two dimensions) or 10 (more) otherwise. ``proposal="laplace"``
    permits Monte Carlo on non-quadratic models with the whitened Gaussian as
    importance proposal. ``refine=False`` skips the extra Gauss-Hermite pass
    used for the error estimate (the error is then reported as NaN).
    """

    method: str = "gauss_hermite"
    nodes: Optional[int] = None
    samples: int = 20000
    seed: int = 0
    proposal: Optional[str] = None
    refine: bool = True

    def __post_init__(self):
        if self.method not in ("analytic_gaussian", "gauss_hermite", "monte_carlo"):
            raise ValueError(f"unknown quadrature method {self.method!r}")
        if self.nodes is not None and self.nodes < 2:
            raise ValueError("gauss_hermite needs at least 2 nodes per axis")
        if self.samples < 2:
            raise ValueError("monte_carlo needs at least 2 samples")


@dataclass
class DensityResult:
    """``value`` with an error estimate: standard error (Monte Carlo), change
    under one node refinement (Gauss-Hermite) or zero (analytic)."""

    value: np.ndarray
    error: np.ndarray
    method: str

    def __float__(self):
        return float(self.value)


@dataclass
class GaussianFrame:
    center: np.ndarray
    chol: np.ndarray
    h_min: np.ndarray
    exact: bool

    @property
    def scale(self):
        """``exp(-H_min) / det L``: the exact integral for quadratic models."""
        logdet = np.sum(np.log(np.diagonal(self.chol, axis1=-2, axis2=-1)), axis=-1)
        return np.exp(-self.h_min - logdet)

    def momenta(self, u):
        """``p* + L^-T u`` for normal samples ``u`` of shape (K, n); returns (..., K, n)."""
        LinvT = np.swapaxes(np.linalg.inv(self.chol), -1, -2)
        return self.center[..., None, :] + np.einsum("...ij,kj->...ki", LinvT, u)


def gaussian_frame(model: HamiltonianModel, q, tol: float = 1e-13, maxiter: int = 60) -> GaussianFrame:
    """Centre and whitening of ``exp(-H(q, .))`` (batched over ``q``)."""
    q = np.asarray(q, dtype=float)
    n = model.n
    p = np.zeros(q.shape)
    val, grad, hess = model.hessian(PhasePoint(q, p))
    if not model.quadratic_in_p:
        for _ in range(maxiter):
            gp = grad[..., n:]
            if np.max(np.abs(gp)) <= tol * (1.0 + np.max(np.abs(p))):
                break
            try:
                p = p - np.linalg.solve(hess[..., n:, n:], gp[..., None])[..., 0]
            except np.linalg.LinAlgError:
                raise NotIntegrableError("momentum Hessian is singular") from None
            val, grad, hess = model.hessian(PhasePoint(q, p))
        else:
            raise NotIntegrableError("no minimum of H over momenta found")
    M = hess[..., n:, n:]
    eig = np.linalg.eigvalsh(M)
    if np.any(eig[..., 0] <= geometry.CONVEX_TOL * np.abs(eig).max(axis=-1)):
        raise NotIntegrableError("exp(-H) is not integrable over momenta: H^ij is not positive definite")
    L = np.linalg.cholesky(M)
    if model.quadratic_in_p:
        b = grad[..., n:]
        center = -np.linalg.solve(M, b[..., None])[..., 0]
        h_min = val + 0.5 * np.einsum("...i,...i->...", b, center)
    else:
        center, h_min = p, val
    return GaussianFrame(center, L, h_min, model.quadratic_in_p)


def gauss_hermite_grid(n: int, k: int):
    """Tensor-product probabilists' Gauss-Hermite nodes (k^n, n) and weights summing to 1."""
    x, w = np.polynomial.hermite_e.hermegauss(k)
    w = w / w.sum()
    U = np.array(list(product(x, repeat=n)))
    W = np.prod(np.array(list(product(w, repeat=n))), axis=1)
    return U, W


def _default_nodes(model):
    if model.quadratic_in_p:
        return 4
    return 20 if model.n <= 2 else 10


Integrand = Callable[[PhasePoint], np.ndarray]


def _evaluate(model, frame, q, U, f):
    """Integrand times the non-Gaussian correction at momenta built from ``U``."""
    P = frame.momenta(U)
    Q = np.broadcast_to(q[..., None, :], P.shape)
    flatQ = Q.reshape(-1, model.n)
    flatP = P.reshape(-1, model.n)
    out = np.empty(flatQ.shape[0])
    for s in range(0, out.size, CHUNK):
        pts = PhasePoint(flatQ[s:s + CHUNK], flatP[s:s + CHUNK])
        val = np.broadcast_to(f(pts), (pts.q.shape[0],))
        if not frame.exact:
            h = model.value(pts)
            hmin = np.broadcast_to(frame.h_min[..., None], Q.shape[:-1]).reshape(-1)[s:s + CHUNK]
            u2 = np.broadcast_to(np.sum(U * U, axis=1), Q.shape[:-1]).reshape(-1)[s:s + CHUNK]
            val = val * np.exp(-(h - hmin - 0.5 * u2))
        out[s:s + CHUNK] = val
    return out.reshape(Q.shape[:-1])


def momentum_average(model: HamiltonianModel, q, f: Integrand,
                     spec: QuadratureSpec = QuadratureSpec()) -> DensityResult:
    """``int f(q, p) exp(-H) d^n p / (2 pi)^(n/2)`` at each ``q`` (batched)."""
    q = np.asarray(q, dtype=float)
    frame = gaussian_frame(model, q)
    n = model.n
    if spec.method == "monte_carlo":
        if not frame.exact and spec.proposal != "laplace":
            raise NotIntegrableError("Monte Carlo on a non-quadratic model needs proposal='laplace'")
        flat_q = q.reshape(-1, n)
        vals = np.empty(flat_q.shape[0])
        errs = np.empty(flat_q.shape[0])
        sub = GaussianFrame(frame.center.reshape(-1, n), frame.chol.reshape(-1, n, n),
                            frame.h_min.reshape(-1), frame.exact)
        for i in range(flat_q.shape[0]):
            rng = np.random.Generator(np.random.Philox(key=np.array([spec.seed, i], dtype=np.uint64)))
            U = rng.standard_normal((spec.samples, n))
            one = GaussianFrame(sub.center[i], sub.chol[i], sub.h_min[i], sub.exact)
            y = _evaluate(model, one, flat_q[i], U, f)
            vals[i] = y.mean()
            errs[i] = y.std(ddof=1) / np.sqrt(spec.samples)
        scale = frame.scale
        return DensityResult(scale * vals.reshape(q.shape[:-1]),
                             np.abs(scale) * errs.reshape(q.shape[:-1]), "monte_carlo")
    k = spec.nodes or _default_nodes(model)
    if spec.method == "analytic_gaussian":
        if not frame.exact:
            raise NotIntegrableError("the analytic Gaussian path needs a model quadratic in p")
        U, W = gauss_hermite_grid(n, k)
        return DensityResult(frame.scale * (_evaluate(model, frame, q, U, f) @ W),
                             np.zeros(q.shape[:-1]), "analytic_gaussian")
    U, W = gauss_hermite_grid(n, k)
    I1 = _evaluate(model, frame, q, U, f) @ W
    if not spec.refine:
        return DensityResult(frame.scale * I1, np.full(q.shape[:-1], np.nan), "gauss_hermite")
    U2, W2 = gauss_hermite_grid(n, k + 1)
    I2 = _evaluate(model, frame, q, U2, f) @ W2
    return DensityResult(frame.scale * I2, np.abs(frame.scale * (I2 - I1)), "gauss_hermite")


def boltzmann_volume(model: HamiltonianModel, q,
                     spec: QuadratureSpec = QuadratureSpec("analytic_gaussian")) -> DensityResult:
    """``int exp(-H) d^n p / (2 pi)^(n/2)``; equals ``exp(-phi) sqrt(det g)`` for
    ``H = 1/2 g^ij (p - A)_i (p - A)_j + phi``."""
    q = np.asarray(q, dtype=float)
    if spec.method == "analytic_gaussian":
        frame = gaussian_frame(model, q)
        if not frame.exact:
            raise NotIntegrableError("the analytic Gaussian path needs a model quadratic in p")
        return DensityResult(frame.scale, np.zeros(q.shape[:-1]), "analytic_gaussian")
    return momentum_average(model, q, lambda pts: 1.0, spec)


def second_moment(model: HamiltonianModel, q) -> np.ndarray:
    """``int (p - p*)_k (p - p*)_l exp(-H) d^n p / (2 pi)^(n/2)`` for quadratic models."""
    frame = gaussian_frame(model, q)
    if not frame.exact:
        raise NotIntegrableError("closed-form moments need a model quadratic in p")
    Minv = np.linalg.inv(frame.chol @ np.swapaxes(frame.chol, -1, -2))
    return frame.scale[..., None, None] * Minv


def ricci_density(model: HamiltonianModel, q, spec: QuadratureSpec = QuadratureSpec()) -> DensityResult:
    """Boltzmann momentum average of the Ricci form ``H^ij R_ij``.

    ``analytic_gaussian`` is accepted for quadratic models and evaluates the
    Gaussian average with a node count that is exact for the polynomial
    dependence on ``p``.
    """
    return momentum_average(model, q, lambda pts: geometry.curvature(model, pts).ricci, spec)


def _sqrt_det(g):
    return np.sqrt(np.linalg.det(g))


def emd_density_closed_form(metric_fn, A_fn, phi_fn, q) -> np.ndarray:
    """``[R + 1/4 F_ik F_jl g^kl g^ij + Laplacian(phi)] exp(-phi) sqrt(g)``.

    ``R`` is the scalar curvature of ``g`` and the Laplacian is the metric
    one. Batched over ``q``.
    """
    geo = geometry.emd_fields(metric_fn, A_fn, phi_fn, q)
    ginv, F = geo["ginv"], geo["F"]
    F2 = np.einsum("...ik,...jl,...kl,...ij->...", F, F, ginv, ginv)
    return (geo["scalar"] + 0.25 * F2 + geo["laplacian_phi"]) * np.exp(-geo["phi"]) * _sqrt_det(geo["g"])


def torus_grid(n: int, points: int) -> np.ndarray:
    """Uniform periodic grid on ``[0, 2 pi)^n``, shape (points^n, n)."""
    x = 2 * np.pi * np.arange(points) / points
    return np.stack(np.meshgrid(*([x] * n), indexing="ij"), axis=-1).reshape(-1, n)


@dataclass
class ActionComparison:
    """Torus integrals of the field action density in several forms.

    ``momentum``: Boltzmann average of the Ricci form. ``closed``: the
    closed-form density with ``+Laplacian(phi)``. ``gradient``: the variant
    with ``-|grad phi|^2`` in place of the Laplacian. ``conformal``: the
    Einstein-frame form ``sqrt(g~)[R~ + 1/4 exp(2 a phi) F~^2 - c |grad phi|~^2]``
    with ``g~ = exp(2 a phi) g``, ``a = -1/(n-2)`` and the hypothesised
    ``c = (2n-1)/(n-2)``; ``fitted_coefficient`` is the ``c`` that matches
    ``closed`` exactly and ``derived_coefficient`` the value ``1/(n-2)``
    from the conformal transformation of the scalar curvature.
    """

    n: int
    points: int
    momentum: float
    closed: float
    gradient: float
    conformal: Optional[float]
    conformal_coefficient: Optional[float]
    fitted_coefficient: Optional[float]
    derived_coefficient: Optional[float]
    residuals: dict
    halving_deltas: dict


def _conformal_pieces(metric_fn, A_fn, phi_fn, q, n, alpha):
    def tilde(qq):
        g = metric_fn(qq)
        w = jets.exp(2 * alpha * phi_fn(qq))
        return [[w * g[i][j] for j in range(n)] for i in range(n)]

    geo = geometry.emd_fields(metric_fn, A_fn, phi_fn, q)
    Rt = riemann.scalar(riemann.MetricField(n, tilde), q)
    conf = np.exp(2 * alpha * geo["phi"])
    gt = conf[..., None, None] * geo["g"]
    gti = geo["ginv"] / conf[..., None, None]
    F = geo["F"]
    F2t = np.einsum("...ik,...jl,...kl,...ij->...", F, F, gti, gti)
    sq = _sqrt_det(gt)
    base = sq * (Rt + 0.25 * conf * F2t)
    kin = sq * np.einsum("...ij,...i,...j->...", gti, geo["dphi"], geo["dphi"])
    return base, kin, geo


def action_integral_compare(metric_fn, A_fn, phi_fn, n: int, points: int = 16,
                            spec: QuadratureSpec = QuadratureSpec(),
                            halving_tol: float = 1e-4) -> ActionComparison:
    """Integrate the action density over the torus ``[0, 2 pi)^n`` in each form.

    The periodic trapezoid rule on ``points^n`` nodes is used; the same sum
    over every other node gives the half-resolution estimate, and
    :class:`GridTooCoarseError` is raised if the momentum or closed-form
    integral moves by more than ``halving_tol * (1 + |I|)``.
    """
    if points % 2 or points < 4:
        raise ValueError("points must be even and at least 4")
    if metric_fn is None:
        metric_fn = lambda qq: [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    phi = phi_fn if phi_fn is not None else (lambda qq: 0.0 * qq[0])
    q = torus_grid(n, points)
    cell = (2 * np.pi / points) ** n
    coarse = np.all(np.arange(points ** n)[:, None] // (points ** np.arange(n - 1, -1, -1)) % 2 == 0,
                    axis=1)

    def integrate(density):
        fine = cell * density.sum()
        half = (2 ** n) * cell * density[coarse].sum()
        return float(fine), float(abs(fine - half))

    model = emd(metric_fn, A_fn, phi_fn, n)
    mom, d_mom = integrate(ricci_density(model, q, spec).value)
    dens = emd_density_closed_form(metric_fn, A_fn, phi_fn, q)
    closed, d_closed = integrate(dens)
    geo = geometry.emd_fields(metric_fn, A_fn, phi_fn, q)
    grad2 = np.einsum("...ij,...i,...j->...", geo["ginv"], geo["dphi"], geo["dphi"])
    weight = np.exp(-geo["phi"]) * _sqrt_det(geo["g"])
    gradient, _ = integrate(dens - (geo["laplacian_phi"] + grad2) * weight)
    deltas = {"momentum": d_mom, "closed": d_closed}
    for key, (val, d) in {"momentum": (mom, d_mom), "closed": (closed, d_closed)}.items():
        if d > halving_tol * (1 + abs(val)):
            raise GridTooCoarseError(
                f"{key} integral changes by {d:.3g} when the grid is halved; use more points")
    residuals = {"momentum-closed": abs(mom - closed), "closed-gradient": abs(closed - gradient)}
    conformal = c_hyp = c_fit = c_derived = None
    if n >= 3:
        alpha = -1.0 / (n - 2)
        base, kin, _ = _conformal_pieces(metric_fn, A_fn, phi, q, n, alpha)
        I_base, _ = integrate(base)
        I_kin, _ = integrate(kin)
        c_hyp = (2 * n - 1) / (n - 2)
        c_derived = 1.0 / (n - 2)
        conformal = I_base - c_hyp * I_kin
        residuals["closed-conformal"] = abs(closed - conformal)
        residuals["closed-conformal_derived"] = abs(closed - (I_base - c_derived * I_kin))
        c_fit = (I_base - closed) / I_kin if I_kin > 0 else None
    return ActionComparison(n, points, mom, closed, gradient, conformal, c_hyp, c_fit, c_derived,
                            residuals, deltas)
