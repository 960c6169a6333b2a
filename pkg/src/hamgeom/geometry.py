"""Generalized metric, connection and curvature of a convex Hamiltonian.

Index conventions follow the derivative notation ``H^{i..}_{j..}``: upper
indices are momentum derivatives, lower indices are position derivatives.
Matrices are returned with the *first* array axis carrying the first
written index, so ``gamma[..., k, j]`` is ``gamma^k_j`` and
``H_pq[..., k, j]`` is ``H^k_j = d^2 H / dp_k dq^j``.

Everything is evaluated from a single order-4 jet of ``H`` at the phase
point. Time derivatives along the flow are Poisson brackets with ``H``,
taken on jets derived from that expansion, so the nested bracket
``{H, {H, G}}`` costs no numerical differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import jets, riemann
from .errors import IllConditionedError, NotConvexError
from .models import HamiltonianModel, PhasePoint, as_point

CONVEX_TOL = 1e-10


@dataclass
class DerivTable:
    """All partials of H up to total order 4 at one (possibly batched) point."""

    point: PhasePoint
    jet: jets.Jet

    @property
    def n(self) -> int:
        return self.point.n

    def partial(self, upper=(), lower=()):
        """``H^{upper}_{lower}``: momentum indices ``upper``, position ``lower``."""
        alpha = [0] * (2 * self.n)
        for j in lower:
            alpha[j] += 1
        for i in upper:
            alpha[self.n + i] += 1
        return jets.extract_partial(self.jet, alpha)

    def matrix(self, kind: str):
        """Second-derivative block ``"pp"`` (H^ij), ``"pq"`` (H^i_j) or ``"qq"`` (H_ij)."""
        n = self.n
        out = np.empty(self.jet.batch_shape + (n, n))
        for i in range(n):
            for j in range(n):
                if kind == "pp":
                    out[..., i, j] = self.partial(upper=(i, j))
                elif kind == "pq":
                    out[..., i, j] = self.partial(upper=(i,), lower=(j,))
                elif kind == "qq":
                    out[..., i, j] = self.partial(lower=(i, j))
                else:
                    raise ValueError(kind)
        return out


def derivative_table(model: HamiltonianModel, point) -> DerivTable:
    point = as_point(point)
    return DerivTable(point, model.jet(point, 4))


def check_convex(Hpp, tol: float = CONVEX_TOL):
    eig = np.linalg.eigvalsh(Hpp)
    scale = np.maximum(np.abs(eig).max(axis=-1), 1e-300)
    bad = eig[..., 0] <= tol * scale
    if np.any(bad):
        raise NotConvexError(
            f"H^ij is not positive definite (smallest eigenvalue {float(np.min(eig[..., 0])):.3g})")


def mass_inverse(table: DerivTable, tol: float = CONVEX_TOL) -> np.ndarray:
    """``G_ij``, the inverse of ``H^ij``, via a Cholesky factorization."""
    Hpp = table.matrix("pp")
    check_convex(Hpp, tol)
    L = np.linalg.cholesky(Hpp)
    eye = np.broadcast_to(np.eye(table.n), Hpp.shape)
    Linv = np.linalg.solve(L, eye)
    return np.swapaxes(Linv, -1, -2) @ Linv


def bracket(F: jets.Jet, K: jets.Jet, n: int) -> jets.Jet:
    """``{F, K} = sum_k dF/dp_k dK/dq^k - dF/dq^k dK/dp_k`` on jets.

    The result has order ``min(F.order, K.order) - 1``.
    """
    out = None
    for k in range(n):
        term = (jets.derivative(F, n + k) * jets.derivative(K, k)
                - jets.derivative(F, k) * jets.derivative(K, n + k))
        out = term if out is None else out + term
    return out


def _phase_jet(f, point, order, n):
    if isinstance(f, HamiltonianModel):
        return f.jet(point, order)
    zj = jets.jet_variables(point.z, order)
    out = f(zj[:n], zj[n:])
    if not isinstance(out, jets.Jet):
        out = jets.Jet.constant(np.broadcast_to(out, point.q.shape[:-1]), zj[0].space)
    return out


def poisson_bracket(F, K, point):
    """Value of ``{F, K}`` at ``point``.

    ``F`` and ``K`` are models or callables ``f(q, p)`` on jet sequences.
    Sign convention: ``{H, q^i} = H^i`` and ``{H, p_i} = -H_i``.
    """
    point = as_point(point)
    n = point.n
    Fj = _phase_jet(F, point, 1, n)
    Kj = _phase_jet(K, point, 1, n)
    return bracket(Fj, Kj, n).value


@dataclass
class CurvatureResult:
    """``G_ij``, ``gamma^k_j``, symmetric ``R_ij`` and the Ricci form at a point.

    ``raw`` keeps the matrix before symmetrization (with the unsymmetrized
    flow derivative of ``G_ik H^k_j``); only its symmetric part is curvature.
    """

    G: np.ndarray
    gamma: np.ndarray
    R: np.ndarray
    ricci: np.ndarray
    raw: np.ndarray = field(repr=False, default=None)
    Gdot: np.ndarray = field(repr=False, default=None)
    Hpp: np.ndarray = field(repr=False, default=None)
    velocity: np.ndarray = field(repr=False, default=None)

    @property
    def antisymmetric_part(self):
        return 0.5 * (self.raw - np.swapaxes(self.raw, -1, -2))


def _values(mat):
    return np.stack([np.stack([x.value for x in row], axis=-1) for row in mat], axis=-2)


class _Expansion:
    """Derived jets of one order-4 expansion of H."""

    def __init__(self, Hj: jets.Jet, n: int, tol: float = CONVEX_TOL):
        self.n = n
        self.H = Hj
        d = [jets.derivative(Hj, a) for a in range(2 * n)]
        self.Hq, self.Hp = d[:n], d[n:]
        self.pp = [[jets.derivative(self.Hp[i], n + j) for j in range(n)] for i in range(n)]
        self.pq = [[jets.derivative(self.Hp[k], j) for j in range(n)] for k in range(n)]
        self.Hpp0 = _values(self.pp)
        self.Hpq0 = _values(self.pq)
        self.Hqq0 = np.stack([np.stack([jets.derivative(self.Hq[i], j).value for j in range(n)],
                                       axis=-1) for i in range(n)], axis=-2)
        check_convex(self.Hpp0, tol)
        self.G = jets.matrix_inverse(self.pp)
        self.G0 = _values(self.G)

    def flow(self, F: jets.Jet) -> jets.Jet:
        """Time derivative ``{H, F}`` of a phase function along the orbit."""
        return bracket(self.H, F, self.n)

    def gdot(self):
        return [[self.flow(self.G[i][j]) for j in range(self.n)] for i in range(self.n)]

    def gamma(self, Gdot0):
        # gamma^a_c = 1/2 [-H^a_c + H^ab G_ci H^i_b + Gdot_cb H^ba]
        P = np.einsum("...ab,...ci,...ib->...ac", self.Hpp0, self.G0, self.Hpq0)
        T = np.einsum("...cb,...ba->...ac", Gdot0, self.Hpp0)
        return 0.5 * (-self.Hpq0 + P + T)


def curvature_from_jet(Hj: jets.Jet, n: int, tol: float = CONVEX_TOL) -> CurvatureResult:
    if Hj.order < 4:
        raise ValueError("curvature needs an order-4 expansion of H")
    ex = _Expansion(Hj, n, tol)
    Gdot = ex.gdot()
    Gdot0 = _values(Gdot)
    gam = ex.gamma(Gdot0)
    G0, Hpq0 = ex.G0, ex.Hpq0

    # d/dt [G_ik H^k_j] as a jet-valued phase function
    GH = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            s = ex.G[i][0] * ex.pq[0][j]
            for k in range(1, n):
                s = s + ex.G[i][k] * ex.pq[k][j]
            GH[i][j] = s
    dGH = np.stack([np.stack([ex.flow(GH[i][j]).value for j in range(n)], axis=-1)
                    for i in range(n)], axis=-2)
    Gddot = np.stack([np.stack([ex.flow(Gdot[i][j]).value for j in range(n)], axis=-1)
                      for i in range(n)], axis=-2)

    quad = np.einsum("...kl,...ki,...lj->...ij", G0, gam, gam)
    pot = ex.Hqq0 - np.einsum("...ki,...kl,...lj->...ij", Hpq0, G0, Hpq0)
    raw = quad - dGH - 0.5 * Gddot + pot
    R = 0.5 * (raw + np.swapaxes(raw, -1, -2))
    ricci = np.einsum("...ij,...ij->...", ex.Hpp0, R)
    vel = np.stack([h.value for h in ex.Hp], axis=-1)
    return CurvatureResult(G0, gam, R, ricci, raw, Gdot0, ex.Hpp0, vel)


def curvature(model: HamiltonianModel, point, tol: float = CONVEX_TOL) -> CurvatureResult:
    """Generalized curvature ``R_ij(q, p)`` and Ricci form at ``point``.

    ``point`` may be batched; all outputs then carry the batch axes.
    """
    point = as_point(point)
    return curvature_from_jet(model.jet(point, 4), model.n, tol)


def gamma(table: DerivTable, tol: float = CONVEX_TOL) -> np.ndarray:
    """Connection analogue ``gamma^k_j`` from a derivative table."""
    ex = _Expansion(table.jet, table.n, tol)
    return ex.gamma(_values(ex.gdot()))


def ricci_form(model: HamiltonianModel, point) -> np.ndarray:
    return curvature(model, point).ricci


# -- closed form for H = 1/2 g^ij (p - A)(p - A) + phi ------------------------

def _field_jets(fn, q, order, count=None):
    qj = jets.jet_variables(q, order)
    space = qj[0].space
    shape = np.asarray(q).shape[:-1]
    out = fn(qj)

    def wrap(x):
        if isinstance(x, jets.Jet):
            return x
        return jets.Jet.constant(np.broadcast_to(np.asarray(x, dtype=float), shape), space)

    if count is None:
        return wrap(out)
    return [wrap(x) for x in out]


def field_strength(A_fn, q, order: int = 1):
    """``F_ij = d_i A_j - d_j A_i`` and its first derivatives ``dF[..., i, j, k] = d_k F_ij``."""
    q = np.asarray(q, dtype=float)
    n = q.shape[-1]
    A = _field_jets(A_fn, q, order + 1, n)
    dA = [[jets.derivative(A[j], i) for j in range(n)] for i in range(n)]  # dA[i][j] = d_i A_j
    F = [[dA[i][j] - dA[j][i] for j in range(n)] for i in range(n)]
    F0 = _values(F)
    if order == 0:
        return F0, None
    dF = np.stack([_values([[jets.derivative(F[i][j], k) for j in range(n)] for i in range(n)])
                   for k in range(n)], axis=-1)
    return F0, dF


def emd_fields(metric_fn, A_fn, phi_fn, q):
    """Geometry and field data entering the closed-form curvature and density."""
    q = np.asarray(q, dtype=float)
    n = q.shape[-1]
    if metric_fn is None:
        metric_fn = lambda qq: [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    geo = riemann.geometry(riemann.MetricField(n, metric_fn), q)
    Gam = geo["christoffel"]
    if A_fn is None:
        A0 = np.zeros(q.shape)
        F0 = np.zeros(q.shape + (n,))
        dF = np.zeros(q.shape + (n, n))
    else:
        A0 = np.stack([a.value for a in _field_jets(A_fn, q, 0, n)], axis=-1)
        F0, dF = field_strength(A_fn, q, 1)
    # nabla_k F_ij = d_k F_ij - Gamma^m_ki F_mj - Gamma^m_kj F_im
    nF = (dF - np.einsum("...mki,...mj->...ijk", Gam, F0)
          - np.einsum("...mkj,...im->...ijk", Gam, F0))
    if phi_fn is None:
        phi0 = np.zeros(q.shape[:-1])
        dphi = np.zeros(q.shape)
        ddphi = np.zeros(q.shape + (n,))
    else:
        ph = _field_jets(phi_fn, q, 2)
        phi0 = ph.value
        dphi = np.stack([jets.derivative(ph, i).value for i in range(n)], axis=-1)
        ddphi = np.stack([np.stack([jets.derivative(jets.derivative(ph, i), j).value
                                    for j in range(n)], axis=-1) for i in range(n)], axis=-2)
    hess_phi = ddphi - np.einsum("...kij,...k->...ij", Gam, dphi)
    geo.update(A=A0, F=F0, dF=dF, nablaF=nF, phi=phi0, dphi=dphi, hess_phi=hess_phi,
               laplacian_phi=np.einsum("...ij,...ij->...", geo["ginv"], hess_phi))
    return geo


def emd_curvature_closed_form(metric_fn, A_fn, phi_fn, point) -> CurvatureResult:
    """Curvature of ``H = 1/2 g^ij (p-A)_i (p-A)_j + phi`` from classical tensors.

    ``R_ij = -g_im v^k v^l R^m_klj + 1/4 F_ik F_jl g^kl
    + 1/2 v^k (nabla_j F_ki + nabla_i F_kj) + nabla_i nabla_j phi`` with
    ``v = g^-1 (p - A)``. Covariant derivatives reduce to the plain partials
    in normal coordinates. Independent of the jet bracket pipeline.
    """
    point = as_point(point)
    f = emd_fields(metric_fn, A_fn, phi_fn, point.q)
    g, ginv, Rm, F, nF = f["g"], f["ginv"], f["riemann"], f["F"], f["nablaF"]
    v = np.einsum("...kl,...l->...k", ginv, point.p - f["A"])
    grav = -np.einsum("...im,...k,...l,...mklj->...ij", g, v, v, Rm)
    maxwell = 0.25 * np.einsum("...ik,...jl,...kl->...ij", F, F, ginv)
    # nF[..., k, i, j] = nabla_j F_ki
    lorentz = 0.5 * np.einsum("...k,...kij->...ij", v, nF + np.swapaxes(nF, -1, -2))
    R = grav + maxwell + lorentz + f["hess_phi"]
    ricci = np.einsum("...ij,...ij->...", ginv, R)
    return CurvatureResult(g, None, R, ricci, R, None, ginv, v)


# -- tensoriality under configuration-space diffeomorphisms -------------------

class PolynomialDiffeo:
    """``q = offset + M u + Q[u, u] + C[u, u, u]`` with ``u = qt - center``.

    Maps new coordinates ``qt`` to old ones ``q``; the quadratic and cubic
    coefficient tensors are symmetrized on construction.
    """

    def __init__(self, offset, linear, quadratic=None, cubic=None, center=None):
        self.offset = np.asarray(offset, dtype=float)
        self.n = self.offset.size
        n = self.n
        self.M = np.asarray(linear, dtype=float).reshape(n, n)
        Q = np.zeros((n, n, n)) if quadratic is None else np.asarray(quadratic, dtype=float)
        C = np.zeros((n, n, n, n)) if cubic is None else np.asarray(cubic, dtype=float)
        self.Q = 0.5 * (Q + np.swapaxes(Q, 1, 2))
        self.C = sum(np.transpose(C, (0,) + tuple(1 + np.array(pm)))
                     for pm in [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]) / 6.0
        self.center = np.zeros(n) if center is None else np.asarray(center, dtype=float)

    @classmethod
    def random(cls, rng, n, scale=0.15, center=None, offset=None):
        M = np.eye(n) + scale * rng.standard_normal((n, n))
        Q = 0.5 * scale * rng.standard_normal((n, n, n))
        C = 0.25 * scale * rng.standard_normal((n, n, n, n))
        center = np.zeros(n) if center is None else center
        offset = center if offset is None else offset
        return cls(offset, M, Q, C, center)

    def _u(self, qt):
        return [qt[i] - self.center[i] for i in range(self.n)]

    def forward(self, qt):
        u = self._u(qt)
        n = self.n
        out = []
        for m in range(n):
            s = self.offset[m] + sum(self.M[m, r] * u[r] for r in range(n))
            for r in range(n):
                for s_ in range(n):
                    if self.Q[m, r, s_]:
                        s = s + self.Q[m, r, s_] * u[r] * u[s_]
                    for t in range(n):
                        if self.C[m, r, s_, t]:
                            s = s + self.C[m, r, s_, t] * u[r] * u[s_] * u[t]
            out.append(s)
        return out

    def jacobian(self, qt):
        """``J[m][r] = dq^m / dqt^r``."""
        u = self._u(qt)
        n = self.n
        J = []
        for m in range(n):
            row = []
            for r in range(n):
                s = self.M[m, r] + sum(2.0 * self.Q[m, r, s_] * u[s_] for s_ in range(n))
                for s_ in range(n):
                    for t in range(n):
                        if self.C[m, r, s_, t]:
                            s = s + 3.0 * self.C[m, r, s_, t] * u[s_] * u[t]
                row.append(s)
            J.append(row)
        return J

    def second(self, qt):
        """``S[m, r, s] = d^2 q^m / dqt^r dqt^s`` at a numeric point."""
        u = np.asarray(qt, dtype=float) - self.center
        return 2.0 * self.Q + 6.0 * np.einsum("mrst,t->mrs", self.C, u)

    def inverse(self, q, guess=None, tol=1e-14, maxiter=50):
        """Solve ``forward(qt) = q`` for ``qt`` by Newton's method."""
        q = np.asarray(q, dtype=float)
        qt = self.center.copy() if guess is None else np.asarray(guess, dtype=float).copy()
        for _ in range(maxiter):
            r = np.array(self.forward(list(qt)), dtype=float) - q
            if np.max(np.abs(r)) < tol:
                return qt
            J = np.array(self.jacobian(list(qt)), dtype=float)
            qt = qt - np.linalg.solve(J, r)
        r = np.array(self.forward(list(qt)), dtype=float) - q
        if np.max(np.abs(r)) > 1e3 * tol:
            raise IllConditionedError("diffeomorphism inversion did not converge")
        return qt


def transformed_model(model: HamiltonianModel, diffeo) -> HamiltonianModel:
    """``H~(qt, pt) = H(q(qt), p)`` with ``p_j = (dqt^i/dq^j) pt_i``."""
    n = model.n

    def func(qt, pt, params):
        q = diffeo.forward(qt)
        K = jets.matrix_inverse(diffeo.jacobian(qt))  # K[i][j] = dqt^i/dq^j
        p = []
        for j in range(n):
            s = K[0][j] * pt[0]
            for i in range(1, n):
                s = s + K[i][j] * pt[i]
            p.append(s)
        return model.func(q, p, params)

    return HamiltonianModel(n, func, model.params, model.quadratic_in_p,
                            model.time_reversal_symmetric, f"{model.name}~", model.fields)


@dataclass
class TransformCheck:
    R_residual: float
    gamma_residual: float
    new_point: PhasePoint
    J: np.ndarray          # dq/dqt
    K: np.ndarray          # dqt/dq
    original: CurvatureResult
    transformed: CurvatureResult
    dK: np.ndarray = field(repr=False, default=None)  # d/dt (dqt/dq) along the orbit

    def rate_residual(self, xi, xidot):
        """Residual of the vector law for the covariant rate ``xidot + gamma xi``."""
        xi = np.asarray(xi, dtype=float)
        xidot = np.asarray(xidot, dtype=float)
        rate = xidot + self.original.gamma @ xi
        xt = self.K @ xi
        xtdot = self.K @ xidot + self.dK @ xi
        rate_t = xtdot + self.transformed.gamma @ xt
        return float(np.max(np.abs(rate_t - self.K @ rate)))


def transform_check(model: HamiltonianModel, point, diffeo, cond_max: float = 1e8) -> TransformCheck:
    """Compare curvature and connection before/after a change of coordinates.

    ``diffeo`` maps new coordinates to old ones (see :class:`PolynomialDiffeo`).
    Returns max-norm residuals of ``R~ = J^T R J`` and of the connection law
    ``gamma~ = K gamma J + K S (K v)`` with ``J = dq/dqt``, ``K = J^-1``,
    ``S`` the second derivatives of ``q(qt)`` and ``v = dH/dp``.
    """
    point = as_point(point)
    if point.q.ndim != 1:
        raise ValueError("transform_check works on a single phase point")
    qt = diffeo.inverse(point.q)
    J = np.array(diffeo.jacobian(list(qt)), dtype=float)
    if np.linalg.cond(J) > cond_max:
        raise IllConditionedError("diffeomorphism Jacobian is ill-conditioned")
    K = np.linalg.inv(J)
    pt = J.T @ point.p
    new_point = PhasePoint(qt, pt)
    orig = curvature(model, point)
    new = curvature(transformed_model(model, diffeo), new_point)
    S = diffeo.second(qt)
    v = orig.velocity
    vt = K @ v
    R_res = float(np.max(np.abs(new.R - J.T @ orig.R @ J)))
    gam_pred = K @ orig.gamma @ J + np.einsum("lm,mks,s->lk", K, S, vt)
    gam_res = float(np.max(np.abs(new.gamma - gam_pred)))
    # d/dt K = -K (dJ/dt) K with dJ/dt[m, r] = S[m, r, s] vt^s
    dK = -K @ np.einsum("mrs,s->mr", S, vt) @ K
    return TransformCheck(R_res, gam_res, new_point, J, K, orig, new, dK)
