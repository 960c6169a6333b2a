"""Classical Riemannian geometry from a covariant metric function.

Independent of the Hamiltonian pipeline: Christoffel symbols, Riemann,
Ricci and scalar curvature are computed from ``g_ij(q)`` with jets in the
``n`` configuration variables (no finite differences anywhere).

Conventions::

    Gamma^i_jk = 1/2 g^im (d_k g_jm + d_j g_km - d_m g_jk)
    R^l_ijk    = d_j Gamma^l_ik - d_k Gamma^l_ij
                 + Gamma^l_jm Gamma^m_ik - Gamma^l_km Gamma^m_ij
    R_ij       = R^m_imj,   R = g^ij R_ij

With these, the unit sphere has ``R = 2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import jets
from .errors import SingularMetricError


@dataclass(frozen=True)
class MetricField:
    """Covariant metric ``g(q)`` returning an n x n nested sequence."""

    n: int
    g: Callable


def _as_jet(x, space, shape):
    if isinstance(x, jets.Jet):
        return x
    return jets.Jet.constant(np.broadcast_to(np.asarray(x, dtype=float), shape), space)


def metric_jets(metric: MetricField, q, order: int):
    """Metric entries as jets in q (``order`` in the n configuration variables)."""
    q = np.asarray(q, dtype=float)
    qj = jets.jet_variables(q, order)
    space = qj[0].space
    shape = q.shape[:-1]
    g = metric.g(qj)
    n = metric.n
    if len(g) != n or any(len(r) != n for r in g):
        raise SingularMetricError("metric function returned a matrix of the wrong size")
    return [[_as_jet(g[i][j], space, shape) for j in range(n)] for i in range(n)]


def _values(mat):
    return np.stack([np.stack([x.value for x in row], axis=-1) for row in mat], axis=-2)


def check_metric(gval, tol=1e-12):
    gval = np.asarray(gval)
    if not np.allclose(gval, np.swapaxes(gval, -1, -2), rtol=0, atol=1e-12 * (1 + np.abs(gval).max())):
        raise SingularMetricError("metric is not symmetric")
    eig = np.linalg.eigvalsh(gval)
    if np.any(eig[..., 0] <= tol * np.abs(eig).max(axis=-1)):
        raise SingularMetricError("metric is singular or not positive definite")


def christoffel_jets(metric: MetricField, q, order: int = 0):
    """Gamma^i_jk as jets of the given order (g is expanded to order+1)."""
    n = metric.n
    g = metric_jets(metric, q, order + 1)
    check_metric(_values(g))
    g_low = [[jets.truncate(x, order) for x in row] for row in g]
    ginv = jets.matrix_inverse(g_low)
    dg = [[[jets.derivative(g[i][j], k) for k in range(n)] for j in range(n)] for i in range(n)]
    gam = [[[None] * n for _ in range(n)] for _ in range(n)]
    for j in range(n):
        for k in range(j, n):
            lowered = [0.5 * (dg[j][m][k] + dg[k][m][j] - dg[j][k][m]) for m in range(n)]
            for i in range(n):
                s = ginv[i][0] * lowered[0]
                for m in range(1, n):
                    s = s + ginv[i][m] * lowered[m]
                gam[i][j][k] = s
                gam[i][k][j] = s
    return gam


def christoffel(metric: MetricField, q) -> np.ndarray:
    """Array ``G[..., i, j, k] = Gamma^i_jk``."""
    gam = christoffel_jets(metric, q, 0)
    return _stack3(gam)


def _stack3(gam):
    return np.stack([np.stack([np.stack([x.value for x in row], axis=-1) for row in mat], axis=-2)
                     for mat in gam], axis=-3)


def riemann(metric: MetricField, q) -> np.ndarray:
    """Array ``R[..., l, i, j, k] = R^l_ijk``."""
    n = metric.n
    gam = christoffel_jets(metric, q, 1)
    G = _stack3(gam)
    dG = np.stack([_stack3([[[jets.derivative(gam[i][j][k], d) for k in range(n)]
                              for j in range(n)] for i in range(n)]) for d in range(n)], axis=-1)
    # dG[..., l, i, k, j] = d_j Gamma^l_ik
    R = (np.einsum("...likj->...lijk", dG) - np.einsum("...lijk->...lijk", dG)
         + np.einsum("...ljm,...mik->...lijk", G, G) - np.einsum("...lkm,...mij->...lijk", G, G))
    return R


def ricci(metric: MetricField, q) -> np.ndarray:
    return np.einsum("...mimj->...ij", riemann(metric, q))


def metric_value(metric: MetricField, q) -> np.ndarray:
    return _values(metric_jets(metric, q, 0))


def scalar(metric: MetricField, q):
    g = metric_value(metric, q)
    return np.einsum("...ij,...ij->...", np.linalg.inv(g), ricci(metric, q))


def geometry(metric: MetricField, q):
    """Bundle of ``g, g^-1, Gamma, Riemann, Ricci, R`` at ``q``."""
    g = metric_value(metric, q)
    ginv = np.linalg.inv(g)
    G = christoffel(metric, q)
    Rm = riemann(metric, q)
    Ric = np.einsum("...mimj->...ij", Rm)
    return {"g": g, "ginv": ginv, "christoffel": G, "riemann": Rm, "ricci": Ric,
            "scalar": np.einsum("...ij,...ij->...", ginv, Ric)}
