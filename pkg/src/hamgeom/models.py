"""Hamiltonian models: one evaluatable interface for parsed and built-in H(q, p).

Field functions (metric, vector potential, scalar potential) are plain
callables on a sequence ``q`` of jets or arrays. They may use the
elementary functions from :mod:`hamgeom.jets` (``jets.sin`` etc.), which
dispatch on jets and numbers alike. Metrics are supplied COVARIANT,
``g_ij(q)``; the models invert them point by point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import hamlang, jets
from .errors import ModelError


@dataclass(frozen=True)
class PhasePoint:
    """Canonical coordinates; ``q`` and ``p`` may carry leading batch axes."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if q.ndim == 0:
            q = q[None]
        if p.ndim == 0:
            p = p[None]
        if q.shape != p.shape:
            raise ModelError(f"q shape {q.shape} does not match p shape {p.shape}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.q.shape[-1]

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.q, self.p], axis=-1)

    @classmethod
    def from_z(cls, z):
        z = np.asarray(z, dtype=float)
        n = z.shape[-1] // 2
        return cls(z[..., :n], z[..., n:])


def as_point(point, p=None) -> PhasePoint:
    if isinstance(point, PhasePoint):
        return point
    if p is not None:
        return PhasePoint(point, p)
    return PhasePoint.from_z(point)


HamiltonianFn = Callable[[Sequence, Sequence, Mapping], object]


@dataclass(frozen=True)
class HamiltonianModel:
    """H(q, p; params) evaluated as jets in the 2n phase variables.

    ``func(q, p, params)`` receives sequences of jets (or arrays) and returns
    a jet or a scalar. Variable order inside every jet is
    ``(q1..qn, p1..pn)``.
    """

    n: int
    func: HamiltonianFn
    params: Mapping[str, float] = field(default_factory=dict)
    quadratic_in_p: bool = False
    time_reversal_symmetric: bool = False
    name: str = "custom"
    fields: Optional[dict] = None

    def jet(self, point, order: int) -> jets.Jet:
        point = as_point(point)
        if point.n != self.n:
            raise ModelError(f"{self.name} has dimension {self.n}, point has {point.n}")
        zj = jets.jet_variables(point.z, order)
        out = self.func(zj[: self.n], zj[self.n:], self.params)
        if not isinstance(out, jets.Jet):
            out = jets.Jet.constant(np.broadcast_to(out, point.q.shape[:-1]), zj[0].space)
        return out

    def value(self, point):
        point = as_point(point)
        out = self.func(list(np.moveaxis(point.q, -1, 0)), list(np.moveaxis(point.p, -1, 0)),
                        self.params)
        return np.broadcast_to(jets.value_of(out), point.q.shape[:-1]) * 1.0

    def gradient(self, point):
        """``(dH/dq, dH/dp)`` with the variable axis last."""
        j = self.jet(point, 1)
        g = j.coeffs[..., 1:]
        return g[..., : self.n], g[..., self.n:]

    def hessian(self, point):
        """Value, gradient (2n) and Hessian (2n x 2n) in phase variables."""
        j = self.jet(point, 2)
        return hessian_from_jet(j)

    def with_params(self, **params):
        merged = dict(self.params)
        merged.update(params)
        return HamiltonianModel(self.n, self.func, merged, self.quadratic_in_p,
                                self.time_reversal_symmetric, self.name, self.fields)


def hessian_from_jet(j: jets.Jet):
    nv = j.nvars
    c = j.coeffs
    grad = c[..., 1: nv + 1]
    hess = np.empty(c.shape[:-1] + (nv, nv))
    look = j.space.lookup
    for a in range(nv):
        for b in range(a, nv):
            alpha = [0] * nv
            alpha[a] += 1
            alpha[b] += 1
            k = look[tuple(alpha)]
            v = c[..., k] * (2.0 if a == b else 1.0)
            hess[..., a, b] = v
            hess[..., b, a] = v
    return c[..., 0], grad, hess


# -- field helpers ---------------------------------------------------------

def _flat_metric(n):
    return lambda q: [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]


def quadratic_hamiltonian(n, metric_fn=None, A_fn=None, phi_fn=None):
    """``H = 1/2 g^{ij}(q)(p_i - A_i)(p_j - A_j) + phi(q)`` as a model function."""
    metric_fn = metric_fn or _flat_metric(n)

    def func(q, p, params):
        g = metric_fn(q)
        if len(g) != n or any(len(r) != n for r in g):
            raise ModelError("metric function returned a matrix of the wrong size")
        ginv = jets.matrix_inverse(g)
        if A_fn is not None:
            A = A_fn(q)
            if len(A) != n:
                raise ModelError("vector potential has the wrong length")
            v = [p[i] - A[i] for i in range(n)]
        else:
            v = list(p)
        h = 0.0
        for i in range(n):
            h = h + 0.5 * ginv[i][i] * v[i] * v[i]
            for j in range(i + 1, n):
                h = h + ginv[i][j] * v[i] * v[j]
        if phi_fn is not None:
            h = h + phi_fn(q)
        return h

    return func


def field_from_expr(source: str, n: int, params: Optional[Mapping[str, float]] = None):
    """Jet-evaluatable scalar field in ``q1..qn`` from an expression string."""
    params = dict(params or {})
    ast = hamlang.parse(source, n, params)
    if any(v.kind == "p" for v in hamlang.variables(ast)):
        raise ModelError(f"field expression {source!r} must not depend on momenta")
    return lambda q: hamlang.evaluate(ast, q, None, params)


def metric_from_exprs(rows, n, params=None):
    cells = [[field_from_expr(str(e), n, params) for e in row] for row in rows]
    if len(cells) != n or any(len(r) != n for r in cells):
        raise ModelError("metric expression matrix has the wrong size")
    return lambda q: [[c(q) for c in row] for row in cells]


def vector_from_exprs(items, n, params=None):
    cells = [field_from_expr(str(e), n, params) for e in items]
    if len(cells) != n:
        raise ModelError("vector potential expression has the wrong length")
    return lambda q: [c(q) for c in cells]


# -- built-in families -----------------------------------------------------

def free(n: int = 1) -> HamiltonianModel:
    return HamiltonianModel(n, quadratic_hamiltonian(n), {}, True, True, "free",
                            {"metric": _flat_metric(n)})


def sho(n: int = 1, omega=1.0) -> HamiltonianModel:
    w = np.broadcast_to(np.asarray(omega, dtype=float), (n,)).copy()

    def phi(q):
        return sum(0.5 * w[i] ** 2 * q[i] * q[i] for i in range(n))

    return HamiltonianModel(n, quadratic_hamiltonian(n, phi_fn=phi), {"omega": w}, True, True,
                            "sho", {"metric": _flat_metric(n), "phi": phi})


def inverted_sho(omega=1.0) -> HamiltonianModel:
    w = float(omega)

    def phi(q):
        return -0.5 * w * w * q[0] * q[0]

    return HamiltonianModel(1, quadratic_hamiltonian(1, phi_fn=phi), {"omega": w}, True, True,
                            "inverted_sho", {"metric": _flat_metric(1), "phi": phi})


def riemannian(metric_fn, n: int) -> HamiltonianModel:
    return HamiltonianModel(n, quadratic_hamiltonian(n, metric_fn), {}, True, True, "riemannian",
                            {"metric": metric_fn})


def magnetic_riemannian(metric_fn, A_fn, n: int) -> HamiltonianModel:
    return HamiltonianModel(n, quadratic_hamiltonian(n, metric_fn, A_fn), {}, True, False,
                            "magnetic_riemannian", {"metric": metric_fn, "A": A_fn})


def emd(metric_fn, A_fn, phi_fn, n: int) -> HamiltonianModel:
    metric_fn = metric_fn or _flat_metric(n)
    return HamiltonianModel(n, quadratic_hamiltonian(n, metric_fn, A_fn, phi_fn), {}, True,
                            A_fn is None, "emd", {"metric": metric_fn, "A": A_fn, "phi": phi_fn})


def constant_field(B: float) -> HamiltonianModel:
    """Planar particle in a uniform field ``B`` in the symmetric gauge.

    ``A = (-B y / 2, B x / 2)`` so that ``F_xy = B`` and the motion obeys
    ``x'' = B y'``, ``y'' = -B x'`` (cyclotron frequency ``B``).
    """
    B = float(B)

    def A(q):
        return [-0.5 * B * q[1], 0.5 * B * q[0]]

    return HamiltonianModel(2, quadratic_hamiltonian(2, A_fn=A), {"B": B}, True, False,
                            "constant_field", {"metric": _flat_metric(2), "A": A})


def trap(k1: float, k2: float, k3: float, B: float) -> HamiltonianModel:
    """Penning-trap / Lagrange-point quadratic model in three dimensions.

    ``H = 1/2 (p_x + B y/2)^2 + 1/2 (p_y - B x/2)^2 + 1/2 p_z^2
    + 1/2 (k1 x^2 + k2 y^2 + k3 z^2)``; same gauge as :func:`constant_field`.
    """
    k = (float(k1), float(k2), float(k3))
    B = float(B)

    def A(q):
        return [-0.5 * B * q[1], 0.5 * B * q[0], 0.0]

    def phi(q):
        return 0.5 * (k[0] * q[0] * q[0] + k[1] * q[1] * q[1] + k[2] * q[2] * q[2])

    return HamiltonianModel(3, quadratic_hamiltonian(3, A_fn=A, phi_fn=phi),
                            {"k1": k[0], "k2": k[1], "k3": k[2], "B": B}, True, B == 0.0, "trap",
                            {"metric": _flat_metric(3), "A": A, "phi": phi})


_FAMILIES = {
    "free": free,
    "sho": sho,
    "inverted_sho": inverted_sho,
    "riemannian": riemannian,
    "magnetic_riemannian": magnetic_riemannian,
    "emd": emd,
    "constant_field": constant_field,
    "trap": trap,
}


def builtin(family: str, **params) -> HamiltonianModel:
    """Construct a built-in model family by name."""
    try:
        factory = _FAMILIES[family]
    except KeyError:
        raise ModelError(f"unknown model family {family!r}") from None
    if family == "trap":
        n = params.pop("n", 3)
        if n != 3:
            raise ModelError("trap requires n=3")
    if family == "inverted_sho" and params.pop("n", 1) != 1:
        raise ModelError("inverted_sho is one-dimensional")
    if family == "sho" and "omega" in params:
        w = np.atleast_1d(np.asarray(params["omega"], dtype=float))
        n = params.setdefault("n", w.size)
        if w.size not in (1, n):
            raise ModelError(f"omega has {w.size} entries for n={n}")
    try:
        return factory(**params)
    except TypeError as exc:
        raise ModelError(f"bad parameters for {family}: {exc}") from None


def from_expression(source: str, n: int, params: Optional[Mapping[str, float]] = None,
                    *, detect: bool = True, seed: int = 0) -> HamiltonianModel:
    """Model from an expression in ``q1..qn``, ``p1..pn`` and named parameters."""
    params = dict(params or {})
    ast = hamlang.parse(source, n, params)

    def func(q, p, prm):
        return hamlang.evaluate(ast, q, p, prm)

    model = HamiltonianModel(n, func, params, name="expression", fields={"ast": ast})
    if detect:
        quad, trs = detect_structure(model, seed=seed)
        model = HamiltonianModel(n, func, params, quad, trs, "expression", {"ast": ast})
    return model


def detect_structure(model: HamiltonianModel, samples: int = 8, seed: int = 0, tol: float = 1e-12):
    """Probe ``(quadratic_in_p, time_reversal_symmetric)`` at random points."""
    rng = np.random.default_rng(seed)
    n = model.n
    q = rng.uniform(-0.7, 0.7, (samples, n))
    p = rng.uniform(-0.7, 0.7, (samples, n))
    try:
        j = model.jet(PhasePoint(q, p), 3)
        h_plus = model.value(PhasePoint(q, p))
        h_minus = model.value(PhasePoint(q, -p))
    except (ArithmeticError, ValueError):
        return False, False
    third = j.space.degrees == 3
    p_only = np.all(j.space.indices[:, :n] == 0, axis=1)
    cubic = np.max(np.abs(j.coeffs[..., third & p_only]), initial=0.0)
    scale = 1.0 + np.max(np.abs(h_plus))
    return bool(cubic <= tol * scale), bool(np.max(np.abs(h_plus - h_minus)) <= tol * scale)
