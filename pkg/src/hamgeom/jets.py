"""Truncated multivariate Taylor arithmetic ("jets") up to total order 4.

A :class:`Jet` holds the Taylor coefficients of a scalar function of
``nvars`` variables around a base point, truncated at total degree
``order``. Coefficients are stored densely, one per multi-index ``alpha``
with ``|alpha| <= order``, in *graded-lexicographic* order:

* multi-indices are grouped by total degree ``0, 1, ..., order``;
* within one degree they are sorted lexicographically in *descending*
  order of the exponent tuple, so for two variables and degree 2 the
  order is ``(2, 0), (1, 1), (0, 2)``.

Because of the grading, truncating to a lower order is a prefix slice.
Every other module addresses coefficients through :class:`JetSpace`.

Coefficient arrays may carry leading batch dimensions: ``coeffs`` has
shape ``batch_shape + (space.size,)``. All arithmetic is elementwise over
the batch, which is how the geometry pipeline evaluates many phase points
in one pass.
"""

from __future__ import annotations

import functools
import math
import os
from numbers import Integral, Number

import numpy as np

from .errors import JetDomainError

MAX_ORDER = 4


def _load_kernel():
    if os.environ.get("HAMGEOM_PURE_PYTHON", "") not in ("", "0"):
        from . import _kernels_py
        return _kernels_py.mul_truncated, "python"
    try:
        from . import _kernels
    except ImportError:
        from . import _kernels_py
        return _kernels_py.mul_truncated, "python"
    return _kernels.mul_truncated, "cython"


_mul_kernel, KERNEL_BACKEND = _load_kernel()


def _multi_indices(nvars, degree):
    if nvars == 1:
        yield (degree,)
        return
    for first in range(degree, -1, -1):
        for rest in _multi_indices(nvars - 1, degree - first):
            yield (first,) + rest


class JetSpace:
    """Index tables for jets with a given number of variables and order."""

    def __init__(self, nvars: int, order: int):
        if nvars < 1:
            raise ValueError("nvars must be positive")
        if not 0 <= order <= MAX_ORDER:
            raise ValueError(f"order must lie in 0..{MAX_ORDER}, got {order}")
        self.nvars = nvars
        self.order = order
        idx = [a for d in range(order + 1) for a in _multi_indices(nvars, d)]
        self.indices = np.array(idx, dtype=np.int64).reshape(len(idx), nvars)
        self.lookup = {a: k for k, a in enumerate(idx)}
        self.size = len(idx)
        self.degrees = self.indices.sum(axis=1)
        self.factorials = np.array(
            [math.prod(math.factorial(e) for e in a) for a in idx], dtype=float)
        # prefix length holding all coefficients of degree <= m
        self.prefix = [math.comb(nvars + m, m) for m in range(order + 1)]

        left, right, target = [], [], []
        for i, ai in enumerate(idx):
            di = self.degrees[i]
            for j, aj in enumerate(idx):
                if di + self.degrees[j] > order:
                    continue
                left.append(i)
                right.append(j)
                target.append(self.lookup[tuple(x + y for x, y in zip(ai, aj))])
        perm = np.argsort(np.asarray(target), kind="stable")
        self.left = np.ascontiguousarray(np.asarray(left, dtype=np.intc)[perm])
        self.right = np.ascontiguousarray(np.asarray(right, dtype=np.intc)[perm])
        self.target = np.ascontiguousarray(np.asarray(target, dtype=np.intc)[perm])

        # d/dx_a maps degree <= order-1 coefficient beta to (beta_a+1) c[beta+e_a]
        self.deriv_src = []
        self.deriv_fac = []
        if order > 0:
            for a in range(nvars):
                src, fac = [], []
                for beta in idx[: self.prefix[order - 1]]:
                    up = list(beta)
                    up[a] += 1
                    src.append(self.lookup[tuple(up)])
                    fac.append(beta[a] + 1.0)
                self.deriv_src.append(np.array(src, dtype=np.int64))
                self.deriv_fac.append(np.array(fac))

    def index(self, alpha) -> int:
        try:
            return self.lookup[tuple(int(x) for x in alpha)]
        except KeyError:
            raise ValueError(f"multi-index {tuple(alpha)} not in {self}") from None

    def unit(self, var: int) -> int:
        """Coefficient index of the first-degree monomial ``x_var``."""
        return 1 + var

    def __repr__(self):
        return f"JetSpace(nvars={self.nvars}, order={self.order})"


@functools.lru_cache(maxsize=None)
def jet_space(nvars: int, order: int) -> JetSpace:
    return JetSpace(nvars, order)


def _is_scalar_like(x):
    return isinstance(x, (Number, np.ndarray, np.number))


class Jet:
    """Truncated Taylor expansion with optional leading batch dimensions."""

    __slots__ = ("coeffs", "space")
    __array_priority__ = 1000

    def __init__(self, coeffs, space: JetSpace):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1:] != (space.size,):
            raise ValueError(
                f"coefficient array of shape {coeffs.shape} does not fit {space}")
        self.coeffs = coeffs
        self.space = space

    # -- construction -------------------------------------------------
    @classmethod
    def constant(cls, value, space: JetSpace) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (space.size,))
        c[..., 0] = value
        return cls(c, space)

    # -- accessors ----------------------------------------------------
    @property
    def nvars(self) -> int:
        return self.space.nvars

    @property
    def order(self) -> int:
        return self.space.order

    @property
    def batch_shape(self):
        return self.coeffs.shape[:-1]

    @property
    def value(self):
        return self.coeffs[..., 0]

    def __float__(self):
        return float(self.coeffs[..., 0])

    def __repr__(self):
        return f"Jet(nvars={self.nvars}, order={self.order}, batch={self.batch_shape})"

    # -- arithmetic ---------------------------------------------------
    def _align(self, other):
        if isinstance(other, Jet):
            if other.space.nvars != self.space.nvars:
                raise ValueError("jets live in different numbers of variables")
            if other.space.order == self.space.order:
                return self, other
            m = min(self.order, other.order)
            return truncate(self, m), truncate(other, m)
        return NotImplemented

    def _shift(self, value, sign=1.0):
        value = np.asarray(value, dtype=float)
        shape = np.broadcast_shapes(self.batch_shape, value.shape)
        c = np.array(np.broadcast_to(self.coeffs, shape + (self.space.size,)))
        c[..., 0] += sign * value
        return Jet(c, self.space)

    def _scale(self, value):
        value = np.asarray(value, dtype=float)
        return Jet(self.coeffs * value[..., None], self.space)

    def __add__(self, other):
        if isinstance(other, Jet):
            a, b = self._align(other)
            return Jet(a.coeffs + b.coeffs, a.space)
        if _is_scalar_like(other):
            return self._shift(other)
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet):
            a, b = self._align(other)
            return Jet(a.coeffs - b.coeffs, a.space)
        if _is_scalar_like(other):
            return self._shift(other, -1.0)
        return NotImplemented

    def __rsub__(self, other):
        if _is_scalar_like(other):
            return (-self)._shift(other)
        return NotImplemented

    def __neg__(self):
        return Jet(-self.coeffs, self.space)

    def __pos__(self):
        return self

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = self._align(other)
            return _mul(a, b)
        if _is_scalar_like(other):
            return self._scale(other)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * reciprocal(other)
        if _is_scalar_like(other):
            other = np.asarray(other, dtype=float)
            if np.any(other == 0):
                raise JetDomainError("division by zero")
            return self._scale(1.0 / other)
        return NotImplemented

    def __rtruediv__(self, other):
        if _is_scalar_like(other):
            return reciprocal(self)._scale(other)
        return NotImplemented

    def __pow__(self, exponent):
        if not isinstance(exponent, Integral):
            if isinstance(exponent, float) and exponent.is_integer():
                exponent = int(exponent)
            else:
                raise TypeError("jets support integer exponents only")
        if exponent < 0:
            return reciprocal(self) ** (-exponent)
        result = None
        base = self
        while exponent:
            if exponent & 1:
                result = base if result is None else result * base
            exponent >>= 1
            if exponent:
                base = base * base
        if result is None:
            return Jet.constant(np.ones(self.batch_shape), self.space)
        return result


def _mul(a: Jet, b: Jet) -> Jet:
    space = a.space
    ca, cb = a.coeffs, b.coeffs
    if ca.shape != cb.shape:
        ca, cb = np.broadcast_arrays(ca, cb)
    shape = ca.shape
    ca = np.ascontiguousarray(ca.reshape(-1, space.size))
    cb = np.ascontiguousarray(cb.reshape(-1, space.size))
    out = np.zeros_like(ca)
    _mul_kernel(ca, cb, space.left, space.right, space.target, out)
    return Jet(out.reshape(shape), space)


# -- structural operations ------------------------------------------------

def jet_variable(index: int, value, nvars: int, order: int) -> Jet:
    """The coordinate function ``x_index`` seeded at ``value``."""
    if not 0 <= index < nvars:
        raise IndexError(f"variable index {index} out of range for nvars={nvars}")
    space = jet_space(nvars, order)
    jet = Jet.constant(value, space)
    if order >= 1:
        jet.coeffs[..., space.unit(index)] = 1.0
    return jet


def jet_variables(values, order: int):
    """Seed one jet variable per entry of the last axis of ``values``."""
    values = np.asarray(values, dtype=float)
    nvars = values.shape[-1]
    return [jet_variable(k, values[..., k], nvars, order) for k in range(nvars)]


def truncate(jet: Jet, order: int) -> Jet:
    if order > jet.order:
        raise ValueError("cannot raise the order of a jet")
    if order == jet.order:
        return jet
    space = jet_space(jet.nvars, order)
    return Jet(jet.coeffs[..., : space.size], space)


def derivative(jet: Jet, var: int) -> Jet:
    """Partial derivative jet; its order is one less than the input's."""
    if jet.order == 0:
        raise ValueError("cannot differentiate an order-0 jet")
    space = jet.space
    out = jet.coeffs[..., space.deriv_src[var]] * space.deriv_fac[var]
    return Jet(out, jet_space(jet.nvars, jet.order - 1))


def extract_partial(jet: Jet, alpha):
    """The mixed partial derivative ``d^alpha f`` at the base point."""
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != jet.nvars:
        raise ValueError("multi-index length does not match nvars")
    if any(a < 0 for a in alpha):
        raise ValueError("negative exponent in multi-index")
    if sum(alpha) > jet.order:
        raise ValueError(f"|alpha|={sum(alpha)} exceeds jet order {jet.order}")
    k = jet.space.lookup[alpha]
    return jet.coeffs[..., k] * jet.space.factorials[k]


def coefficient(jet: Jet, alpha):
    return jet.coeffs[..., jet.space.index(alpha)]


# -- elementary functions -------------------------------------------------

def _compose(x: Jet, series) -> Jet:
    """Evaluate ``sum_m series[m] * (x - x0)^m`` (Horner in the shift)."""
    order = x.order
    if order == 0:
        return Jet.constant(series[0], x.space)
    h = Jet(x.coeffs.copy(), x.space)
    h.coeffs[..., 0] = 0.0
    result = h._scale(series[order])
    for m in range(order - 1, 0, -1):
        result = (result._shift(series[m])) * h
    return result._shift(series[0])


def _series_sin(x0, order):
    s, c = np.sin(x0), np.cos(x0)
    cyc = [s, c, -s, -c]
    return [cyc[m % 4] / math.factorial(m) for m in range(order + 1)]


def _series_cos(x0, order):
    s, c = np.sin(x0), np.cos(x0)
    cyc = [c, -s, -c, s]
    return [cyc[m % 4] / math.factorial(m) for m in range(order + 1)]


def _series_exp(x0, order):
    e = np.exp(x0)
    return [e / math.factorial(m) for m in range(order + 1)]


def _series_log(x0, order):
    if np.any(x0 <= 0):
        raise JetDomainError("log of a non-positive constant term")
    out = [np.log(x0)]
    for m in range(1, order + 1):
        out.append((-1.0) ** (m + 1) / (m * x0**m))
    return out


def _series_sqrt(x0, order):
    if np.any(x0 < 0) or (order > 0 and np.any(x0 == 0)):
        raise JetDomainError("sqrt of a non-positive constant term")
    r = np.sqrt(x0)
    out = [r]
    binom = 1.0
    for m in range(1, order + 1):
        binom *= (0.5 - (m - 1)) / m
        out.append(binom * r / x0**m)
    return out


def _series_recip(x0, order):
    if np.any(x0 == 0):
        raise JetDomainError("division by a zero constant term")
    return [(-1.0) ** m / x0 ** (m + 1) for m in range(order + 1)]


def _elementary(series_fn, scalar_fn):
    def fn(x):
        if isinstance(x, Jet):
            return _compose(x, series_fn(x.value, x.order))
        x0 = np.asarray(x, dtype=float)
        out = series_fn(x0, 0)[0]
        return float(out) if np.ndim(out) == 0 and not isinstance(x, np.ndarray) else out
    fn.__name__ = scalar_fn
    return fn


sin = _elementary(_series_sin, "sin")
cos = _elementary(_series_cos, "cos")
exp = _elementary(_series_exp, "exp")
log = _elementary(_series_log, "log")
sqrt = _elementary(_series_sqrt, "sqrt")
reciprocal = _elementary(_series_recip, "reciprocal")


def _pow_int(x, n):
    if isinstance(n, Jet) or not float(n).is_integer():
        raise TypeError("pow_int needs an integer exponent")
    return x ** int(n)


_OPS = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / b,
    "pow_int": _pow_int,
    "neg": lambda a: -a,
    "sin": sin,
    "cos": cos,
    "exp": exp,
    "log": log,
    "sqrt": sqrt,
}


def jet_compose(op: str, *args):
    """Apply a named operation to jets (or scalars); see ``_OPS`` for names."""
    try:
        fn = _OPS[op]
    except KeyError:
        raise ValueError(f"unknown jet operation {op!r}") from None
    jets = [a for a in args if isinstance(a, Jet)]
    if jets:
        first = jets[0].space
        for j in jets[1:]:
            if j.space is not first:
                raise ValueError("jet_compose arguments must share nvars and order")
    return fn(*args)


# -- small dense linear algebra over jets --------------------------------

def matrix_inverse(rows):
    """Gauss-Jordan inverse of a square matrix whose entries are jets or scalars.

    No pivoting: intended for symmetric positive definite input, where the
    leading constant terms are nonzero.
    """
    n = len(rows)
    a = [list(r) + [1.0 if i == j else 0.0 for j in range(n)] for i, r in enumerate(rows)]
    for col in range(n):
        piv = a[col][col]
        inv = reciprocal(piv)
        a[col] = [x * inv for x in a[col]]
        for r in range(n):
            if r == col:
                continue
            f = a[r][col]
            if _is_zero(f):
                continue
            a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return [row[n:] for row in a]


def matrix_det(rows):
    n = len(rows)
    if n == 1:
        return rows[0][0]
    if n == 2:
        return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    total = 0.0
    for j in range(n):
        minor = [r[:j] + r[j + 1:] for r in rows[1:]]
        term = rows[0][j] * matrix_det(minor)
        total = total + term if j % 2 == 0 else total - term
    return total


def _is_zero(x):
    return not isinstance(x, Jet) and np.all(np.asarray(x) == 0)


def value_of(x):
    """Constant term of a jet, or the input itself for plain numbers."""
    return x.value if isinstance(x, Jet) else np.asarray(x, dtype=float)
