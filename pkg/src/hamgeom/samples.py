"""Registered analytic field configurations used by checks and the CLI.

Every field here is a trigonometric polynomial with integer frequencies,
hence smooth and 2*pi-periodic in each coordinate (usable on a torus).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import jets


class TrigScalar:
    """``c0 + sum_t a_t cos(k_t . q + b_t)`` with integer wave vectors ``k_t``."""

    def __init__(self, const, amps, waves, phases):
        self.const = float(const)
        self.amps = np.asarray(amps, dtype=float)
        self.waves = np.asarray(waves, dtype=int)
        self.phases = np.asarray(phases, dtype=float)

    @classmethod
    def random(cls, rng, n, terms=2, amp=1.0, const=0.0, max_freq=1):
        waves = rng.integers(-max_freq, max_freq + 1, size=(terms, n))
        for w in waves:
            if not w.any():
                w[rng.integers(n)] = 1
        return cls(const, amp * rng.uniform(-1, 1, terms) / terms, waves,
                   rng.uniform(0, 2 * np.pi, terms))

    def __call__(self, q):
        out = self.const
        for a, k, b in zip(self.amps, self.waves, self.phases):
            arg = b
            for i, ki in enumerate(k):
                if ki:
                    arg = arg + float(ki) * q[i]
            out = out + a * jets.cos(arg)
        return out


class TrigMetric:
    """``g_ij = delta_ij + scale * S_ij(q)`` with ``|S_ij| <= 1``; positive definite
    whenever ``scale * n < 1``."""

    def __init__(self, n, cells, scale):
        self.n = n
        self.cells = cells
        self.scale = scale

    @classmethod
    def random(cls, rng, n, scale=0.2, terms=2):
        cells = {}
        for i in range(n):
            for j in range(i, n):
                cells[i, j] = TrigScalar.random(rng, n, terms)
        return cls(n, cells, scale)

    def __call__(self, q):
        n = self.n
        g = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                v = self.scale * self.cells[i, j](q)
                if i == j:
                    v = 1.0 + v
                g[i][j] = v
                g[j][i] = v
        return g


class TrigVector:
    def __init__(self, comps):
        self.comps = comps

    @classmethod
    def random(cls, rng, n, amp=1.0, terms=2):
        return cls([TrigScalar.random(rng, n, terms, amp) for _ in range(n)])

    def __call__(self, q):
        return [c(q) for c in self.comps]


@dataclass
class FieldConfig:
    n: int
    metric: TrigMetric
    A: TrigVector
    phi: TrigScalar


def random_emd(rng, n, metric_scale=0.2, A_amp=1.0, phi_amp=1.0) -> FieldConfig:
    """Random smooth, periodic ``(g, A, phi)`` in ``n`` dimensions."""
    return FieldConfig(n, TrigMetric.random(rng, n, metric_scale), TrigVector.random(rng, n, A_amp),
                       TrigScalar.random(rng, n, 2, phi_amp))


def unit_sphere(q):
    """Round metric on the unit 2-sphere in the (theta, phi) chart."""
    return [[1.0, 0.0], [0.0, jets.sin(q[0]) ** 2]]


def hyperbolic_plane(q):
    """``g = diag(1, exp(2x))``: constant curvature -1, scalar curvature -2."""
    return [[1.0, 0.0], [0.0, jets.exp(2.0 * q[0])]]


def polar_plane(q):
    return [[1.0, 0.0], [0.0, q[0] * q[0]]]


def flat(n):
    return lambda q: [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]


def analytic_2metric(q):
    """A non-symmetric-space analytic metric used as a generic test case."""
    a = 1.0 + 0.3 * jets.sin(q[0]) * jets.cos(q[1])
    b = 0.2 * jets.sin(q[0] + 2.0 * q[1])
    c = 1.2 + 0.25 * jets.cos(2.0 * q[0] - q[1])
    return [[a, b], [b, c]]


NAMED_METRICS = {
    "sphere": (2, unit_sphere),
    "hyperbolic": (2, hyperbolic_plane),
    "polar": (2, polar_plane),
    "analytic2": (2, analytic_2metric),
}
