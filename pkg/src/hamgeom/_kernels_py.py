"""Pure-numpy fallback for :mod:`hamgeom._kernels`."""

import numpy as np


def mul_truncated(a, b, left, right, target, out):
    # triples arrive sorted by target and every target owns at least the
    # pair (0, target), so segment sums line up with reduceat offsets
    prod = a[:, left] * b[:, right]
    starts = np.flatnonzero(np.r_[True, target[1:] != target[:-1]])
    out[:, target[starts]] += np.add.reduceat(prod, starts, axis=1)
