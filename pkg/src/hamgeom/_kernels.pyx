# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for truncated Taylor arithmetic."""

cimport cython


def mul_truncated(const double[:, ::1] a, const double[:, ::1] b,
                  const int[::1] left, const int[::1] right, const int[::1] target,
                  double[:, ::1] out):
    """Accumulate the truncated product of two batches of coefficient rows.

    ``out[s, target[t]] += a[s, left[t]] * b[s, right[t]]`` for every
    triple ``t``. ``out`` must be zeroed by the caller.
    """
    cdef Py_ssize_t nbatch = a.shape[0]
    cdef Py_ssize_t ntrip = left.shape[0]
    cdef Py_ssize_t s, t
    with nogil:
        for s in range(nbatch):
            for t in range(ntrip):
                out[s, target[t]] += a[s, left[t]] * b[s, right[t]]
