# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Cyclic Jacobi rotation sweeps for symmetric eigendecomposition.

Operates in place on a C-contiguous float64 matrix, accumulating the
rotations into a second matrix whose columns end up as eigenvectors.
"""

from libc.math cimport hypot, sqrt


def sweep(double[:, ::1] a, double[:, ::1] v, double off_tol, int max_sweeps):
    """Diagonalize symmetric ``a`` in place; returns sweeps used or -1."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t p, q, k, sweep_idx
    cdef double apq, num, den, h, t, c, s, off, akp, akq

    for sweep_idx in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += 2.0 * a[p, q] * a[p, q]
        if sqrt(off) <= off_tol:
            return sweep_idx
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                # Smaller-root rotation angle zeroing a[p, q]:
                # t = sign(tau)/(|tau| + sqrt(1+tau^2)), tau = num/den,
                # rearranged so tiny apq cannot overflow tau.
                num = a[q, q] - a[p, p]
                den = 2.0 * apq
                h = hypot(num, den)
                if num >= 0.0:
                    t = den / (num + h)
                else:
                    t = den / (num - h)
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = a[p, k]
                    akq = a[q, k]
                    a[p, k] = c * akp - s * akq
                    a[q, k] = s * akp + c * akq
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    akp = v[k, p]
                    akq = v[k, q]
                    v[k, p] = c * akp - s * akq
                    v[k, q] = s * akp + c * akq
    return -1
