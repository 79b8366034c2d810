# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled ARD squared-exponential kernel evaluations.

These loops dominate the per-step cost of the closed-loop simulation
(one kernel matrix per agent data set per step), so they are implemented
without temporaries. `coragp.backend` falls back to a NumPy version when
this module is not built.
"""

from libc.math cimport exp, fabs, sqrt


def kernel_matrix_impl(double[:, ::1] P, double[:, ::1] Q, double sigma_r,
                       double[::1] inv_ls, double[:, ::1] out):
    """Fill out[a, b] = sigma_r^2 exp(-0.5 sum_j inv_ls[j]^2 (P[a,j]-Q[b,j])^2)."""
    cdef Py_ssize_t M = P.shape[0]
    cdef Py_ssize_t nq = Q.shape[0]
    cdef Py_ssize_t D = P.shape[1]
    cdef double s2 = sigma_r * sigma_r
    cdef Py_ssize_t a, b, j
    cdef double acc, d
    for a in range(M):
        for b in range(nq):
            acc = 0.0
            for j in range(D):
                d = inv_ls[j] * (P[a, j] - Q[b, j])
                acc += d * d
            out[a, b] = s2 * exp(-0.5 * acc)


def kernel_vector_impl(double[:, ::1] P, double[::1] p, double sigma_r,
                       double[::1] inv_ls, double[::1] out):
    """Fill out[a] = sigma_r^2 exp(-0.5 sum_j inv_ls[j]^2 (P[a,j]-p[j])^2)."""
    cdef Py_ssize_t M = P.shape[0]
    cdef Py_ssize_t D = P.shape[1]
    cdef double s2 = sigma_r * sigma_r
    cdef Py_ssize_t a, j
    cdef double acc, d
    for a in range(M):
        acc = 0.0
        for j in range(D):
            d = inv_ls[j] * (P[a, j] - p[j])
            acc += d * d
        out[a] = s2 * exp(-0.5 * acc)


cdef double _SQRT_2PI = 2.5066282746310002


def cora_avg_weights_impl(double[:, ::1] kcat, Py_ssize_t[::1] offsets,
                          double sigma_g, double[:, ::1] out):
    """Average-correlation aggregation weights for a block of queries.

    kcat stacks the per-neighbor kernel vectors row-wise: rows
    offsets[l]:offsets[l+1] hold neighbor l's kernel vector values for every
    query column. out[l, b] receives the normalized weight of neighbor l at
    query b. The Gaussian transform uses the peak of the normalized mean
    correlations per query.
    """
    cdef Py_ssize_t n = offsets.shape[0] - 1
    cdef Py_ssize_t nq = kcat.shape[1]
    cdef Py_ssize_t l, b, a
    cdef double acc, total, peak, w, wsum, z
    cdef double inv_two_sg2 = 1.0 / (2.0 * sigma_g * sigma_g)
    cdef double coef = 1.0 / (sigma_g * _SQRT_2PI)
    for l in range(n):
        for b in range(nq):
            acc = 0.0
            for a in range(offsets[l], offsets[l + 1]):
                acc += kcat[a, b]
            out[l, b] = fabs(acc / (offsets[l + 1] - offsets[l]))
    for b in range(nq):
        total = 0.0
        for l in range(n):
            total += out[l, b]
        peak = 0.0
        for l in range(n):
            z = out[l, b] / total
            out[l, b] = z
            if z > peak:
                peak = z
        wsum = 0.0
        for l in range(n):
            z = out[l, b] - peak
            w = coef * exp(-z * z * inv_two_sg2)
            out[l, b] = w
            wsum += w
        for l in range(n):
            out[l, b] /= wsum
