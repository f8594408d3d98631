# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stencil kernels.

The operator acting on a 3-D grid function ``x`` is

    (A x)[c] = diag[c] x[c] + sum_d  f_d[c] (x[c] - x[c - e_d])
                            + f_d[c + e_d] (x[c] - x[c + e_d])

with periodic index wrap. ``f_d[c]`` is the weight of the edge joining
``c - e_d`` and ``c``; zero weights cut the edge (walls, masked cells).
All loops are sequential so reductions are bit-reproducible.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, isnan

cnp.import_array()


cdef void _apply(const double[:, :, ::1] fx, const double[:, :, ::1] fy,
                 const double[:, :, ::1] fz, const double[:, :, ::1] diag,
                 const double[:, :, ::1] x, double[:, :, ::1] out) noexcept nogil:
    cdef Py_ssize_t n1 = x.shape[0], n2 = x.shape[1], n3 = x.shape[2]
    cdef Py_ssize_t i, j, k, im, ip, jm, jp, km, kp
    cdef double xc, acc
    for i in range(n1):
        im = i - 1 if i > 0 else n1 - 1
        ip = i + 1 if i < n1 - 1 else 0
        for j in range(n2):
            jm = j - 1 if j > 0 else n2 - 1
            jp = j + 1 if j < n2 - 1 else 0
            for k in range(n3):
                km = k - 1 if k > 0 else n3 - 1
                kp = k + 1 if k < n3 - 1 else 0
                xc = x[i, j, k]
                acc = diag[i, j, k] * xc
                acc += fx[i, j, k] * (xc - x[im, j, k]) + fx[ip, j, k] * (xc - x[ip, j, k])
                acc += fy[i, j, k] * (xc - x[i, jm, k]) + fy[i, jp, k] * (xc - x[i, jp, k])
                acc += fz[i, j, k] * (xc - x[i, j, km]) + fz[i, j, kp] * (xc - x[i, j, kp])
                out[i, j, k] = acc


def stencil_apply(fx, fy, fz, diag, x, out=None):
    if out is None:
        out = np.empty_like(x)
    _apply(fx, fy, fz, diag, x, out)
    return out


cdef double _dot(const double* a, const double* b, Py_ssize_t n) noexcept nogil:
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        s += a[i] * b[i]
    return s


def stencil_pcg(fx, fy, fz, diag, b, x, double tol, Py_ssize_t maxiter, null=None):
    """Jacobi-preconditioned CG, in place on ``x``.

    Returns ``(iterations, relative_residual, status)``; status 0 converged,
    1 iteration cap, 2 NaN/breakdown. ``null`` is a unit vector whose
    component is removed from the solution on exit.
    """
    cdef double[:, :, ::1] X = x
    cdef cnp.ndarray[double, ndim=3, mode="c"] dinv = np.asarray(diag) + np.asarray(fx) \
        + np.roll(fx, -1, axis=0) + np.asarray(fy) + np.roll(fy, -1, axis=1) \
        + np.asarray(fz) + np.roll(fz, -1, axis=2)
    cdef cnp.ndarray[double, ndim=3, mode="c"] r = np.empty_like(x)
    cdef cnp.ndarray[double, ndim=3, mode="c"] z = np.empty_like(x)
    cdef cnp.ndarray[double, ndim=3, mode="c"] p = np.empty_like(x)
    cdef cnp.ndarray[double, ndim=3, mode="c"] q = np.empty_like(x)
    cdef double[:, :, ::1] R = r, Z = z, P = p, Q = q
    cdef double* rp = &R[0, 0, 0]
    cdef double* zp = &Z[0, 0, 0]
    cdef double* pp = &P[0, 0, 0]
    cdef double* qp = &Q[0, 0, 0]
    cdef double* xp = &X[0, 0, 0]
    cdef double* dp
    cdef const double[:, :, ::1] B = b
    cdef const double* bp = &B[0, 0, 0]
    cdef Py_ssize_t n = x.size, i, it = 0
    cdef double bnorm, rz, rz_new, alpha, beta, pq, rnorm, c
    cdef int status = 1

    dinv = 1.0 / dinv
    dp = <double*> cnp.PyArray_DATA(dinv)
    bnorm = sqrt(_dot(bp, bp, n))
    if bnorm == 0.0:
        for i in range(n):
            xp[i] = 0.0
        return 0, 0.0, 0

    _apply(fx, fy, fz, diag, X, R)
    for i in range(n):
        rp[i] = bp[i] - rp[i]
    rnorm = sqrt(_dot(rp, rp, n))
    if rnorm <= tol * bnorm:
        status = 0
    else:
        for i in range(n):
            zp[i] = dp[i] * rp[i]
            pp[i] = zp[i]
        rz = _dot(rp, zp, n)
        while it < maxiter:
            it += 1
            _apply(fx, fy, fz, diag, P, Q)
            pq = _dot(pp, qp, n)
            if pq <= 0.0 or isnan(pq):
                status = 2
                break
            alpha = rz / pq
            for i in range(n):
                xp[i] += alpha * pp[i]
                rp[i] -= alpha * qp[i]
            rnorm = sqrt(_dot(rp, rp, n))
            if isnan(rnorm):
                status = 2
                break
            if rnorm <= tol * bnorm:
                status = 0
                break
            for i in range(n):
                zp[i] = dp[i] * rp[i]
            rz_new = _dot(rp, zp, n)
            beta = rz_new / rz
            rz = rz_new
            for i in range(n):
                pp[i] = zp[i] + beta * pp[i]

    cdef double[:, :, ::1] NV
    cdef double* nvp
    if null is not None:
        NV = np.ascontiguousarray(null, dtype=np.float64)
        nvp = &NV[0, 0, 0]
        c = _dot(nvp, xp, n)
        for i in range(n):
            xp[i] -= c * nvp[i]
    return it, rnorm / bnorm, status
