# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops; contract identical to ``lyaprod._pykernels``.

Frames are stored row-wise (one frame vector per row) so every vector is
contiguous.  Orthonormalization is modified Gram-Schmidt run twice, which
keeps the frame orthonormal to working precision for the small k used here.
"""

import numpy as np

from libc.math cimport fabs, log, sqrt, nearbyint


cdef inline double _dot(const double *a, const double *b, Py_ssize_t n) noexcept nogil:
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        s += a[i] * b[i]
    return s


cdef inline void _matvec(const double *a, const double *x, double *y, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double s
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += a[i * n + j] * x[j]
        y[i] = s


cdef int _orthonormalize(double *m, double *diag, Py_ssize_t k, Py_ssize_t n,
                         double floor) noexcept nogil:
    """In-place MGS2 on the k rows of m (each of length n).

    Returns the index of the first row whose residual norm is <= floor, or -1.
    """
    cdef Py_ssize_t j, l, i, rep
    cdef double r, nr
    for j in range(k):
        for rep in range(2):
            for l in range(j):
                r = _dot(&m[l * n], &m[j * n], n)
                for i in range(n):
                    m[j * n + i] -= r * m[l * n + i]
        nr = sqrt(_dot(&m[j * n], &m[j * n], n))
        if nr <= floor:
            return <int>j
        diag[j] = nr
        for i in range(n):
            m[j * n + i] /= nr
    return -1


def top_steps(const double[:, :, ::1] mats, const double[::1] fro, double[::1] x,
              double[::1] out, long every, long count, double rtol):
    cdef Py_ssize_t b = mats.shape[0], n = x.shape[0], s, i
    cdef Py_ssize_t n_out = 0
    cdef double[::1] y = np.empty(n)
    cdef double xn = sqrt(_dot(&x[0], &x[0], n)), ny
    with nogil:
        for s in range(b):
            _matvec(&mats[s, 0, 0], &x[0], &y[0], n)
            ny = sqrt(_dot(&y[0], &y[0], n))
            if ny <= rtol * fro[s] * xn:
                with gil:
                    return s, n_out, count, True
            for i in range(n):
                x[i] = y[i]
            xn = ny
            count += 1
            if count >= every or ny > 1e100 or ny < 1e-100:
                out[n_out] = log(ny)
                n_out += 1
                for i in range(n):
                    x[i] /= ny
                xn = 1.0
                count = 0
    return b, n_out, count, False


def pair_steps(const double[:, :, ::1] mats, const double[::1] fro, double[:, ::1] frame,
               double[::1] out, double rtol):
    cdef Py_ssize_t b = mats.shape[0], n = frame.shape[1], s, i, rep
    cdef double[::1] u = np.empty(n)
    cdef double[::1] v = np.empty(n)
    cdef double nu, nv, r
    with nogil:
        for s in range(b):
            _matvec(&mats[s, 0, 0], &frame[0, 0], &u[0], n)
            _matvec(&mats[s, 0, 0], &frame[1, 0], &v[0], n)
            nu = sqrt(_dot(&u[0], &u[0], n))
            if nu <= rtol * fro[s]:
                with gil:
                    return s, True
            for i in range(n):
                u[i] /= nu
            for rep in range(2):
                r = _dot(&u[0], &v[0], n)
                for i in range(n):
                    v[i] -= r * u[i]
            nv = sqrt(_dot(&v[0], &v[0], n))
            if nv <= rtol * fro[s]:
                with gil:
                    return s, True
            out[s] = log(nu) + log(nv)
            for i in range(n):
                frame[0, i] = u[i]
                frame[1, i] = v[i] / nv
    return b, False


def qr_steps(const double[:, :, ::1] mats, const double[::1] fro, double[:, ::1] frame,
             double[:, ::1] out, double rtol):
    cdef Py_ssize_t b = mats.shape[0], k = frame.shape[0], n = frame.shape[1]
    cdef Py_ssize_t s, j
    cdef double[:, ::1] m = np.empty((k, n))
    cdef double[::1] diag = np.empty(k)
    cdef int bad
    with nogil:
        for s in range(b):
            for j in range(k):
                _matvec(&mats[s, 0, 0], &frame[j, 0], &m[j, 0], n)
            bad = _orthonormalize(&m[0, 0], &diag[0], k, n, rtol * fro[s])
            if bad >= 0:
                with gil:
                    return s, True
            for j in range(k):
                out[s, j] = log(diag[j])
            frame[:, :] = m
    return b, False


cdef void _complement(const double *frame, double *v, Py_ssize_t n) noexcept nogil:
    """Unit vector orthogonal to the n-1 orthonormal rows of frame."""
    cdef Py_ssize_t i, j, rep, best = 0
    cdef double cover, best_cover = 1e300, r, nr
    # start from the coordinate axis least covered by the frame
    for i in range(n):
        cover = 0.0
        for j in range(n - 1):
            cover += frame[j * n + i] * frame[j * n + i]
        if cover < best_cover:
            best_cover = cover
            best = i
    for i in range(n):
        v[i] = 0.0
    v[best] = 1.0
    for rep in range(2):
        for j in range(n - 1):
            r = _dot(&frame[j * n], v, n)
            for i in range(n):
                v[i] -= r * frame[j * n + i]
    nr = sqrt(_dot(v, v, n))
    for i in range(n):
        v[i] /= nr


cdef bint _solve(const double *a, const double *rhs, double *lu, double *z,
                 Py_ssize_t n) noexcept nogil:
    """Solve a^T z = rhs by Gaussian elimination with partial pivoting.

    Returns False on an exact zero pivot.
    """
    cdef Py_ssize_t i, j, c, p
    cdef double t, piv
    for i in range(n):
        for j in range(n):
            lu[i * n + j] = a[j * n + i]
    for i in range(n):
        z[i] = rhs[i]
    for c in range(n):
        p = c
        for i in range(c + 1, n):
            if fabs(lu[i * n + c]) > fabs(lu[p * n + c]):
                p = i
        piv = lu[p * n + c]
        if piv == 0.0:
            return False
        if p != c:
            for j in range(n):
                t = lu[c * n + j]
                lu[c * n + j] = lu[p * n + j]
                lu[p * n + j] = t
            t = z[c]
            z[c] = z[p]
            z[p] = t
        for i in range(c + 1, n):
            t = lu[i * n + c] / piv
            if t != 0.0:
                for j in range(c, n):
                    lu[i * n + j] -= t * lu[c * n + j]
                z[i] -= t * z[c]
    for c in range(n - 1, -1, -1):
        t = z[c]
        for j in range(c + 1, n):
            t -= lu[c * n + j] * z[j]
        z[c] = t / lu[c * n + c]
    return True


def least_steps(const double[:, :, ::1] mats, const double[::1] fro, double[:, ::1] frame,
                double[::1] out, double rtol):
    cdef Py_ssize_t b = mats.shape[0], n = frame.shape[1], k = frame.shape[0]
    cdef Py_ssize_t s, j
    cdef double[::1] v = np.empty(n)
    cdef double[::1] z = np.empty(n)
    cdef double[::1] lu = np.empty(n * n)
    cdef double[:, ::1] m = np.empty((k, n))
    cdef double[::1] diag = np.empty(k)
    cdef double nz
    with nogil:
        for s in range(b):
            _complement(&frame[0, 0], &v[0], n)
            if not _solve(&mats[s, 0, 0], &v[0], &lu[0], &z[0], n):
                with gil:
                    return s, True
            nz = sqrt(_dot(&z[0], &z[0], n))
            if not (1.0 / nz > rtol * fro[s]):
                with gil:
                    return s, True
            for j in range(k):
                _matvec(&mats[s, 0, 0], &frame[j, 0], &m[j, 0], n)
            if _orthonormalize(&m[0, 0], &diag[0], k, n, rtol * fro[s]) >= 0:
                with gil:
                    return s, True
            out[s] = -log(nz)
            frame[:, :] = m
    return b, False


def lcd_scan(const double[::1] x, double gamma, double kappa, double step,
             long i_start, long i_stop):
    cdef Py_ssize_t n = x.shape[0], j
    cdef long i
    cdef double xx = _dot(&x[0], &x[0], n), theta, d2, t, bound, k2 = kappa * kappa
    with nogil:
        for i in range(i_start, i_stop):
            theta = i * step
            bound = gamma * gamma * theta * theta * xx
            if bound > k2:
                bound = k2
            d2 = 0.0
            for j in range(n):
                t = theta * x[j]
                t = t - nearbyint(t)
                d2 += t * t
                if d2 >= bound:
                    break
            if d2 < bound:
                with gil:
                    return i
    return -1
