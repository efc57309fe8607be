# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-symbol kernels: Gaussian-mixture posterior, MC MSE, MAP."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef inline void _post(double zr, double zi, double s2, double nt, Py_ssize_t m,
                       const double* pr, const double* pim, const double* lp,
                       double* w, double* fr, double* fi, double* g) noexcept nogil:
    cdef Py_ssize_t k
    cdef double v = nt + s2
    cdef double best = -INFINITY
    cdef double e, dr, di, c
    cdef double tot = 0.0, mr = 0.0, mi = 0.0, spread = 0.0
    for k in range(m):
        dr = zr - pr[k]
        di = zi - pim[k]
        e = lp[k] - (dr * dr + di * di) / v
        w[k] = e
        if e > best:
            best = e
    for k in range(m):
        e = exp(w[k] - best)
        w[k] = e
        tot += e
        mr += e * pr[k]
        mi += e * pim[k]
    mr /= tot
    mi /= tot
    for k in range(m):
        dr = pr[k] - mr
        di = pim[k] - mi
        spread += w[k] * (dr * dr + di * di)
    spread /= tot
    if nt == 0.0:
        fr[0] = mr
        fi[0] = mi
        g[0] = spread
        return
    c = s2 / v
    fr[0] = (nt * zr + s2 * mr) / v
    fi[0] = (nt * zi + s2 * mi) / v
    g[0] = nt * c + c * c * spread


cdef class _Alphabet:
    cdef double* pr
    cdef double* pim
    cdef double* lp
    cdef double* work
    cdef Py_ssize_t m

    def __cinit__(self, points, log_priors):
        pts = np.ascontiguousarray(points, dtype=np.complex128)
        lps = np.ascontiguousarray(log_priors, dtype=np.float64)
        self.m = pts.shape[0]
        self.pr = <double*> malloc(self.m * sizeof(double))
        self.pim = <double*> malloc(self.m * sizeof(double))
        self.lp = <double*> malloc(self.m * sizeof(double))
        self.work = <double*> malloc(self.m * sizeof(double))
        if not (self.pr and self.pim and self.lp and self.work):
            raise MemoryError()
        for k in range(self.m):
            self.pr[k] = pts[k].real
            self.pim[k] = pts[k].imag
            self.lp[k] = lps[k]

    def __dealloc__(self):
        free(self.pr)
        free(self.pim)
        free(self.lp)
        free(self.work)


def denoise(z, sigma2, points, log_priors, double n_t):
    cdef const double complex[:] zv = np.ascontiguousarray(z, dtype=np.complex128).ravel()
    cdef Py_ssize_t n = zv.shape[0]
    cdef const double[:] sv = np.broadcast_to(np.asarray(sigma2, dtype=np.float64), (n,))
    f = np.empty(n, dtype=np.complex128)
    g = np.empty(n, dtype=np.float64)
    cdef double complex[::1] fv = f
    cdef double[::1] gv = g
    cdef _Alphabet alpha = _Alphabet(points, log_priors)
    cdef Py_ssize_t i
    cdef double fr, fi, gg
    with nogil:
        for i in range(n):
            _post(zv[i].real, zv[i].imag, sv[i], n_t, alpha.m,
                  alpha.pr, alpha.pim, alpha.lp, alpha.work, &fr, &fi, &gg)
            fv[i] = fr + 1j * fi
            gv[i] = gg
    return f, g


def psi_mse(x, zeta, double sigma2, points, log_priors, double n_t):
    cdef const double complex[:] xv = np.ascontiguousarray(x, dtype=np.complex128)
    cdef const double complex[:] nv = np.ascontiguousarray(zeta, dtype=np.complex128)
    cdef Py_ssize_t n = xv.shape[0]
    cdef _Alphabet alpha = _Alphabet(points, log_priors)
    cdef double sd = sqrt(sigma2)
    cdef double acc = 0.0, gacc = 0.0
    cdef double xr, xi, fr, fi, gg
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            xr = xv[i].real
            xi = xv[i].imag
            _post(xr + sd * nv[i].real, xi + sd * nv[i].imag, sigma2, n_t, alpha.m,
                  alpha.pr, alpha.pim, alpha.lp, alpha.work, &fr, &fi, &gg)
            acc += (fr - xr) * (fr - xr) + (fi - xi) * (fi - xi)
            gacc += gg
    return acc / n, gacc / n


def map_decide(z, variance, points, log_priors):
    cdef const double complex[:] zv = np.ascontiguousarray(z, dtype=np.complex128).ravel()
    cdef Py_ssize_t n = zv.shape[0]
    cdef const double[:] vv = np.broadcast_to(np.asarray(variance, dtype=np.float64), (n,))
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] ov = out
    cdef _Alphabet alpha = _Alphabet(points, log_priors)
    cdef Py_ssize_t i, k, arg
    cdef double best, cost, dr, di
    with nogil:
        for i in range(n):
            best = INFINITY
            arg = 0
            for k in range(alpha.m):
                dr = zv[i].real - alpha.pr[k]
                di = zv[i].imag - alpha.pim[k]
                cost = (dr * dr + di * di) / vv[i] - alpha.lp[k]
                if cost < best:
                    best = cost
                    arg = k
            ov[i] = arg
    return out
