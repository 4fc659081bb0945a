# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: Laguerre-recurrence Wigner grid and SNAIL inner relaxation."""
import numpy as np

from libc.math cimport sin, cos, sqrt, exp, fabs, NAN

cdef extern from "complex.h" nogil:
    double creal(double complex)
    double cimag(double complex)
    double complex conj(double complex)


def wigner_laguerre(double complex[:, ::1] rho, double[::1] xs, double[::1] ys):
    """W[iy, ix] = (2/pi) sum_jk rho_jk (-1)^j <k|D(2 gamma)|j>, gamma = xs[ix] + i ys[iy]."""
    cdef Py_ssize_t S = rho.shape[0]
    cdef Py_ssize_t nx = xs.shape[0], ny = ys.shape[0]
    out_arr = np.empty((ny, nx), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    col_arr = np.empty(S, dtype=np.complex128)
    sq_arr = np.sqrt(np.arange(S, dtype=np.float64))
    cdef double complex[::1] col = col_arr
    cdef double[::1] sq = sq_arr
    cdef Py_ssize_t ix, iy, j, k
    cdef double complex beta, bc, prev, cur, acc, part
    cdef double inv, sign
    with nogil:
        for iy in range(ny):
            for ix in range(nx):
                beta = 2.0 * xs[ix] + 2.0j * ys[iy]
                bc = conj(beta)
                col[0] = exp(-0.5 * (creal(beta) * creal(beta) + cimag(beta) * cimag(beta)))
                for k in range(1, S):
                    col[k] = col[k - 1] * beta / sq[k]
                acc = 0.0
                for k in range(S):
                    acc = acc + rho[0, k] * col[k]
                sign = 1.0
                for j in range(1, S):
                    sign = -sign
                    inv = 1.0 / sq[j]
                    # update in place from the top so col[k-1] still holds column j-1
                    for k in range(S - 1, 0, -1):
                        col[k] = (sq[k] * col[k - 1] - bc * col[k]) * inv
                    col[0] = -bc * col[0] * inv
                    part = 0.0
                    for k in range(S):
                        part = part + rho[j, k] * col[k]
                    acc = acc + sign * part
                out[iy, ix] = 0.6366197723675814 * creal(acc)
    return out_arr


cdef inline int _relax(double phi, double phi_ext, double beta, double r,
                       double *s, int max_iter) nogil:
    cdef double x = s[0], a, g, h, step
    cdef int it
    for it in range(max_iter):
        a = (phi_ext - x) / 3.0
        g = -r * (phi - x) + beta * sin(x) - sin(a)
        h = r + beta * cos(x) + cos(a) / 3.0
        if h <= 0.0:
            return 1
        step = g / h
        if step > 0.5:
            step = 0.5
        elif step < -0.5:
            step = -0.5
        x -= step
        if fabs(step) < 1e-15 * (1.0 + fabs(x)):
            s[0] = x
            return 0
    s[0] = x
    return 1 if fabs(step) > 1e-12 else 0


def snail_effective_delta(double[::1] phis, double phi_ext, double beta, double r,
                          double phi_m, double s_m):
    """Relax the SNAIL phase at each phi (continuation in the given order, starting
    from s_m) and return (U_eff(phi) - U_eff(phi_m)) / EJ and the relaxed phases.
    Non-converged points are NaN."""
    cdef Py_ssize_t n = phis.shape[0], i
    delta_arr = np.empty(n, dtype=np.float64)
    s_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] delta = delta_arr
    cdef double[::1] sv = s_arr
    cdef double s = s_m, x, y, ds, am, a
    cdef int bad
    with nogil:
        for i in range(n):
            bad = _relax(phis[i], phi_ext, beta, r, &s, 200)
            if bad:
                delta[i] = NAN
                sv[i] = NAN
                s = s_m
                continue
            sv[i] = s
            ds = s - s_m
            x = phis[i] - s
            y = phi_m - s_m
            am = (phi_ext - s_m) / 3.0
            a = (phi_ext - s) / 3.0
            delta[i] = (0.5 * r * ((phis[i] - phi_m) - ds) * (x + y)
                        + 2.0 * beta * sin(0.5 * (s + s_m)) * sin(0.5 * ds)
                        + 6.0 * sin(0.5 * (a + am)) * sin(-ds / 6.0))
    return delta_arr, s_arr
