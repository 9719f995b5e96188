# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled cell-propagation kernel (sequential Magnus steps in log form).

Same contract as :mod:`warpdn._kernel_py`; see that module for the scheme.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, log, sqrt, atan2, floor, M_PI

cnp.import_array()

cdef extern from "complex.h" nogil:
    double complex csqrt(double complex)
    double complex cexp(double complex)
    double creal(double complex)
    double cimag(double complex)
    double complex conj(double complex)
    double cabs(double complex)

cdef double SERIES_CUT = 1e-6


cdef inline void _step(double P0, double P1, double Q0, double Q1, double R0, double R1,
                       double complex z, int inverse, double complex *E, double *g,
                       double complex *dd, double complex *c0o, double complex *s2o) noexcept nogil:
    cdef double complex c0 = Q0 - z * R0
    cdef double complex c1 = Q1 - z * R1
    cdef double complex d = P1 * c0 - P0 * c1
    cdef double complex s2 = d * d + P0 * c0
    cdef double complex s = csqrt(s2)
    cdef double complex ep, ch, sh, half_m
    cdef double gr
    if creal(s) < 0:
        s = -s
    gr = creal(s)
    ep = cexp(1j * cimag(s))
    # exp(-s - g) = conj(ep) * (1 + m) with m = expm1(-2g); keeping m separate
    # preserves tiny real parts of s (complex-step derivatives rely on them)
    half_m = 0.5 * expm1(-2.0 * gr) * conj(ep)
    ch = creal(ep) + half_m
    if cabs(s2) < SERIES_CUT:
        sh = (1.0 + s2 / 6.0 + s2 * s2 / 120.0) * exp(-gr)
    else:
        sh = (1j * cimag(ep) - half_m) / s
    if inverse:
        sh = -sh
    E[0] = ch + sh * d
    E[1] = sh * P0
    E[2] = sh * c0
    E[3] = ch - sh * d
    g[0] = gr
    dd[0] = d
    c0o[0] = c0
    s2o[0] = s2


cdef inline long _zeros(double u0, double v0, double u1, double d, double p0, double s2) noexcept nogil:
    cdef double omega, B, phi
    if s2 < 0:
        omega = sqrt(-s2)
        B = (d * u0 + p0 * v0) / omega
        phi = atan2(B, u0)
        return <long>(floor((omega - phi - 0.5 * M_PI) / M_PI) - floor((-phi - 0.5 * M_PI) / M_PI))
    if (u0 > 0 and u1 <= 0) or (u0 < 0 and u1 >= 0):
        return 1
    return 0


def transfer(double[::1] P0, double[::1] P1, double[::1] Q0, double[::1] Q1,
             double[::1] R0, double[::1] R1, zs):
    zs_arr = np.ascontiguousarray(np.atleast_1d(np.asarray(zs, complex)))
    cdef double complex[::1] zv = zs_arr
    cdef Py_ssize_t nz = zv.shape[0], n = P0.shape[0], iz, k
    T_arr = np.empty((nz, 2, 2), complex)
    L_arr = np.empty(nz)
    C_arr = np.full((nz, 2), -1, dtype=np.int64)
    cdef double complex[:, :, ::1] T = T_arr
    cdef double[::1] Lg = L_arr
    cdef long long[:, ::1] C = C_arr
    cdef double complex E[4]
    cdef double complex a00, a01, a10, a11, b00, b01, b10, b11, d, c0, s2
    cdef double g, logs, m
    cdef long cnt0, cnt1
    cdef bint real
    with nogil:
        for iz in range(nz):
            a00 = 1.0; a01 = 0.0; a10 = 0.0; a11 = 1.0
            logs = 0.0
            cnt0 = 0; cnt1 = 0
            real = cimag(zv[iz]) == 0.0
            for k in range(n):
                _step(P0[k], P1[k], Q0[k], Q1[k], R0[k], R1[k], zv[iz], 0, E, &g, &d, &c0, &s2)
                b00 = E[0] * a00 + E[1] * a10
                b01 = E[0] * a01 + E[1] * a11
                b10 = E[2] * a00 + E[3] * a10
                b11 = E[2] * a01 + E[3] * a11
                if real:
                    cnt0 += _zeros(creal(a00), creal(a10), creal(b00), creal(d), P0[k], creal(s2))
                    cnt1 += _zeros(creal(a01), creal(a11), creal(b01), creal(d), P0[k], creal(s2))
                logs += g
                m = cabs(b00)
                if cabs(b01) > m: m = cabs(b01)
                if cabs(b10) > m: m = cabs(b10)
                if cabs(b11) > m: m = cabs(b11)
                if m > 0:
                    a00 = b00 / m; a01 = b01 / m; a10 = b10 / m; a11 = b11 / m
                    logs += log(m)
                else:
                    a00 = b00; a01 = b01; a10 = b10; a11 = b11
            T[iz, 0, 0] = a00; T[iz, 0, 1] = a01; T[iz, 1, 0] = a10; T[iz, 1, 1] = a11
            Lg[iz] = logs
            if real:
                C[iz, 0] = cnt0
                C[iz, 1] = cnt1
    return T_arr, L_arr, C_arr


def propagate(double[::1] P0, double[::1] P1, double[::1] Q0, double[::1] Q1,
              double[::1] R0, double[::1] R1, z, y0, bint reverse=False):
    cdef Py_ssize_t n = P0.shape[0], k, j
    cdef double complex zc = complex(z)
    Y_arr = np.empty((n + 1, 2), complex)
    L_arr = np.empty(n + 1)
    cdef double complex[:, ::1] Y = Y_arr
    cdef double[::1] Lg = L_arr
    cdef double complex E[4]
    cdef double complex u, v, un, vn, d, c0, s2
    cdef double g, logs = 0.0, m
    u = complex(y0[0]); v = complex(y0[1])
    m = cabs(u)
    if cabs(v) > m: m = cabs(v)
    if m > 0:
        u = u / m; v = v / m; logs = log(m)
    with nogil:
        if not reverse:
            Y[0, 0] = u; Y[0, 1] = v; Lg[0] = logs
            for k in range(n):
                _step(P0[k], P1[k], Q0[k], Q1[k], R0[k], R1[k], zc, 0, E, &g, &d, &c0, &s2)
                un = E[0] * u + E[1] * v
                vn = E[2] * u + E[3] * v
                logs += g
                m = cabs(un)
                if cabs(vn) > m: m = cabs(vn)
                u = un / m; v = vn / m; logs += log(m)
                Y[k + 1, 0] = u; Y[k + 1, 1] = v; Lg[k + 1] = logs
        else:
            Y[n, 0] = u; Y[n, 1] = v; Lg[n] = logs
            for j in range(n):
                k = n - 1 - j
                _step(P0[k], P1[k], Q0[k], Q1[k], R0[k], R1[k], zc, 1, E, &g, &d, &c0, &s2)
                un = E[0] * u + E[1] * v
                vn = E[2] * u + E[3] * v
                logs += g
                m = cabs(un)
                if cabs(vn) > m: m = cabs(vn)
                u = un / m; v = vn / m; logs += log(m)
                Y[k, 0] = u; Y[k, 1] = v; Lg[k] = logs
    return Y_arr, L_arr
