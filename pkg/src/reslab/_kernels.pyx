# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: K0 evaluation and the hanger-mode S21 model/Jacobian.

Same API as reslab._pykernels; selected at import by reslab._backend.
"""
import numpy as np

from libc.math cimport exp, log, sqrt, cos, sin

from reslab._k0_coeffs import EULER_GAMMA, K0_CHEB, SERIES_CUTOFF, UNDERFLOW_X

BACKEND = "cython"

DEF MAX_CHEB = 64

cdef double _cheb[MAX_CHEB]
cdef int _ncheb = len(K0_CHEB)
cdef double _gamma = EULER_GAMMA
cdef double _cutoff = SERIES_CUTOFF
cdef double _underflow = UNDERFLOW_X

for _i, _c in enumerate(K0_CHEB):
    _cheb[_i] = _c


cdef inline double _k0_series(double x) noexcept nogil:
    cdef double q = 0.25 * x * x
    cdef double term = 1.0, i0 = 1.0, tail = 0.0, harmonic = 0.0
    cdef int k = 0
    while True:
        k += 1
        term *= q / (k * k)
        harmonic += 1.0 / k
        i0 += term
        tail += harmonic * term
        if term < 1e-18 * i0:
            break
    return -(log(0.5 * x) + _gamma) * i0 + tail


cdef inline double _k0e_cheb(double x) noexcept nogil:
    cdef double t = 4.0 / x - 1.0
    cdef double b1 = 0.0, b2 = 0.0, tmp
    cdef int i
    for i in range(_ncheb - 1, 0, -1):
        tmp = b1
        b1 = 2.0 * t * b1 - b2 + _cheb[i]
        b2 = tmp
    return (t * b1 - b2 + _cheb[0]) / sqrt(x)


cdef inline double _k0(double x) noexcept nogil:
    if x < _cutoff:
        return _k0_series(x)
    if x > _underflow:
        return 0.0
    return _k0e_cheb(x) * exp(-x)


cdef inline double _k0e(double x) noexcept nogil:
    if x < _cutoff:
        return _k0_series(x) * exp(x)
    return _k0e_cheb(x)


def k0(double x):
    if not x > 0.0:
        raise ValueError(f"K0 is defined for x > 0, got {x!r}")
    return _k0(x)


def k0e(double x):
    """exp(x) * K0(x); finite for all x > 0."""
    if not x > 0.0:
        raise ValueError(f"K0 is defined for x > 0, got {x!r}")
    return _k0e(x)


def _check_domain(const double[::1] xv):
    cdef Py_ssize_t i
    for i in range(xv.shape[0]):
        if not xv[i] > 0.0:
            raise ValueError(f"K0 is defined for x > 0, got {xv[i]!r}")


def k0_array(x):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] xv = arr.ravel()
    _check_domain(xv)
    out = np.empty(xv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(xv.shape[0]):
            ov[i] = _k0(xv[i])
    return out.reshape(arr.shape)


def k0e_array(x):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] xv = arr.ravel()
    _check_domain(xv)
    out = np.empty(xv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(xv.shape[0]):
            ov[i] = _k0e(xv[i])
    return out.reshape(arr.shape)


def hanger_s21(f, double b_amp, double phi_off, double q_loaded, double q_ext,
               double f_c, double df):
    """Real and imaginary parts of the hanger-mode transmission at frequencies ``f``."""
    cdef const double[::1] fv = np.ascontiguousarray(f, dtype=np.float64)
    cdef Py_ssize_t n = fv.shape[0], i
    re = np.empty(n)
    im = np.empty(n)
    cdef double[::1] rv = re
    cdef double[::1] iv = im
    cdef double a = q_loaded / q_ext
    cdef double bb = 2.0 * q_loaded * df / f_c
    cdef double kr = b_amp * cos(phi_off), ki = b_amp * sin(phi_off)
    cdef double x, d, u, v
    with nogil:
        for i in range(n):
            x = 2.0 * q_loaded * (fv[i] - f_c) / f_c
            d = 1.0 + x * x
            u = 1.0 - (a - bb * x) / d
            v = (bb + a * x) / d
            rv[i] = kr * u - ki * v
            iv[i] = ki * u + kr * v
    return re, im


def hanger_jacobian(f, double b_amp, double phi_off, double q_loaded, double q_ext,
                    double f_c, double df):
    """Jacobian of the stacked (Re, Im) model w.r.t. (B, phi, Q, Qext, fc, df)."""
    cdef const double[::1] fv = np.ascontiguousarray(f, dtype=np.float64)
    cdef Py_ssize_t n = fv.shape[0], i
    out = np.empty((2 * n, 6))
    cdef double[:, ::1] jv = out
    cdef double complex k = b_amp * (cos(phi_off) + 1j * sin(phi_off))
    cdef double complex num = q_loaded / q_ext - 2j * q_loaded * df / f_c
    cdef double complex dnum_dfc = 2j * q_loaded * df / (f_c * f_c)
    cdef double complex dfdf = 2j * q_loaded / f_c
    cdef double complex den, w, s, g, c2, c3, c4, c5
    cdef double x, dx_dfc
    with nogil:
        for i in range(n):
            x = 2.0 * q_loaded * (fv[i] - f_c) / f_c
            den = 1.0 + 1j * x
            w = num / den
            s = k * (1.0 - w)
            g = w / den
            c2 = -k * (w / q_loaded - g * 1j * (x / q_loaded))
            c3 = k * (q_loaded / (q_ext * q_ext)) / den
            dx_dfc = -2.0 * q_loaded * fv[i] / (f_c * f_c)
            c4 = -k * (dnum_dfc / den - g * 1j * dx_dfc)
            c5 = k * dfdf / den
            jv[i, 0] = (s / b_amp).real
            jv[n + i, 0] = (s / b_amp).imag
            jv[i, 1] = -s.imag
            jv[n + i, 1] = s.real
            jv[i, 2] = c2.real
            jv[n + i, 2] = c2.imag
            jv[i, 3] = c3.real
            jv[n + i, 3] = c3.imag
            jv[i, 4] = c4.real
            jv[n + i, 4] = c4.imag
            jv[i, 5] = c5.real
            jv[n + i, 5] = c5.imag
    return out
