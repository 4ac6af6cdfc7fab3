"""Pure-Python/numpy implementations of the hot kernels.

Used when the compiled ``reslab._kernels`` extension is unavailable, and as the
reference the compiled kernels are tested against.
"""
import math

import numpy as np

from reslab._k0_coeffs import EULER_GAMMA, K0_CHEB, SERIES_CUTOFF, UNDERFLOW_X

BACKEND = "python"


def _k0_series(x):
    q = 0.25 * x * x
    term = 1.0
    i0 = 1.0
    tail = 0.0
    harmonic = 0.0
    k = 0
    while True:
        k += 1
        term *= q / (k * k)
        harmonic += 1.0 / k
        i0 += term
        tail += harmonic * term
        if term < 1e-18 * i0:
            break
    return -(math.log(0.5 * x) + EULER_GAMMA) * i0 + tail


def _k0e_cheb(x):
    # Clenshaw recurrence on t = 4/x - 1
    t = 4.0 / x - 1.0
    b1 = 0.0
    b2 = 0.0
    for c in reversed(K0_CHEB[1:]):
        b1, b2 = 2.0 * t * b1 - b2 + c, b1
    return (t * b1 - b2 + K0_CHEB[0]) / math.sqrt(x)


def k0(x):
    if not x > 0.0:
        raise ValueError(f"K0 is defined for x > 0, got {x!r}")
    if x < SERIES_CUTOFF:
        return _k0_series(x)
    if x > UNDERFLOW_X:
        return 0.0
    return _k0e_cheb(x) * math.exp(-x)


def k0e(x):
    """exp(x) * K0(x); finite for all x > 0."""
    if not x > 0.0:
        raise ValueError(f"K0 is defined for x > 0, got {x!r}")
    if x < SERIES_CUTOFF:
        return _k0_series(x) * math.exp(x)
    return _k0e_cheb(x)


def k0_array(x):
    x = np.asarray(x, dtype=float)
    return np.array([k0(v) for v in x.ravel()]).reshape(x.shape)


def k0e_array(x):
    x = np.asarray(x, dtype=float)
    return np.array([k0e(v) for v in x.ravel()]).reshape(x.shape)


def hanger_s21(f, b_amp, phi_off, q_loaded, q_ext, f_c, df):
    """Real and imaginary parts of the hanger-mode transmission at frequencies ``f``."""
    f = np.asarray(f, dtype=float)
    x = 2.0 * q_loaded * (f - f_c) / f_c
    num = q_loaded / q_ext - 2j * q_loaded * df / f_c
    s = b_amp * np.exp(1j * phi_off) * (1.0 - num / (1.0 + 1j * x))
    return s.real, s.imag


def hanger_jacobian(f, b_amp, phi_off, q_loaded, q_ext, f_c, df):
    """Jacobian of the stacked (Re, Im) model w.r.t. (B, phi, Q, Qext, fc, df).

    Returns an array of shape (2*len(f), 6); the first len(f) rows are the
    real parts, the rest the imaginary parts.
    """
    f = np.asarray(f, dtype=float)
    n = f.size
    x = 2.0 * q_loaded * (f - f_c) / f_c
    num = q_loaded / q_ext - 2j * q_loaded * df / f_c
    den = 1.0 + 1j * x
    k = b_amp * np.exp(1j * phi_off)
    w = num / den
    s = k * (1.0 - w)

    cols = np.empty((n, 6), dtype=complex)
    cols[:, 0] = s / b_amp
    cols[:, 1] = 1j * s
    # dN/dQ = N/Q, dx/dQ = x/Q
    cols[:, 2] = -k * (num / q_loaded / den - num * 1j * (x / q_loaded) / den**2)
    cols[:, 3] = k * (q_loaded / q_ext**2) / den
    dx_dfc = -2.0 * q_loaded * f / f_c**2
    dnum_dfc = 2j * q_loaded * df / f_c**2
    cols[:, 4] = -k * (dnum_dfc / den - num * 1j * dx_dfc / den**2)
    cols[:, 5] = k * (2j * q_loaded / f_c) / den

    out = np.empty((2 * n, 6))
    out[:n] = cols.real
    out[n:] = cols.imag
    return out
