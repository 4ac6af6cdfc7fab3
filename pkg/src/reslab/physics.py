"""Closed-form loss models for superconducting CPW resonators.

Losses are dimensionless (delta = 1/Q). Temperatures in K, angular
frequencies in rad/s, energies in J, lengths in m.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from reslab.numerics import bessel_k0e

HBAR = 1.054571817e-34
K_B = 1.380649e-23
MU_0 = 1.25663706212e-6

BCS_RATIO = 1.76
# hbar*omega/Delta0 or kB*T/Delta0 above this triggers a ValidityWarning
VALIDITY_RATIO = 0.3


class ValidityWarning(UserWarning):
    """Low-frequency, low-temperature Mattis-Bardeen limit is being stretched."""


@dataclass(frozen=True)
class TlsPowerParams:
    f_delta0: float
    n_sat: float
    beta2: float
    delta_other: float = 0.0


@dataclass(frozen=True)
class TlsTempParams:
    f_delta0: float
    a_floor: float
    c_coeff: float
    beta1: float
    delta_other: float = 0.0
    n_ph: float | None = None  # photon number the (A, C) pair was fitted at


@dataclass(frozen=True)
class MaterialParams:
    t_c: float
    rho_n: float
    thickness_d: float
    alpha_k: float = 0.0

    def __post_init__(self):
        if not (self.t_c > 0 and self.rho_n > 0 and self.thickness_d > 0):
            raise ValueError("t_c, rho_n and thickness_d must be positive")
        if not 0.0 <= self.alpha_k <= 1.0:
            raise ValueError(f"alpha_k must lie in [0, 1], got {self.alpha_k}")

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        return MaterialParams(**d)


@dataclass(frozen=True)
class LossBudget:
    delta_tls: float
    delta_qp: float
    delta_other: float
    delta_total: float
    q_int: float

    def to_dict(self):
        return asdict(self)


def rho_from_rrr(rho_room, rrr):
    """Residual (just above Tc) resistivity from room-temperature resistivity and RRR."""
    return rho_room / rrr


def tls_power_loss(n_ph, p):
    """Power-dependent loss: F*delta0 / sqrt(1 + (n/n_sat)^beta2) + delta_other."""
    n = np.asarray(n_ph, dtype=float)
    out = p.f_delta0 / np.sqrt(1.0 + (n / p.n_sat) ** p.beta2) + p.delta_other
    return float(out) if out.ndim == 0 else out


def bcs_gap(t_c):
    return BCS_RATIO * K_B * t_c


def _check_temperature(t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise ValueError("temperature must be positive")
    return t


def _warn_validity(omega, t, delta0):
    if HBAR * np.max(omega) > VALIDITY_RATIO * delta0 or K_B * np.max(t) > VALIDITY_RATIO * delta0:
        warnings.warn("hbar*omega or kB*T is not small compared with the gap; "
                      "the Mattis-Bardeen approximation is unreliable", ValidityWarning,
                      stacklevel=3)


def _sinh_k0(x):
    # sinh(x) K0(x) without overflow: 0.5 (1 - exp(-2x)) exp(x) K0(x)
    return -0.5 * np.expm1(-2.0 * x) * bessel_k0e(x)


def mb_sigma1_ratio(omega, t, delta0):
    """sigma1/sigma_N in the hbar*omega, kB*T << Delta0 limit."""
    t = _check_temperature(t)
    _warn_validity(omega, t, delta0)
    x = HBAR * omega / (2.0 * K_B * t)
    out = 4.0 * delta0 / (HBAR * omega) * np.exp(-delta0 / (K_B * t)) * _sinh_k0(x)
    return float(out) if np.ndim(out) == 0 else out


def mb_sigma2_ratio(omega, delta0):
    """sigma2/sigma_N = pi Delta0 / (hbar omega)."""
    if np.any(np.asarray(omega) <= 0):
        raise ValueError("omega must be positive")
    return math.pi * delta0 / (HBAR * omega)


def penetration_depth(omega, mat):
    """lambda = sqrt(1/(mu0 omega sigma2)); omega cancels against sigma2."""
    sigma2 = mb_sigma2_ratio(omega, bcs_gap(mat.t_c)) / mat.rho_n
    return np.sqrt(1.0 / (MU_0 * omega * sigma2))


def thickness_factor(d, lam):
    """beta = 1 + (2d/lambda)/sinh(2d/lambda); 2 for thin films, 1 for bulk."""
    u = 2.0 * d / lam
    if u < 1e-4:
        return 2.0 - u * u / 6.0
    if u > 700.0:
        return 1.0
    return 1.0 + u / math.sinh(u)


def qp_loss(omega, t, mat):
    """Thermal quasiparticle loss (2 alpha_k beta/pi) exp(-Delta0/kT) sinh(x) K0(x)."""
    t = _check_temperature(t)
    delta0 = bcs_gap(mat.t_c)
    _warn_validity(omega, t, delta0)
    if mat.alpha_k == 0.0:
        return 0.0 if t.ndim == 0 else np.zeros_like(t)
    beta = thickness_factor(mat.thickness_d, float(penetration_depth(omega, mat)))
    x = HBAR * omega / (2.0 * K_B * t)
    out = 2.0 * mat.alpha_k * beta / math.pi * np.exp(-delta0 / (K_B * t)) * _sinh_k0(x)
    return float(out) if out.ndim == 0 else out


def tls_ensemble_loss(f_delta0, tanh_factor, saturation):
    """Generic TLS ensemble loss F*delta0*tanh / sqrt(1 + Omega^2/(Gamma1 Gamma2))."""
    return f_delta0 * tanh_factor / np.sqrt(1.0 + saturation)


def thermal_factor(omega, t):
    """tanh(hbar omega / 2 kB T)."""
    return np.tanh(HBAR * omega / (2.0 * K_B * np.asarray(t, dtype=float)))


def tls_temp_loss(t, omega, p):
    """TLS loss with a dephasing rate Gamma2 = Gamma2_min + gamma T^beta1 folded into (A, C)."""
    t = _check_temperature(t)
    if p.a_floor == 0.0 and p.c_coeff == 0.0:
        raise ValueError("A and C are both zero: the dephasing term is undefined")
    th = thermal_factor(omega, t)
    dephasing = p.a_floor + p.c_coeff * t ** p.beta1
    out = tls_ensemble_loss(p.f_delta0, th, th / dephasing)
    return float(out) if out.ndim == 0 else out


def total_loss(t, n_ph, omega, params, mat=None):
    """Sum of TLS, quasiparticle and residual loss at one operating point.

    ``params`` selects the TLS law: TlsPowerParams uses the photon-number
    saturation form (``n_ph`` matters, ``t`` only enters the quasiparticle
    term), TlsTempParams the temperature form. ``mat=None`` means no
    quasiparticle loss.
    """
    if isinstance(params, TlsPowerParams):
        d_tls = params.f_delta0 / math.sqrt(1.0 + (n_ph / params.n_sat) ** params.beta2)
    elif isinstance(params, TlsTempParams):
        d_tls = float(tls_temp_loss(t, omega, params))
    else:
        raise TypeError(f"unsupported parameter set {type(params).__name__}")
    d_qp = 0.0 if mat is None else float(qp_loss(omega, t, mat))
    d_other = params.delta_other
    total = d_tls + d_qp + d_other
    return LossBudget(d_tls, d_qp, d_other, total, 1.0 / total if total > 0 else math.inf)


# Published parameter sets, used as fixtures and by the synthetic generator.
# Power-law fits: (delta_other, F*delta0, n_sat, beta2) with one-sigma errors.
POWER_TABLE = {
    "alpha-Ta (DHF) R1": ((4.5e-8, 0.2e-8), (1.44e-6, 0.03e-6), (15, 2), (0.539, 0.009)),
    "alpha-Ta (DHF) R2": ((2.3e-8, 0.3e-8), (2.44e-6, 0.05e-6), (8.2, 1.3), (0.545, 0.009)),
    "alpha-Ta (DHF) R3": ((0.5e-8, 0.6e-8), (1.52e-6, 0.05e-6), (13, 3), (0.457, 0.014)),
    "alpha-Ta (DHF) R4": ((3.0e-8, 0.2e-8), (1.61e-6, 0.02e-6), (20, 2), (0.549, 0.008)),
    "alpha-Ta R1": ((4.41e-8, 0.15e-8), (4.29e-6, 0.07e-6), (1.5, 0.2), (0.587, 0.005)),
    "alpha-Ta R2": ((3.9e-8, 0.3e-8), (4.90e-6, 0.14e-6), (1.4, 0.2), (0.602, 0.008)),
    "alpha-Ta R3": ((2.7e-8, 0.5e-8), (2.62e-6, 0.08e-6), (2.4, 0.6), (0.481, 0.010)),
    "alpha-Ta R4": ((1.4e-8, 0.3e-8), (6.2e-6, 0.2e-6), (0.25, 0.06), (0.512, 0.007)),
    "beta-Ta R1": ((4.6e-6, 0.3e-6), (4.6e-6, 0.7e-6), (0.7, 0.6), (0.33, 0.06)),
    "beta-Ta R2": ((3.3e-6, 0.8e-6), (5.4e-6, 1.5e-6), (0.9, 1.1), (0.27, 0.09)),
    "beta-Ta R3": ((2.6e-6, 1.2e-6), (7e-6, 2e-6), (0.3, 0.6), (0.21, 0.08)),
    "beta-Ta R4": ((3.5e-6, 1.7e-6), (7e-6, 4e-6), (0.3, 1.0), (0.27, 0.17)),
    "Nb R1": ((13.0e-8, 0.4e-8), (2.55e-6, 0.07e-6), (2.4, 0.5), (0.525, 0.010)),
    "Nb R2": ((14.3e-8, 0.5e-8), (3.15e-6, 0.07e-6), (8.8, 1.3), (0.624, 0.013)),
    "Nb R3": ((12.2e-8, 0.6e-8), (3.66e-6, 0.09e-6), (5.9, 1.0), (0.620, 0.014)),
    "Nb R4": ((13.1e-8, 0.7e-8), (3.23e-6, 0.10e-6), (10, 2), (0.633, 0.019)),
}

# Temperature-law fits: (A, C [K^-beta1], beta1, alpha_k or None) with one-sigma errors.
TEMP_TABLE = {
    "alpha-Ta (DHF) R1": ((13e-3, 2e-3), (0.25, 0.03), (1.16, 0.11), (0.167, 0.012)),
    "alpha-Ta (DHF) R2": ((6e-3, 2e-3), (0.091, 0.010), (0.90, 0.13), (0.16, 0.02)),
    "alpha-Ta (DHF) R3": ((80e-3, 20e-3), (0.43, 0.11), (0.98, 0.29), (0.19, 0.03)),
    "alpha-Ta (DHF) R4": ((9e-3, 2e-3), (0.208, 0.014), (0.96, 0.07), (0.151, 0.009)),
    "Nb R1": ((11e-3, 2e-3), (0.087, 0.011), (0.99, 0.16), None),
    "Nb R2": ((6e-3, 4e-3), (0.070, 0.006), (0.69, 0.15), None),
    "Nb R3": ((4e-3, 2e-3), (0.062, 0.006), (0.80, 0.13), None),
    "Nb R4": ((3e-3, 2e-3), (0.060, 0.005), (0.74, 0.12), None),
}

# Resonance frequencies in Hz.
FC_TABLE = {
    "alpha-Ta (DHF)": (10.0028e9, 10.3017e9, 10.6197e9, 10.9580e9),
    "alpha-Ta": (9.9959e9, 10.2935e9, 10.6114e9, 10.9484e9),
    "beta-Ta": (10.0350e9, 10.3212e9, 10.5927e9, 10.8955e9),
    "Nb": (10.2293e9, 10.5350e9, 10.8598e9, 11.2054e9),
}

ALPHA_TA_T_C = 4.30
ALPHA_TA_RHO_ROOM = 23.5e-8  # ohm m at 300 K
ALPHA_TA_RRR = 4.11
TA_THICKNESS = 200e-9
NB_T_C = 9.30
NB_THICKNESS = 230e-9


def power_params(row):
    """TlsPowerParams for a named row of POWER_TABLE."""
    (d_o, _), (fd, _), (ns, _), (b2, _) = POWER_TABLE[row]
    return TlsPowerParams(f_delta0=fd, n_sat=ns, beta2=b2, delta_other=d_o)


def resonance_frequency(row):
    material, res = row.rsplit(" R", 1)
    return FC_TABLE[material][int(res) - 1]


def alpha_ta_material(alpha_k=0.0):
    return MaterialParams(ALPHA_TA_T_C, rho_from_rrr(ALPHA_TA_RHO_ROOM, ALPHA_TA_RRR),
                          TA_THICKNESS, alpha_k)

NB_RHO_N = 3.0e-8  # not published for these films; typical residual value for sputtered Nb


def nb_material(alpha_k=0.0, rho_n=NB_RHO_N):
    return MaterialParams(NB_T_C, rho_n, NB_THICKNESS, alpha_k)
