"""Hanger-mode S21 resonance model and fitting.

The model is

    S21(f) = B exp(j phi) [1 - (Q/Qext - 2jQ df/fc) / (1 + 2jQ (f - fc)/fc)]

with loaded Q, coupling Qext, resonance frequency fc and asymmetry df.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from reslab._backend import kernels
from reslab.numerics import SingularNormalEquations, levenberg_marquardt
from reslab.physics import HBAR

NRMSE_MAX = 0.05
CIRC_MIN = 0.85
DF_LINEWIDTHS = 10.0

PARAM_NAMES = ("b_amp", "phi_off", "q_loaded", "q_ext", "f_c", "df")


class FitError(RuntimeError):
    """The resonance fit failed; ``fit`` holds whatever was computed, if anything."""

    def __init__(self, message, fit=None):
        super().__init__(message)
        self.fit = fit


class NoDipError(FitError):
    pass


class NonPhysicalFitError(FitError):
    pass


class RejectedSpectrumError(FitError):
    pass


@dataclass(frozen=True)
class ResonanceParams:
    b_amp: float
    phi_off: float
    q_loaded: float
    q_ext: float
    f_c: float
    df: float = 0.0

    def as_array(self):
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    @classmethod
    def from_array(cls, values):
        return cls(*(float(v) for v in values))

    def replace(self, **kw):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(kw)
        return ResonanceParams(**d)


@dataclass(frozen=True)
class FitQuality:
    nrmse: float
    circularity: float
    accepted: bool


@dataclass(frozen=True)
class ResonanceFit:
    params: ResonanceParams
    q_int: float
    stddev: dict
    quality: FitQuality
    covariance: np.ndarray = field(repr=False, compare=False)
    flags: tuple = ()
    label: str = ""
    power_dbm: float | None = None
    temperature_k: float | None = None
    iterations: int = 0

    def to_record(self):
        p = self.params
        rec = {
            "label": self.label,
            "f_c_hz": p.f_c,
            "q_loaded": p.q_loaded,
            "q_ext": p.q_ext,
            "q_int": self.q_int,
            "df_hz": p.df,
            "b_amp": p.b_amp,
            "phi_off_rad": p.phi_off,
        }
        for name in (*PARAM_NAMES, "q_int"):
            rec[f"{name}_stddev"] = self.stddev.get(name, math.nan)
        rec.update(
            nrmse=self.quality.nrmse,
            circularity=self.quality.circularity,
            accepted=self.quality.accepted,
            flags=list(self.flags),
            power_dbm=self.power_dbm,
            temperature_k=self.temperature_k,
        )
        return rec


def s21_model(f, p):
    re, im = kernels.hanger_s21(np.atleast_1d(np.asarray(f, dtype=float)), *_unpack(p))
    out = re + 1j * im
    return out if np.ndim(f) else complex(out[0])


def _unpack(p):
    if isinstance(p, ResonanceParams):
        return tuple(float(getattr(p, n)) for n in PARAM_NAMES)
    return tuple(float(v) for v in p)


def model_jacobian(f, p):
    """Jacobian of stacked (Re, Im) S21 w.r.t. PARAM_NAMES, shape (2n, 6)."""
    return kernels.hanger_jacobian(np.asarray(f, dtype=float), *_unpack(p))


def qint_from(q_loaded, q_ext):
    """Internal Q from 1/Q = 1/Qint + 1/Qext."""
    if not (q_loaded > 0 and q_ext > 0):
        raise NonPhysicalFitError(f"quality factors must be positive (Q={q_loaded}, Qext={q_ext})")
    if q_loaded >= q_ext:
        raise NonPhysicalFitError(
            f"non-physical fit: loaded Q {q_loaded:.6g} >= external Q {q_ext:.6g}")
    return 1.0 / (1.0 / q_loaded - 1.0 / q_ext)


def photon_number(p_watts, fit):
    """Mean photon number 2 Q^2 P / (hbar wc^2 Qext) for probe power ``p_watts``."""
    p = fit.params if isinstance(fit, ResonanceFit) else fit
    if p_watts < 0:
        raise ValueError("probe power must be non-negative")
    wc = 2.0 * math.pi * p.f_c
    return 2.0 * p.q_loaded ** 2 * p_watts / (HBAR * wc ** 2 * p.q_ext)


def _noise_floor(values):
    # second differences cancel smooth background trends
    if values.size < 4:
        return 0.0
    return float(np.std(np.diff(values, 2)) / math.sqrt(6.0))


def _half_max_crossing(f, y, i0, half, direction):
    i = i0
    while 0 <= i + direction < f.size:
        j = i + direction
        if y[j] <= half:
            t = (y[i] - half) / (y[i] - y[j])
            return f[i] + t * (f[j] - f[i])
        i = j
    return None


def initial_guess(spec):
    f = spec.freqs_hz
    s = spec.s21
    n = f.size
    n_edge = max(2, math.ceil(0.05 * n))
    edge = np.concatenate([s[:n_edge], s[-n_edge:]])
    b_amp = float(np.median(np.abs(edge)))
    if not b_amp > 0:
        raise NoDipError("off-resonance background amplitude is zero")
    phi_off = float(np.angle(np.sum(edge / np.abs(edge))))

    z = s / (b_amp * np.exp(1j * phi_off))
    mag = np.abs(z)
    i_min = int(np.argmin(mag))
    depth = 1.0 - mag[i_min]
    edge_mag = np.abs(np.concatenate([z[:n_edge], z[-n_edge:]]))
    noise = max(_noise_floor(edge_mag[:n_edge]), _noise_floor(edge_mag[n_edge:]))
    if not depth > max(3.0 * noise, 1e-9):
        raise NoDipError(f"no discernible dip (depth {depth:.3g}, noise floor {noise:.3g})")

    f_c = float(f[i_min])
    y = 1.0 - mag ** 2
    half = 0.5 * y[i_min]
    lo = _half_max_crossing(f, y, i_min, half, -1)
    hi = _half_max_crossing(f, y, i_min, half, +1)
    if lo is not None and hi is not None:
        fwhm = hi - lo
    elif lo is not None:
        fwhm = 2.0 * (f_c - lo)
    elif hi is not None:
        fwhm = 2.0 * (hi - f_c)
    else:
        fwhm = 0.25 * (f[-1] - f[0])
    fwhm = max(fwhm, float(np.min(np.diff(f))))
    q_loaded = f_c / fwhm
    q_ext = q_loaded / min(depth, 0.999)
    return ResonanceParams(b_amp, phi_off, q_loaded, q_ext, f_c, 0.0)


def ellipse_axis_ratio(z):
    """Minor/major axis ratio of the least-squares ellipse through points ``z``.

    Direct algebraic fit (Fitzgibbon, in Halir-Flusser's stable form). Returns
    0 when the best conic is not an ellipse.
    """
    z = np.asarray(z, dtype=complex)
    c = z.mean()
    scale = np.max(np.abs(z - c))
    if not scale > 0:
        return 0.0
    x = ((z - c) / scale).real
    y = ((z - c) / scale).imag
    D1 = np.column_stack([x * x, x * y, y * y])
    D2 = np.column_stack([x, y, np.ones_like(x)])
    S1 = D1.T @ D1
    S2 = D1.T @ D2
    S3 = D2.T @ D2
    try:
        T = -np.linalg.solve(S3, S2.T)
    except np.linalg.LinAlgError:
        return 0.0
    M = S1 + S2 @ T
    M = np.vstack([M[2] / 2.0, -M[1], M[0] / 2.0])
    vals, vecs = np.linalg.eig(M)
    vecs = vecs.real
    cond = 4.0 * vecs[0] * vecs[2] - vecs[1] ** 2
    ok = np.nonzero(cond > 0)[0]
    if ok.size == 0:
        return 0.0
    a, b, cc = vecs[:, ok[np.argmin(np.abs(vals[ok]))]]
    lam = np.linalg.eigvalsh(np.array([[a, b / 2.0], [b / 2.0, cc]]))
    if lam[0] * lam[1] <= 0:
        return 0.0
    lam = np.abs(lam)
    return float(math.sqrt(lam.min() / lam.max()))


def fit_quality(spec, params, residual_norm, nrmse_max=NRMSE_MAX, circ_min=CIRC_MIN):
    nrmse = float(residual_norm / np.linalg.norm(spec.s21))
    bg = params.b_amp * np.exp(1j * params.phi_off)
    circ = ellipse_axis_ratio(spec.s21 / bg)
    return FitQuality(nrmse, circ, bool(nrmse <= nrmse_max and circ >= circ_min))


def _wrap(phi):
    return math.remainder(phi, 2.0 * math.pi)


def fit_resonance(spec, *, guess=None, nrmse_max=NRMSE_MAX, circ_min=CIRC_MIN, reject=False):
    """Least-squares fit of the hanger model to a complex spectrum.

    Residuals are the stacked real and imaginary parts. Returns a
    ResonanceFit whose ``quality.accepted`` reports whether the spectrum
    passes the distortion screen; with ``reject=True`` a failing spectrum
    raises RejectedSpectrumError instead.
    """
    p0 = guess if guess is not None else initial_guess(spec)
    f = spec.freqs_hz
    data = np.concatenate([spec.s21.real, spec.s21.imag])

    df_max = DF_LINEWIDTHS * p0.f_c / p0.q_loaded
    bounds = [
        (1e-9 * p0.b_amp, np.inf),
        (-np.inf, np.inf),
        (1.0, np.inf),
        (1.0, np.inf),
        (float(f[0]), float(f[-1])),
        (-df_max, df_max),
    ]
    x0 = p0.as_array()
    x0[5] = min(max(x0[5], -df_max), df_max)
    x0[4] = min(max(x0[4], f[0]), f[-1])

    def residuals(x):
        re, im = kernels.hanger_s21(f, *x)
        return np.concatenate([re, im]) - data

    def jac(x):
        return kernels.hanger_jacobian(f, *x)

    try:
        rep = levenberg_marquardt(residuals, x0, bounds, jac=jac)
    except SingularNormalEquations as exc:
        raise FitError(f"{spec.label}: {exc}") from exc
    if not rep.converged:
        raise FitError(f"{spec.label}: fit did not converge in {rep.iterations} iterations")

    x = rep.params.copy()
    x[1] = _wrap(x[1])
    params = ResonanceParams.from_array(x)
    quality = fit_quality(spec, params, rep.residual_norm, nrmse_max, circ_min)
    stddev = dict(zip(PARAM_NAMES, (float(v) for v in rep.stddev)))
    common = dict(covariance=rep.covariance, label=spec.label, power_dbm=spec.power_dbm,
                  temperature_k=spec.temperature_k, iterations=rep.iterations)

    try:
        q_int = qint_from(params.q_loaded, params.q_ext)
    except NonPhysicalFitError as exc:
        stddev["q_int"] = math.nan
        bad = ResonanceFit(params, math.nan, stddev,
                           FitQuality(quality.nrmse, quality.circularity, False),
                           flags=("non-physical",), **common)
        raise NonPhysicalFitError(f"{spec.label}: {exc}", fit=bad) from None

    cov = rep.covariance
    q, qe = params.q_loaded, params.q_ext
    grad = np.array([q_int ** 2 / q ** 2, -q_int ** 2 / qe ** 2])
    sub = cov[2:4, 2:4]
    stddev["q_int"] = float(math.sqrt(max(grad @ sub @ grad, 0.0)))

    flags = []
    gap_var = sub[0, 0] + sub[1, 1] - 2.0 * sub[0, 1]
    if qe - q <= math.sqrt(max(gap_var, 0.0)):
        flags.append("qint-unresolved")
    if rep.dof_warning:
        flags.append("no-dof")

    fit = ResonanceFit(params, q_int, stddev, quality, flags=tuple(flags), **common)
    if reject and not quality.accepted:
        raise RejectedSpectrumError(
            f"{spec.label}: spectrum rejected (nrmse {quality.nrmse:.3g}, "
            f"circularity {quality.circularity:.3g})", fit=fit)
    return fit
