"""Forward generator of synthetic S21 spectra and sweep campaigns.

Ground truth flows physics -> Q_int -> loaded Q -> hanger model -> noise, so
every estimator in the package can be checked by a round trip.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from reslab import physics
from reslab.physics import HBAR, MaterialParams, TlsPowerParams, TlsTempParams
from reslab.resonance import ResonanceParams, s21_model
from reslab.spectra import (
    Axis,
    ComplexSpectrum,
    Manifest,
    ManifestEntry,
    SweepCampaign,
    dbm_to_watts,
    write_csv,
    write_manifest,
)


class Distortion(str, enum.Enum):
    NONE = "none"
    OVAL_HIGH_POWER = "oval_high_power"


@dataclass(frozen=True)
class SynthConfig:
    """Ground truth and sampling settings for synthetic spectra.

    Exactly one of ``q_int``, ``power_params`` or ``temp_params`` defines the
    TLS/residual loss; ``material`` (with its alpha_k) adds quasiparticle loss.
    ``noise_sigma`` is the standard deviation of each of Re and Im.
    """

    f_c: float
    q_ext: float
    b_amp: float = 1.0
    phi_off: float = 0.0
    df: float = 0.0
    q_int: float | None = None
    power_params: TlsPowerParams | None = None
    temp_params: TlsTempParams | None = None
    material: MaterialParams | None = None
    noise_sigma: float = 0.0
    points_per_spectrum: int = 401
    span_linewidths: float = 10.0
    distortion: Distortion = Distortion.NONE
    n_nl: float = 1e3
    attenuation_db: float = 0.0
    power_dbm: float = -100.0
    temperature_k: float = 0.010
    seed: int = 0
    label: str = "synth"

    def __post_init__(self):
        models = [m for m in (self.q_int, self.power_params, self.temp_params) if m is not None]
        if len(models) != 1:
            raise ValueError("exactly one of q_int, power_params, temp_params must be set")
        if not (self.f_c > 0 and self.q_ext > 0 and self.b_amp > 0):
            raise ValueError("f_c, q_ext and b_amp must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.points_per_spectrum < 8:
            raise ValueError("points_per_spectrum must be >= 8")
        if not self.span_linewidths > 0:
            raise ValueError("span_linewidths must be positive")
        object.__setattr__(self, "distortion", Distortion(self.distortion))

    @property
    def omega(self):
        return 2.0 * math.pi * self.f_c

    def to_dict(self):
        d = asdict(self)
        d["distortion"] = self.distortion.value
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key, typ in (("power_params", TlsPowerParams), ("temp_params", TlsTempParams),
                         ("material", MaterialParams)):
            if d.get(key) is not None:
                d[key] = typ(**d[key])
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class OperatingPoint:
    """Ground truth behind one synthetic spectrum."""

    params: ResonanceParams
    q_int: float
    n_ph: float
    power_dbm: float
    temperature_k: float
    compression: float = 1.0
    extra: dict = field(default_factory=dict)


def loss_at(cfg, n_ph, temperature_k):
    """Internal loss 1/Q_int of the configured model at one operating point."""
    d_qp = 0.0
    if cfg.material is not None:
        d_qp = float(physics.qp_loss(cfg.omega, temperature_k, cfg.material))
    if cfg.q_int is not None:
        return 1.0 / cfg.q_int + d_qp
    if cfg.power_params is not None:
        return float(physics.tls_power_loss(n_ph, cfg.power_params)) + d_qp
    tp = cfg.temp_params
    return float(physics.tls_temp_loss(temperature_k, cfg.omega, tp)) + tp.delta_other + d_qp


def _loaded_q(cfg, n_ph, temperature_k):
    return 1.0 / (loss_at(cfg, n_ph, temperature_k) + 1.0 / cfg.q_ext)


def _photon_coefficient(cfg, power_dbm):
    p = dbm_to_watts(power_dbm - cfg.attenuation_db)
    return 2.0 * p / (HBAR * cfg.omega ** 2 * cfg.q_ext)


def solve_photon_number(cfg, power_dbm, temperature_k):
    """Self-consistent n = 2 Q(n)^2 P / (hbar w^2 Qext)."""
    c = _photon_coefficient(cfg, power_dbm)
    if cfg.power_params is None:
        return c * _loaded_q(cfg, 0.0, temperature_k) ** 2

    def g(n):
        return n - c * _loaded_q(cfg, n, temperature_k) ** 2

    lo = c * _loaded_q(cfg, 0.0, temperature_k) ** 2
    hi = c * _loaded_q(cfg, math.inf, temperature_k) ** 2
    if g(lo) >= 0:
        return lo
    return brentq(g, lo, hi * (1 + 1e-12), xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def power_for_photon_number(cfg, n_ph, temperature_k=None):
    """Probe power (dBm at the VNA, i.e. before attenuation) giving ``n_ph`` photons."""
    t = cfg.temperature_k if temperature_k is None else temperature_k
    q = _loaded_q(cfg, n_ph, t)
    watts = n_ph * HBAR * cfg.omega ** 2 * cfg.q_ext / (2.0 * q ** 2)
    return 10.0 * math.log10(watts) + 30.0 + cfg.attenuation_db


def operating_point(cfg, power_dbm=None, temperature_k=None):
    p_dbm = cfg.power_dbm if power_dbm is None else power_dbm
    t = cfg.temperature_k if temperature_k is None else temperature_k
    n = solve_photon_number(cfg, p_dbm, t)
    q_int = 1.0 / loss_at(cfg, n, t)
    q_loaded = 1.0 / (1.0 / q_int + 1.0 / cfg.q_ext)
    params = ResonanceParams(cfg.b_amp, cfg.phi_off, q_loaded, cfg.q_ext, cfg.f_c, cfg.df)
    comp = 1.0
    if cfg.distortion is Distortion.OVAL_HIGH_POWER:
        comp = 1.0 / (1.0 + n / cfg.n_nl)
    return OperatingPoint(params, q_int, n, p_dbm, t, comp)


def _compress(s, params, factor):
    # squeeze the resonance circle perpendicular to its diameter
    bg = params.b_amp * np.exp(1j * params.phi_off)
    w = 1.0 - s / bg
    axis = np.exp(1j * np.angle(params.q_loaded / params.q_ext
                                - 2j * params.q_loaded * params.df / params.f_c))
    wr = w / axis
    wr = wr.real + 1j * factor * wr.imag
    return bg * (1.0 - wr * axis)


def frequency_grid(cfg, params):
    linewidth = params.f_c / params.q_loaded
    half = 0.5 * cfg.span_linewidths * linewidth
    return params.f_c + np.linspace(-half, half, cfg.points_per_spectrum)


def synth_spectrum(cfg, power_dbm=None, temperature_k=None, index=0, label=None):
    """One synthetic spectrum; ``index`` selects an independent noise stream."""
    op = operating_point(cfg, power_dbm, temperature_k)
    f = frequency_grid(cfg, op.params)
    s = s21_model(f, op.params)
    if op.compression != 1.0:
        s = _compress(s, op.params, op.compression)
    if cfg.noise_sigma > 0:
        rng = np.random.default_rng([cfg.seed, index])
        s = s + cfg.noise_sigma * (rng.standard_normal(f.size) + 1j * rng.standard_normal(f.size))
    return ComplexSpectrum(f, s, power_dbm=op.power_dbm, temperature_k=op.temperature_k,
                           label=label if label is not None else cfg.label)


def synth_campaign(cfg, axis, grid, repeats=1):
    """Map synth_spectrum over a power (dBm) or temperature (K) grid."""
    axis = Axis(axis)
    grid = list(grid)
    if not grid:
        raise ValueError("empty grid")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    spectra = []
    index = 0
    for k, v in enumerate(grid):
        for r in range(repeats):
            if axis is Axis.POWER:
                kw = dict(power_dbm=v)
                tag = f"p{k:03d}"
            else:
                kw = dict(temperature_k=v)
                tag = f"t{k:03d}"
            spectra.append(synth_spectrum(cfg, index=index, label=f"{cfg.label} {tag}r{r}", **kw))
            index += 1
    return SweepCampaign(spectra, axis, cfg.attenuation_db)


def campaign_truth(cfg, campaign):
    return [operating_point(cfg, s.power_dbm, s.temperature_k) for s in campaign.spectra]


def write_campaign(campaign, out_dir, schema="reim"):
    """Write spectra as CSV plus a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, s in enumerate(campaign.spectra):
        name = f"spectrum_{i:04d}.csv"
        write_csv(out / name, s, schema)
        entries.append(ManifestEntry(path=name, power_dbm=s.power_dbm,
                                     temperature_k=s.temperature_k, label=s.label))
    path = out / "manifest.json"
    write_manifest(path, Manifest(campaign.axis, campaign.attenuation_db, entries))
    return path


def truth_document(cfg, campaign):
    """JSON-ready ground truth for a generated campaign."""
    rows = []
    for s, op in zip(campaign.spectra, campaign_truth(cfg, campaign)):
        rows.append({
            "label": s.label,
            "power_dbm": op.power_dbm,
            "temperature_k": op.temperature_k,
            "n_ph": op.n_ph,
            "q_int": op.q_int,
            "q_loaded": op.params.q_loaded,
            "q_ext": op.params.q_ext,
            "f_c_hz": op.params.f_c,
            "compression": op.compression,
        })
    return {"config": cfg.to_dict(), "axis": campaign.axis.value, "spectra": rows}


def dumps_truth(doc):
    return json.dumps(doc, indent=2, sort_keys=True)


# ------------------------------------------------------- differentiation oracle

def s21_components(f, p):
    """(Re, Im) of the hanger model written in real arithmetic.

    Every operation is analytic in the parameters, so complex-valued ``p``
    is allowed (complex-step differentiation).
    """
    b, phi, q, qe, fc, df = p
    f = np.asarray(f, dtype=float)
    x = 2.0 * q * (f - fc) / fc
    a = q / qe
    bb = 2.0 * q * df / fc
    d = 1.0 + x * x
    u = 1.0 - (a - bb * x) / d
    v = (bb + a * x) / d
    c, s = np.cos(phi), np.sin(phi)
    return b * (c * u - s * v), b * (s * u + c * v)


def complex_step_jacobian(f, params, h=1e-30):
    """Jacobian of stacked (Re, Im) S21 by complex-step differentiation."""
    p = np.asarray(params.as_array() if isinstance(params, ResonanceParams) else params,
                   dtype=complex)
    n = np.asarray(f).size
    jac = np.empty((2 * n, p.size))
    for i in range(p.size):
        q = p.copy()
        q[i] += 1j * h
        re, im = s21_components(f, q)
        jac[:n, i] = re.imag / h
        jac[n:, i] = im.imag / h
    return jac


def with_seed(cfg, seed):
    return replace(cfg, seed=seed)
