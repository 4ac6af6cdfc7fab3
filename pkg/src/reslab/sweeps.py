"""Campaign-level estimators for power and temperature sweeps."""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from reslab.numerics import SingularNormalEquations, levenberg_marquardt
from reslab.physics import (
    HBAR,
    K_B,
    MaterialParams,
    TlsPowerParams,
    TlsTempParams,
    qp_loss,
    tls_power_loss,
)
from reslab.resonance import CIRC_MIN, NRMSE_MAX, FitError, fit_resonance, photon_number
from reslab.spectra import Axis, dbm_to_watts

log = logging.getLogger(__name__)

# relative q_int uncertainty floor used for weights (noiseless data)
REL_ERR_FLOOR = 1e-6
# log-loss sensitivity below which a parameter is treated as unidentifiable
SENSITIVITY_FLOOR = 1e-8
# Gaussian IQR -> sigma, and median -> mean efficiency
IQR_TO_SIGMA = 1.0 / 1.349
MEDIAN_SE_FACTOR = 1.2533

POWER_NAMES = ("f_delta0", "n_sat", "beta2", "delta_other")
TEMP_NAMES = ("a_floor", "c_coeff", "beta1", "alpha_k", "f_delta0", "delta_other")


class SweepError(RuntimeError):
    pass


class InsufficientDataError(SweepError):
    pass


@dataclass(frozen=True)
class SweepPoint:
    x: float
    q_int: float
    q_int_stddev: float
    n_repeats: int = 1
    f_c: float = math.nan


@dataclass
class DistributionSummary:
    median: float
    q1: float
    q3: float
    iqr: float
    whisker_lo: float
    whisker_hi: float
    outliers: list

    def to_dict(self):
        return dict(vars(self))


@dataclass
class PowerSweepResult:
    params: TlsPowerParams
    stddev: dict
    points: list
    excluded: list
    flags: dict = field(default_factory=dict)
    residual_norm: float = 0.0
    converged: bool = True

    def model_q_int(self, n_ph):
        p = self.params
        if not math.isfinite(p.n_sat):
            return 1.0 / np.full_like(np.asarray(n_ph, dtype=float), p.f_delta0 + p.delta_other)
        return 1.0 / tls_power_loss(n_ph, p)

    def curve_rows(self):
        return [(pt.x, pt.q_int, pt.q_int_stddev, float(self.model_q_int(pt.x)))
                for pt in self.points]

    def to_dict(self):
        return {
            "params": asdict(self.params),
            "stddev": dict(self.stddev),
            "flags": dict(self.flags),
            "points": [{"n_ph": p.x, "q_int": p.q_int, "q_int_stddev": p.q_int_stddev,
                        "n_repeats": p.n_repeats} for p in self.points],
            "excluded": list(self.excluded),
            "residual_norm": self.residual_norm,
            "converged": self.converged,
        }

    def write_csv(self, path):
        write_curve_csv(path, self.curve_rows())


@dataclass
class TempSweepResult:
    params: TlsTempParams
    alpha_k: float | None
    fixed: dict
    stddev: dict
    points: list
    excluded: list
    flags: dict = field(default_factory=dict)
    residual_norm: float = 0.0
    converged: bool = True

    def material(self):
        return self.fixed["material"].replace(alpha_k=self.alpha_k or 0.0)

    def model_q_int(self, t, omega):
        return 1.0 / temperature_model_loss(t, omega, self.params, self.material())

    def curve_rows(self):
        return [(pt.x, pt.q_int, pt.q_int_stddev,
                 float(self.model_q_int(pt.x, 2.0 * math.pi * pt.f_c)))
                for pt in self.points]

    def to_dict(self):
        p = self.params
        return {
            "params": {"a_floor": p.a_floor, "c_coeff": p.c_coeff, "beta1": p.beta1,
                       "alpha_k": self.alpha_k},
            "fixed": {"f_delta0": self.fixed["f_delta0"],
                      "delta_other": self.fixed["delta_other"],
                      "material": asdict(self.fixed["material"])},
            "stddev": dict(self.stddev),
            "flags": dict(self.flags),
            "points": [{"t_k": pt.x, "q_int": pt.q_int, "q_int_stddev": pt.q_int_stddev,
                        "f_c_hz": pt.f_c, "n_repeats": pt.n_repeats} for pt in self.points],
            "excluded": list(self.excluded),
            "residual_norm": self.residual_norm,
            "converged": self.converged,
        }

    def write_csv(self, path):
        write_curve_csv(path, self.curve_rows())


def write_curve_csv(path, rows):
    """Plot-ready table with columns x, y, y_err, model_y."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "y_err", "model_y"])
        for row in rows:
            w.writerow([f"{v:.12g}" for v in row])


# ------------------------------------------------------------------ helpers

def _workers(workers):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("RESLAB_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def fit_spectra(spectra, *, workers=None, nrmse_max=NRMSE_MAX, circ_min=CIRC_MIN):
    """Fit every spectrum; returns a list of ResonanceFit or exception, in input order."""

    def one(spec):
        try:
            return fit_resonance(spec, nrmse_max=nrmse_max, circ_min=circ_min)
        except FitError as exc:
            return exc

    n = _workers(workers)
    if n == 1 or len(spectra) < 2:
        return [one(s) for s in spectra]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(one, spectra))


def _split(spectra, results):
    good, excluded = [], []
    for spec, res in zip(spectra, results):
        if isinstance(res, Exception):
            excluded.append({"label": spec.label, "reason": str(res)})
        elif not res.quality.accepted:
            excluded.append({
                "label": spec.label,
                "reason": (f"rejected: nrmse {res.quality.nrmse:.3g}, "
                           f"circularity {res.quality.circularity:.3g}"),
            })
        else:
            good.append((spec, res))
    return good, excluded


def _aggregate(groups):
    """Median over repeats; error from the fit stddev or the repeat spread, whichever is larger."""
    points = []
    for key in sorted(groups):
        rows = groups[key]
        xs = np.array([r[0] for r in rows])
        qs = np.array([r[1] for r in rows])
        errs = np.array([r[2] for r in rows])
        fcs = np.array([r[3] for r in rows])
        q_med = float(np.median(qs))
        err = float(np.median(errs))
        if len(rows) > 1:
            q1, q3 = np.percentile(qs, [25, 75])
            spread = MEDIAN_SE_FACTOR * (q3 - q1) * IQR_TO_SIGMA / math.sqrt(len(rows))
            err = max(err, float(spread))
        points.append(SweepPoint(float(np.median(xs)), q_med, err, len(rows),
                                 float(np.median(fcs))))
    return points


def _log_weights(points):
    return np.array([max(p.q_int_stddev / p.q_int, REL_ERR_FLOOR) for p in points])


def _best_of(starts, fit_one):
    best = None
    for x0 in starts:
        try:
            rep = fit_one(x0)
        except (SingularNormalEquations, ValueError) as exc:
            log.debug("start %s failed: %s", x0, exc)
            continue
        if best is None or (rep.converged, -rep.residual_norm) > (best.converged, -best.residual_norm):
            best = rep
    if best is None:
        raise SweepError("all initializations failed")
    return best


class _Singular:
    """Stand-in report when the covariance cannot be formed."""

    def __init__(self, params, cost, converged):
        self.params = params
        self.stddev = np.full(params.size, np.nan)
        self.residual_norm = math.sqrt(cost)
        self.converged = converged


def _fit_allow_singular(resid, x0, bounds, jac):
    """LM fit that reports NaN errors instead of raising on a singular covariance."""
    try:
        return levenberg_marquardt(resid, x0, bounds, jac=jac)
    except SingularNormalEquations as exc:
        p = exc.params
        r = resid(p)
        return _Singular(p, float(r @ r), True)


def _identification_flags(names, values, stddev):
    flags = {}
    for n, v, s in zip(names, values, stddev):
        if not math.isfinite(s) or s > abs(v):
            flags[n] = "weakly identified"
    return flags


# ------------------------------------------------------------- power sweep

def power_model_log(n, x):
    f_d0, n_sat, beta2, d_other = x
    with np.errstate(divide="ignore"):
        return np.log(f_d0 / np.sqrt(1.0 + (n / n_sat) ** beta2) + d_other)


def power_model_log_jac(n, x):
    f_d0, n_sat, beta2, d_other = x
    ratio = n / n_sat
    y = ratio ** beta2
    root = np.sqrt(1.0 + y)
    delta = f_d0 / root + d_other
    dd_dy = -0.5 * f_d0 / root ** 3
    with np.errstate(divide="ignore"):
        log_ratio = np.where(ratio > 0, np.log(np.where(ratio > 0, ratio, 1.0)), 0.0)
    cols = [1.0 / root, dd_dy * (-beta2 * y / n_sat), dd_dy * y * log_ratio, np.ones_like(n)]
    return np.column_stack(cols) / delta[:, None]


def fit_power_points(points, *, n_starts=5, initial=None):
    """Fit the TLS saturation law to aggregated (n_ph, q_int) points in log-loss space.

    ``initial`` (TlsPowerParams) replaces the multi-start with a single start.
    """
    n = np.array([p.x for p in points])
    delta = 1.0 / np.array([p.q_int for p in points])
    w = _log_weights(points)
    logd = np.log(delta)

    def resid(x):
        return (power_model_log(n, x) - logd) / w

    def jac(x):
        return power_model_log_jac(n, x) / w[:, None]

    d_lo, d_hi = float(delta.min()), float(delta.max())
    bounds = [(0.0, np.inf), (1e-12, 1e12), (1e-3, 2.0), (0.0, np.inf)]
    n_pos = n[n > 0]
    if initial is not None:
        starts = [np.array([initial.f_delta0, initial.n_sat, initial.beta2, initial.delta_other])]
    else:
        starts = [np.array([max(d_hi - d_lo, 1e-3 * d_hi) * 1.5, ns, 0.5, 0.5 * d_lo])
                  for ns in np.logspace(np.log10(n_pos.min()), np.log10(n_pos.max()), n_starts)]
    rep = _best_of(starts, lambda x0: _fit_allow_singular(resid, x0, bounds, jac))

    # constant-loss alternative: only delta_other free
    def resid_null(x):
        return (np.log(x[0]) - logd) / w

    def jac_null(x):
        return (np.full(n.size, 1.0 / x[0]) / w)[:, None]

    null = levenberg_marquardt(resid_null, [float(np.exp(np.median(logd)))], [(1e-300, np.inf)],
                               jac=jac_null)
    m = n.size
    cost_full = rep.residual_norm ** 2
    cost_null = null.residual_norm ** 2
    s2 = cost_full / max(m - 4, 1)
    # chi-square(3) 95% quantile for the three extra parameters
    if cost_null - cost_full <= max(7.81 * s2, m * 1e-6):
        params = TlsPowerParams(0.0, math.nan, math.nan, float(null.params[0]))
        stddev = {"f_delta0": 0.0, "n_sat": math.nan, "beta2": math.nan,
                  "delta_other": float(null.stddev[0])}
        flags = {"f_delta0": "consistent with zero", "n_sat": "unidentifiable",
                 "beta2": "unidentifiable"}
        return params, stddev, flags, null.residual_norm, null.converged

    x = rep.params
    params = TlsPowerParams(*(float(v) for v in x))
    stddev = dict(zip(POWER_NAMES, (float(s) for s in rep.stddev)))
    flags = _identification_flags(POWER_NAMES, x, rep.stddev)
    return params, stddev, flags, rep.residual_norm, rep.converged


def fit_power_sweep(campaign, *, workers=None, min_spectra=6, min_decades=3.0,
                    nrmse_max=NRMSE_MAX, circ_min=CIRC_MIN, n_starts=5, initial=None):
    """Fit the photon-number dependence of the internal loss across a power campaign."""
    if campaign.axis is not Axis.POWER:
        raise ValueError("fit_power_sweep needs a power campaign")
    results = fit_spectra(campaign.spectra, workers=workers, nrmse_max=nrmse_max,
                          circ_min=circ_min)
    good, excluded = _split(campaign.spectra, results)
    if not good:
        raise InsufficientDataError("all spectra were rejected")
    if len(good) < min_spectra:
        raise InsufficientDataError(f"only {len(good)} accepted spectra, need {min_spectra}")

    groups = {}
    for spec, fit in good:
        n_ph = photon_number(dbm_to_watts(spec.power_dbm - campaign.attenuation_db), fit)
        groups.setdefault(spec.power_dbm, []).append(
            (n_ph, fit.q_int, fit.stddev["q_int"], fit.params.f_c))
    points = sorted(_aggregate(groups), key=lambda p: p.x)
    xs = np.array([p.x for p in points])
    if not np.all(xs > 0) or math.log10(xs.max() / xs.min()) < min_decades:
        raise InsufficientDataError(
            f"photon numbers span less than {min_decades:g} decades")

    params, stddev, flags, rnorm, conv = fit_power_points(points, n_starts=n_starts,
                                                          initial=initial)
    if not conv:
        raise SweepError("power-sweep fit did not converge")
    return PowerSweepResult(params, stddev, points, excluded, flags, rnorm, conv)


# -------------------------------------------------------- temperature sweep

def _tls_temp(t, omega, f_d0, a, c, beta1):
    th = np.tanh(HBAR * omega / (2.0 * K_B * t))
    deph = np.maximum(a + c * t ** beta1, 1e-300)
    return f_d0 * th / np.sqrt(1.0 + th / deph), th, deph


def temperature_model_loss(t, omega, p, mat):
    t = np.asarray(t, dtype=float)
    tls, _, _ = _tls_temp(t, omega, p.f_delta0, p.a_floor, p.c_coeff, p.beta1)
    return tls + qp_loss(omega, t, mat) + p.delta_other


def _qp_unit(omega, t, mat):
    """Quasiparticle loss per unit alpha_k, one entry per point."""
    unit = mat.replace(alpha_k=1.0)
    return np.array([qp_loss(w, tt, unit) for w, tt in zip(omega, t)])


def fit_temperature_points(points, fixed, *, free=("a_floor", "c_coeff", "beta1", "alpha_k"),
                           initial=None, hold=None):
    """Fit the temperature law to aggregated (T, q_int) points in log-loss space.

    ``fixed`` supplies f_delta0, delta_other and the MaterialParams. Names in
    ``free`` are fitted (any of TEMP_NAMES); the rest keep values from
    ``hold``/``fixed`` (alpha_k defaults to 0).
    """
    t = np.array([p.x for p in points])
    omega = 2.0 * math.pi * np.array([p.f_c for p in points])
    delta = 1.0 / np.array([p.q_int for p in points])
    w = _log_weights(points)
    logd = np.log(delta)
    mat = fixed["material"]
    qp1 = _qp_unit(omega, t, mat)

    base = {"a_floor": 1e-2, "c_coeff": 0.1, "beta1": 1.0, "alpha_k": 0.0,
            "f_delta0": fixed["f_delta0"], "delta_other": fixed["delta_other"]}
    base.update(hold or {})
    free = tuple(n for n in TEMP_NAMES if n in free)
    idx = [TEMP_NAMES.index(n) for n in free]
    bounds_all = {"a_floor": (0.0, np.inf), "c_coeff": (0.0, np.inf), "beta1": (0.2, 3.0),
                  "alpha_k": (0.0, 1.0), "f_delta0": (0.0, np.inf), "delta_other": (0.0, np.inf)}

    def full(x):
        v = np.array([base[n] for n in TEMP_NAMES], dtype=float)
        v[idx] = x
        return v

    def loss_parts(v):
        a, c, b1, ak, fd, do = v
        tls, th, deph = _tls_temp(t, omega, fd, a, c, b1)
        return tls + ak * qp1 + do, tls, th, deph

    def resid(x):
        d, *_ = loss_parts(full(x))
        return (np.log(d) - logd) / w

    def jac(x):
        v = full(x)
        a, c, b1, ak, fd, do = v
        d, tls, th, deph = loss_parts(v)
        # d tls / d deph, arranged to stay finite as deph -> 0
        g = 0.5 * fd * th * th / (np.sqrt(deph) * (deph + th) ** 1.5)
        tb = t ** b1
        cols = {
            "a_floor": g,
            "c_coeff": g * tb,
            "beta1": g * c * tb * np.log(t),
            "alpha_k": qp1,
            "f_delta0": tls / fd if fd > 0 else th / np.sqrt(1.0 + th / deph),
            "delta_other": np.ones_like(t),
        }
        return np.column_stack([cols[n] for n in free]) / (d * w)[:, None]

    bounds = [bounds_all[n] for n in free]
    if initial is not None:
        starts = [np.array([initial[n] for n in free], dtype=float)]
    else:
        starts = []
        for a0 in (1e-3, 1e-2, 1e-1):
            for b0 in (0.7, 1.2):
                guess = dict(base, a_floor=a0, beta1=b0, c_coeff=0.1, alpha_k=0.1)
                starts.append(np.array([guess[n] for n in free], dtype=float))
        starts = [np.clip(s, [b[0] for b in bounds], [b[1] for b in bounds]) for s in starts]

    rep = _best_of(starts, lambda x0: _fit_allow_singular(resid, x0, bounds, jac))

    # drop parameters the data cannot see and refit the rest
    flags = {}
    J = jac(rep.params) * w[:, None]
    scale = {"a_floor": 1e-2, "c_coeff": 0.1, "beta1": 1.0, "alpha_k": 0.1,
             "f_delta0": fixed["f_delta0"] or 1e-6, "delta_other": fixed["delta_other"] or 1e-8}
    dead = [n for k, n in enumerate(free)
            if np.linalg.norm(J[:, k]) * max(abs(rep.params[k]), scale[n]) < SENSITIVITY_FLOOR]
    if dead:
        for n in dead:
            flags[n] = "unidentifiable"
        keep = [n for n in free if n not in dead]
        hold2 = dict(hold or {})
        hold2.update({n: (0.0 if n == "alpha_k" else float(rep.params[free.index(n)]))
                      for n in dead})
        hold2.update({n: float(rep.params[free.index(n)]) for n in keep})
        if keep:
            init = {n: float(rep.params[free.index(n)]) for n in keep}
            v, sd, sub_flags, rnorm, conv = fit_temperature_points(
                points, fixed, free=keep, initial=init, hold=hold2)
            sd.update({n: math.nan for n in dead})
            sub_flags.update(flags)
            return v, sd, sub_flags, rnorm, conv
    v = full(rep.params)
    stddev = {n: math.nan for n in TEMP_NAMES}
    stddev.update(zip(free, (float(s) for s in rep.stddev)))
    flags.update(_identification_flags(free, rep.params, rep.stddev))
    return v, stddev, flags, rep.residual_norm, rep.converged


def fit_temperature_sweep(campaign, fixed, *, fit_alpha_k=True, free=None, hold=None,
                          initial=None, workers=None, min_span=5.0, nrmse_max=NRMSE_MAX,
                          circ_min=CIRC_MIN):
    """Fit A, C, beta1 (and alpha_k) to the temperature dependence of Q_int.

    ``fixed`` must provide ``f_delta0`` and ``delta_other`` (from a prior power
    sweep) and ``material`` (MaterialParams; its alpha_k is ignored). With
    ``fit_alpha_k=False`` the kinetic-inductance fraction is held at 0 and
    reported as None. ``free``, ``hold`` and ``initial`` override the default
    parameter set, held values and multi-start (see fit_temperature_points).
    """
    if campaign.axis is not Axis.TEMPERATURE:
        raise ValueError("fit_temperature_sweep needs a temperature campaign")
    for key in ("f_delta0", "delta_other", "material"):
        if fixed.get(key) is None:
            raise ValueError(f"fixed parameter {key!r} is required")
    if not isinstance(fixed["material"], MaterialParams):
        raise TypeError("fixed['material'] must be MaterialParams")

    results = fit_spectra(campaign.spectra, workers=workers, nrmse_max=nrmse_max,
                          circ_min=circ_min)
    good, excluded = _split(campaign.spectra, results)
    if not good:
        raise InsufficientDataError("all spectra were rejected")
    groups = {}
    for spec, fit in good:
        groups.setdefault(spec.temperature_k, []).append(
            (spec.temperature_k, fit.q_int, fit.stddev["q_int"], fit.params.f_c))
    points = _aggregate(groups)
    ts = np.array([p.x for p in points])
    if len(points) < 5:
        raise InsufficientDataError(f"only {len(points)} temperatures, need 5")
    if ts.max() / ts.min() < min_span:
        raise InsufficientDataError(f"temperature span below a factor {min_span:g}")

    if free is None:
        free = ("a_floor", "c_coeff", "beta1") + (("alpha_k",) if fit_alpha_k else ())
    v, stddev, flags, rnorm, conv = fit_temperature_points(points, fixed, free=free,
                                                           initial=initial, hold=hold)
    if not conv:
        raise SweepError("temperature-sweep fit did not converge")
    a, c, b1, ak, fd, do = (float(x) for x in v)
    params = TlsTempParams(fd, a, c, b1, do)
    alpha_k = ak if "alpha_k" in free else None
    if alpha_k is None:
        stddev["alpha_k"] = math.nan
    echo = {"f_delta0": fixed["f_delta0"], "delta_other": fixed["delta_other"],
            "material": fixed["material"]}
    return TempSweepResult(params, alpha_k, echo, stddev, points, excluded, flags, rnorm, conv)


# -------------------------------------------------------------- statistics

def summarize_distribution(values):
    """Box-and-whisker summary with the 1.5 x IQR whisker rule.

    Quartiles use linear interpolation between order statistics (inclusive
    method). Whiskers are the most extreme data points inside
    [Q1 - 1.5 IQR, Q3 + 1.5 IQR]; everything outside is an outlier.
    """
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        raise ValueError("cannot summarize an empty sample")
    q1, med, q3 = np.percentile(v, [25, 50, 75], method="linear")
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    outliers = sorted(float(x) for x in v[(v < lo_fence) | (v > hi_fence)])
    return DistributionSummary(float(med), float(q1), float(q3), float(iqr),
                               float(inside.min()), float(inside.max()), outliers)
