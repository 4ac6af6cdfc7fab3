"""End-to-end acceptance checks; each prints one PASS/FAIL line."""
import math
import time
import warnings

import numpy as np
import pytest

from reslab import physics, synth
from reslab.numerics.special import bessel_k0
from reslab.physics import TlsTempParams, ValidityWarning
from reslab.resonance import FitError, fit_resonance
from reslab.sweeps import fit_power_sweep, fit_temperature_sweep, summarize_distribution

from conftest import k0_quadrature

_RESULTS = []


@pytest.fixture(scope="module", autouse=True)
def _report(request):
    yield
    tr = request.config.pluginmanager.get_plugin("terminalreporter")
    if tr is None:
        return
    tr.write_line("")
    for line in _RESULTS:
        tr.write_line(line)


@pytest.fixture(autouse=True)
def _quiet_validity():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        yield


def verdict(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    _RESULTS.append(line)
    print(line)
    assert ok, line


def timed(fn, *args, repeat=5):
    """Result of fn plus the fastest of ``repeat`` warm wall-clock timings."""
    fn(*args)
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return out, best


def _rel(a, b):
    return abs(a / b - 1.0)


# 1 -------------------------------------------------------------------------

def test_penetration_depth():
    mat = physics.MaterialParams(t_c=4.30, rho_n=23.5e-8 / 4.11, thickness_d=200e-9)
    lam, dt = timed(physics.penetration_depth, 2 * math.pi * 10e9, mat)
    ok = _rel(lam, 121e-9) < 0.01 and dt < 1e-3
    verdict(1, ok, f"lambda = {lam * 1e9:.2f} nm (target 121 nm +- 1%), {dt * 1e6:.1f} us")


# 2, 3 ----------------------------------------------------------------------

DHF_R4 = physics.power_params("alpha-Ta (DHF) R4")


def test_single_photon_q_int():
    d, dt = timed(physics.tls_power_loss, 1.0, DHF_R4)
    q = 1.0 / d
    ok = _rel(q, 0.69e6) < 0.10 and dt < 1e-3
    verdict(2, ok, f"Q_int(n=1) = {q:.4g} (target 0.69e6 +- 10%), {dt * 1e6:.1f} us")


def test_large_photon_limit():
    q_1e6 = 1.0 / physics.tls_power_loss(1e6, DHF_R4)
    q_inf = 1.0 / physics.tls_power_loss(math.inf, DHF_R4)
    ok = 5e6 <= q_1e6 <= 3.3e7 and _rel(q_inf, 1.0 / DHF_R4.delta_other) < 1e-12
    verdict(3, ok, f"Q_int(n=1e6) = {q_1e6:.4g} in [5e6, 3.3e7]; Q_int(inf) = {q_inf:.4g}")


# 4 -------------------------------------------------------------------------

def _roundtrip_config(rng, seed, noise):
    q_int = 10 ** rng.uniform(5, 7)
    q_ext = 10 ** rng.uniform(5, 6)
    q = 1.0 / (1.0 / q_int + 1.0 / q_ext)
    return synth.SynthConfig(f_c=rng.uniform(4e9, 11e9), q_ext=q_ext, q_int=q_int,
                             b_amp=rng.uniform(0.3, 1.5), phi_off=rng.uniform(-math.pi, math.pi),
                             df=rng.uniform(-1, 1) * 1e10 / q * 0.5,
                             noise_sigma=noise, seed=seed, points_per_spectrum=401)


def test_resonance_fit_roundtrip():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    n = 300
    inside = 0
    for seed in range(n):
        cfg = _roundtrip_config(rng, seed, 1e-3)
        try:
            fit = fit_resonance(synth.synth_spectrum(cfg))
        except FitError:
            continue
        inside += abs(fit.q_int - cfg.q_int) <= 3.0 * fit.stddev["q_int"]
    worst = 0.0
    rng = np.random.default_rng(7)
    for seed in range(20):
        cfg = _roundtrip_config(rng, seed, 0.0)
        worst = max(worst, _rel(fit_resonance(synth.synth_spectrum(cfg)).q_int, cfg.q_int))
    dt = time.perf_counter() - t0
    frac = inside / n
    ok = frac >= 0.99 and worst <= 1e-6 and dt < 30.0
    verdict(4, ok, f"{inside}/{n} within 3 sigma ({frac:.1%}); noiseless worst {worst:.2e}; "
                   f"{dt:.1f} s")


# 5 -------------------------------------------------------------------------

def _power_campaign(row):
    cfg = synth.SynthConfig(f_c=physics.resonance_frequency(row), q_ext=5e5,
                            power_params=physics.power_params(row), attenuation_db=70.0,
                            points_per_spectrum=201, label=row)
    grid = [synth.power_for_photon_number(cfg, n) for n in np.logspace(-1, 7, 30)]
    return synth.synth_campaign(cfg, "power", grid)


def _well_identified(row):
    return all(sd / abs(v) < 0.5 for v, sd in physics.POWER_TABLE[row])


def test_power_sweep_roundtrip():
    t0 = time.perf_counter()
    names = ("f_delta0", "n_sat", "beta2", "delta_other")
    failures = []
    n_ph = np.logspace(-1, 7, 200)
    for row in physics.POWER_TABLE:
        truth = physics.power_params(row)
        res = fit_power_sweep(_power_campaign(row))
        if _well_identified(row):
            bad = [k for k in names if not _rel(getattr(res.params, k), getattr(truth, k)) < 0.01]
        else:
            curve = 1.0 / res.model_q_int(n_ph)
            ref = physics.tls_power_loss(n_ph, truth)
            bad = [] if np.max(np.abs(curve / ref - 1.0)) < 0.01 else ["delta_total curve"]
        if bad:
            failures.append(f"{row}: {bad}")
    dt = time.perf_counter() - t0
    ok = not failures and dt < 60.0
    verdict(5, ok, f"16 power rows, {len(failures)} failing {failures}; {dt:.1f} s")


# 6 -------------------------------------------------------------------------

def _temp_campaign(row):
    a, c, b1, ak = physics.TEMP_TABLE[row]
    pp = physics.power_params(row)
    alpha_k = ak[0] if ak else 0.0
    mat = physics.alpha_ta_material(alpha_k) if "Ta" in row else physics.nb_material(alpha_k)
    tp = TlsTempParams(pp.f_delta0, a[0], c[0], b1[0], pp.delta_other)
    cfg = synth.SynthConfig(f_c=physics.resonance_frequency(row), q_ext=5e5, temp_params=tp,
                            material=mat, points_per_spectrum=201, label=row)
    camp = synth.synth_campaign(cfg, "temperature", np.logspace(-2, 0, 25))
    return camp, {"f_delta0": pp.f_delta0, "delta_other": pp.delta_other, "material": mat}


def test_temperature_sweep_roundtrip():
    t0 = time.perf_counter()
    failures = []
    peak_t = None
    for row, (a, c, b1, ak) in physics.TEMP_TABLE.items():
        camp, fixed = _temp_campaign(row)
        res = fit_temperature_sweep(camp, fixed, fit_alpha_k=ak is not None)
        got = {"A": res.params.a_floor, "C": res.params.c_coeff, "beta1": res.params.beta1}
        want = {"A": a[0], "C": c[0], "beta1": b1[0]}
        if ak is not None:
            got["alpha_k"], want["alpha_k"] = res.alpha_k, ak[0]
        bad = [k for k in want if not _rel(got[k], want[k]) < 0.02]
        if bad:
            failures.append(f"{row}: {bad}")
        if row == "alpha-Ta (DHF) R4":
            t = np.logspace(-2, 0, 2000)
            q = res.model_q_int(t, 2 * math.pi * physics.resonance_frequency(row))
            # the maximum over the measured range, reached by a monotonic rise on cooling
            peak_t = t[int(np.argmax(q))]
            cold = t < 0.2
            if not np.all(np.diff(q[cold]) < 0):
                failures.append(f"{row}: Q_int does not rise monotonically below 200 mK")
    dt = time.perf_counter() - t0
    ok = not failures and peak_t is not None and peak_t < 0.25 and dt < 60.0
    verdict(6, ok, f"8 temperature rows, {len(failures)} failing {failures}; "
                   f"DHF R4 Q_int peak at {peak_t * 1e3:.0f} mK; {dt:.1f} s")


# 7 -------------------------------------------------------------------------

def test_mattis_bardeen_identity_and_k0():
    mat = physics.alpha_ta_material(0.151)
    delta0 = physics.bcs_gap(mat.t_c)
    worst_mb = 0.0
    for omega in 2 * math.pi * np.linspace(4e9, 12e9, 10):
        beta = physics.thickness_factor(mat.thickness_d, physics.penetration_depth(omega, mat))
        for t in np.linspace(0.15, 0.9, 10):
            direct = physics.qp_loss(omega, t, mat)
            ratio = physics.mb_sigma1_ratio(omega, t, delta0) / physics.mb_sigma2_ratio(omega,
                                                                                      delta0)
            worst_mb = max(worst_mb, _rel(direct, 0.5 * mat.alpha_k * beta * ratio))
    worst_k0 = 0.0
    for x in np.logspace(-4, np.log10(300.0), 40):
        worst_k0 = max(worst_k0, _rel(bessel_k0(x), k0_quadrature(x)))
    ok = worst_mb <= 1e-12 and worst_k0 <= 1e-10
    verdict(7, ok, f"MB identity worst {worst_mb:.2e} (<= 1e-12); "
                   f"K0 vs quadrature worst {worst_k0:.2e} (<= 1e-10)")


# 8 -------------------------------------------------------------------------

def test_distortion_rejection():
    n_nl = 1e3
    base = dict(f_c=7.5e9, q_ext=2e5, q_int=8e5, b_amp=0.9, phi_off=0.3, df=2e3,
                noise_sigma=1e-3, n_nl=n_nl, points_per_spectrum=401)
    rng = np.random.default_rng(88)
    rejected = accepted = 0
    n = 100
    for seed in range(n):
        ratio = 10 ** rng.uniform(1, 3)
        clean = synth.SynthConfig(seed=seed, **base)
        power = synth.power_for_photon_number(clean, ratio * n_nl)
        hot = synth.SynthConfig(seed=seed, distortion="oval_high_power", **base)
        assert synth.operating_point(hot, power).n_ph >= 10 * n_nl * (1 - 1e-9)
        rejected += not fit_resonance(synth.synth_spectrum(hot, power)).quality.accepted
        accepted += fit_resonance(synth.synth_spectrum(clean, power)).quality.accepted
    ok = rejected == n and accepted == n
    verdict(8, ok, f"distorted rejected {rejected}/{n}; clean accepted {accepted}/{n}")


# 9 -------------------------------------------------------------------------

WHISKER_FIXTURES = [
    # ties: zero IQR, every point on the box
    ([2.0] * 6, dict(median=2, q1=2, q3=2, iqr=0, whisker_lo=2, whisker_hi=2, outliers=[])),
    # ties with one departure: zero IQR makes any other value an outlier
    ([5.0] * 5 + [9.0], dict(median=5, q1=5, q3=5, iqr=0, whisker_lo=5, whisker_hi=5,
                             outliers=[9.0])),
    # single element
    ([3.7], dict(median=3.7, q1=3.7, q3=3.7, iqr=0, whisker_lo=3.7, whisker_hi=3.7,
                 outliers=[])),
    # one extreme outlier; Q1 = 3.25, Q3 = 7.75, fences -3.5 and 14.5
    ([float(v) for v in range(1, 10)] + [1e9],
     dict(median=5.5, q1=3.25, q3=7.75, iqr=4.5, whisker_lo=1, whisker_hi=9, outliers=[1e9])),
    # a point exactly on the upper fence (Q3 + 1.5 IQR = 6) is a whisker, not an outlier
    ([0.0, 1.0, 2.0, 3.0, 6.0], dict(median=2, q1=1, q3=3, iqr=2, whisker_lo=0, whisker_hi=6,
                                      outliers=[])),
]


def test_whisker_rule():
    bad = []
    for values, want in WHISKER_FIXTURES:
        s = summarize_distribution(values)
        for k, v in want.items():
            if getattr(s, k) != v:
                bad.append(f"{values[:3]}..: {k}={getattr(s, k)} != {v}")
    verdict(9, not bad, f"{len(WHISKER_FIXTURES)} whisker fixtures, mismatches {bad}")
