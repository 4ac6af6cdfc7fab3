import math
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.integrate import quad

from reslab import synth
from reslab._backend import available_backends

settings.register_profile("reslab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "reslab"))

BACKENDS = available_backends()


@pytest.fixture(params=sorted(BACKENDS))
def kernels(request):
    return BACKENDS[request.param]


def k0e_quadrature(x):
    """exp(x) K0(x) = int_0^inf exp(-x (cosh t - 1)) dt, split at the e-folding point."""
    f = lambda t: math.exp(-x * (math.cosh(t) - 1.0))  # noqa: E731
    t1 = math.acosh(1.0 + 1.0 / x)
    t_end = math.acosh(1.0 + 800.0 / x)
    a, _ = quad(f, 0.0, t1, epsabs=0.0, epsrel=1e-13, limit=200)
    b, _ = quad(f, t1, t_end, epsabs=0.0, epsrel=1e-13, limit=200)
    return a + b


def k0_quadrature(x):
    return k0e_quadrature(x) * math.exp(-x)


def clean_config(**kw):
    base = dict(f_c=10.958e9, q_ext=2e5, q_int=6e5, b_amp=0.8, phi_off=0.4, df=2e3,
                points_per_spectrum=301)
    base.update(kw)
    return synth.SynthConfig(**base)


def log_grid(lo, hi, n):
    g = np.logspace(math.log10(lo), math.log10(hi), n)
    g[0], g[-1] = lo, hi
    return g
