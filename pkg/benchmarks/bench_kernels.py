"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 7]

Kernel timings call each backend module directly. The full resonance fit
selects its backend at import, so it is timed in a child interpreter per
backend (RESLAB_PURE_PYTHON=1 forces the fallback).
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from reslab._backend import available_backends


def best_time(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def kernel_timings(mod, repeat):
    x = np.logspace(-3, 2.5, 10_000)
    f = 7e9 + np.linspace(-2e5, 2e5, 401)
    p = (0.9, 0.3, 1.5e5, 2e5, 7e9, 2e3)
    return {
        "k0_array (10k points)": best_time(lambda: mod.k0_array(x), repeat, 20),
        "k0 scalar": best_time(lambda: mod.k0(3.7), repeat, 20_000),
        "hanger_s21 (401 points)": best_time(lambda: mod.hanger_s21(f, *p), repeat, 2_000),
        "hanger_jacobian (401 points)": best_time(lambda: mod.hanger_jacobian(f, *p), repeat,
                                                  2_000),
    }


def fit_timing(repeat):
    from reslab import synth
    from reslab._backend import BACKEND
    from reslab.resonance import fit_resonance

    cfg = synth.SynthConfig(f_c=7e9, q_ext=2e5, q_int=6e5, b_amp=0.9, phi_off=0.3, df=2e3,
                            noise_sigma=1e-3, seed=1)
    spec = synth.synth_spectrum(cfg)
    return BACKEND, best_time(lambda: fit_resonance(spec), repeat, 20)


def child_fit(backend, repeat):
    env = dict(os.environ)
    if backend == "python":
        env["RESLAB_PURE_PYTHON"] = "1"
    else:
        env.pop("RESLAB_PURE_PYTHON", None)
    out = subprocess.run([sys.executable, __file__, "--fit-only", "--repeat", str(repeat)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--fit-only", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)

    if args.fit_only:
        backend, t = fit_timing(args.repeat)
        print(json.dumps({"backend": backend, "seconds": t}))
        return 0

    backends = available_backends()
    rows = {name: kernel_timings(mod, args.repeat) for name, mod in backends.items()}
    for name in backends:
        fit = child_fit(name, args.repeat)
        if fit["backend"] != name:
            raise RuntimeError(f"child interpreter picked {fit['backend']}, wanted {name}")
        rows[name]["fit_resonance (401 points)"] = fit["seconds"]

    names = list(backends)
    header = f"{'benchmark':32s}" + "".join(f"{n:>14s}" for n in names)
    if "cython" in rows:
        header += f"{'speedup':>10s}"
    print(header)
    for bench in rows["python"]:
        line = f"{bench:32s}" + "".join(f"{rows[n][bench] * 1e6:12.2f}us" for n in names)
        if "cython" in rows:
            line += f"{rows['python'][bench] / rows['cython'][bench]:9.1f}x"
        print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
