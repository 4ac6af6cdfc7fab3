"""Regenerate the Chebyshev coefficients of exp(x)*sqrt(x)*K0(x) on [2, inf).

The expansion variable is t = 4/x - 1, which maps [2, inf) onto (-1, 1].
Run with mpmath installed; paste the printed tuple into src/reslab/_k0_coeffs.py.
"""
import mpmath as mp

mp.mp.dps = 50
N = 80


def g(t):
    x = 4 / (t + 1)
    return mp.exp(x) * mp.sqrt(x) * mp.besselk(0, x)


def main():
    nodes = [mp.cos(mp.pi * (j + mp.mpf(1) / 2) / N) for j in range(N)]
    vals = [g(t) for t in nodes]
    coeffs = []
    for k in range(N):
        s = mp.fsum(v * mp.cos(mp.pi * k * (j + mp.mpf(1) / 2) / N) for j, v in enumerate(vals))
        coeffs.append(2 * s / N)
    coeffs[0] /= 2
    keep = [c for c in coeffs]
    while abs(keep[-1]) < mp.mpf("1e-18"):
        keep.pop()
    print("K0_CHEB = (")
    for c in keep:
        print(f"    {mp.nstr(c, 20, min_fixed=-1, max_fixed=0)},")
    print(")")


if __name__ == "__main__":
    main()
