# Chebyshev coefficients of exp(x)*sqrt(x)*K0(x) in t = 4/x - 1, valid for x >= 2.
# Generated by tools/gen_k0_chebyshev.py (50-digit mpmath, 80 nodes, truncated at 1e-18).
K0_CHEB = (
    1.2201515410329777273,
    -3.1448101311964500543e-2,
    1.5698838857300533749e-3,
    -1.2849549581627802638e-4,
    1.3949813718876499364e-5,
    -1.8317555227191194848e-6,
    2.7668136394450150761e-7,
    -4.6604898976879476656e-8,
    8.5740340174142260858e-9,
    -1.6975345093890615156e-9,
    3.5773972814003284472e-10,
    -7.9574892444773970377e-11,
    1.855949114954926555e-11,
    -4.5145978833745191751e-12,
    1.1403405882073442347e-12,
    -2.9800969231481783548e-13,
    8.0328907750683743694e-14,
    -2.2275133267462963604e-14,
    6.3400764762766459661e-15,
    -1.8485933779209071694e-15,
    5.5120559994043333649e-16,
    -1.6782311257549006383e-16,
    5.2103917776435541125e-17,
    -1.6475805939842632815e-17,
    5.300433771177335771e-18,
    -1.7331712005821000278e-18,
)

EULER_GAMMA = 0.57721566490153286061
SERIES_CUTOFF = 2.0
UNDERFLOW_X = 700.0
