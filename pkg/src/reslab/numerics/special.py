"""Modified Bessel function K0 (second kind, order zero).

Series expansion below x = 2, a Chebyshev expansion of exp(x)*sqrt(x)*K0(x)
above. Scalars go through the scalar kernel, arrays through the vectorised one.
"""
import numpy as np

from reslab._backend import kernels


def bessel_k0(x):
    """K0(x) for x > 0; exactly 0 beyond x = 700 where the value underflows.

    Raises ValueError for x <= 0 (and NaN).
    """
    if np.ndim(x) == 0:
        return kernels.k0(float(x))
    return kernels.k0_array(x)


def bessel_k0e(x):
    """Exponentially scaled exp(x)*K0(x); never underflows."""
    if np.ndim(x) == 0:
        return kernels.k0e(float(x))
    return kernels.k0e_array(x)
