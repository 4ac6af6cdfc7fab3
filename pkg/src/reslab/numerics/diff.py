import numpy as np


def finite_diff_jacobian(model, params, scale=1e-7):
    """Central-difference Jacobian of a vector-valued ``model`` at ``params``.

    The step for parameter i is ``scale * max(|p_i|, 1)``. Returns an (m, p)
    array. Raises ValueError if the model is non-finite at any probed point.
    """
    p = np.asarray(params, dtype=float)
    r0 = np.atleast_1d(np.asarray(model(p), dtype=float))
    if not np.all(np.isfinite(r0)):
        raise ValueError("model output is not finite at the given parameters")
    jac = np.empty((r0.size, p.size))
    for i in range(p.size):
        h = scale * max(abs(p[i]), 1.0)
        up = p.copy()
        dn = p.copy()
        up[i] += h
        dn[i] -= h
        r_up = np.atleast_1d(np.asarray(model(up), dtype=float))
        r_dn = np.atleast_1d(np.asarray(model(dn), dtype=float))
        if not (np.all(np.isfinite(r_up)) and np.all(np.isfinite(r_dn))):
            raise ValueError(f"model output is not finite when perturbing parameter {i}")
        jac[:, i] = (r_up - r_dn) / (up[i] - dn[i])
    return jac
