"""Bounded Levenberg-Marquardt least squares with covariance estimates."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from reslab.numerics.diff import finite_diff_jacobian

# ratio of largest to smallest singular value of the column-scaled Jacobian
# beyond which the normal equations are treated as singular
MAX_CONDITION = 1e13


class SingularNormalEquations(np.linalg.LinAlgError):
    def __init__(self, condition, params=None):
        super().__init__(f"normal equations are singular (condition estimate {condition:.3g})")
        self.condition = condition
        self.params = params


class DegreesOfFreedomWarning(RuntimeWarning):
    pass


@dataclass
class FitReport:
    params: np.ndarray
    stddev: np.ndarray
    covariance: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    dof_warning: bool = False
    cost_history: list = field(default_factory=list, repr=False)
    jacobian: np.ndarray | None = field(default=None, repr=False)


def _normalize_bounds(bounds, n):
    if bounds is None:
        return np.full(n, -np.inf), np.full(n, np.inf)
    b = np.asarray(bounds, dtype=float)
    if b.shape != (n, 2):
        raise ValueError(f"bounds must have shape ({n}, 2), got {b.shape}")
    lo, hi = b[:, 0].copy(), b[:, 1].copy()
    if np.any(lo > hi):
        raise ValueError("lower bound exceeds upper bound")
    return lo, hi


def _checked_jacobian(jac, p):
    J = np.asarray(jac(p), dtype=float)
    if not np.all(np.isfinite(J)):
        raise ValueError(f"Jacobian is not finite at {p!r}")
    return J


def _scaled_jacobian(jac):
    colnorm = np.sqrt(np.sum(jac * jac, axis=0))
    colnorm = np.where(colnorm > 0, colnorm, 1.0)
    return jac / colnorm, colnorm


def levenberg_marquardt(model, params0, bounds=None, jac=None, *, max_iter=500,
                        xtol=1e-10, ftol=1e-10, fd_scale=1e-7):
    """Minimise ``sum(model(p)**2)`` starting from ``params0``.

    ``bounds`` is a sequence of ``(lo, hi)`` pairs; trial points are projected
    onto the box before evaluation. ``jac`` is an optional analytic Jacobian
    callable; central finite differences are used otherwise.

    Damping follows Marquardt's scale-invariant variant: steps are solved in
    column-normalised coordinates with an augmented QR/least-squares system,
    which stays well behaved when parameters differ by many decades.
    """
    p = np.array(params0, dtype=float)
    npar = p.size
    lo, hi = _normalize_bounds(bounds, npar)
    if np.any(p < lo) or np.any(p > hi):
        raise ValueError("initial parameters lie outside the bounds")

    if jac is None:
        def jac(q):
            return finite_diff_jacobian(model, q, fd_scale)

    r = np.asarray(model(p), dtype=float)
    m = r.size
    if m < npar:
        raise ValueError(f"need at least as many residuals as parameters (m={m}, p={npar})")
    if not np.all(np.isfinite(r)):
        raise ValueError("model residuals are not finite at the initial parameters")

    cost = float(r @ r)
    history = [cost]
    J = _checked_jacobian(jac, p)
    lam = 1e-3
    converged = False
    it = 0

    while it < max_iter:
        it += 1
        Js, colnorm = _scaled_jacobian(J)
        grad = Js.T @ r
        if cost == 0.0 or not np.any(grad):
            converged = True
            break

        A = np.vstack([Js, np.sqrt(lam) * np.eye(npar)])
        rhs = np.concatenate([-r, np.zeros(npar)])
        step_s, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        trial = np.clip(p + step_s / colnorm, lo, hi)
        step = trial - p
        rel_step = np.linalg.norm(colnorm * step) / max(np.linalg.norm(colnorm * p), 1e-300)

        r_new = np.asarray(model(trial), dtype=float)
        cost_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf

        if cost_new < cost:
            rel_cost = (cost - cost_new) / cost
            p, r, cost = trial, r_new, cost_new
            history.append(cost)
            J = _checked_jacobian(jac, p)
            lam = max(lam * 0.1, 1e-15)
            if rel_step < xtol and rel_cost < ftol:
                converged = True
                break
        else:
            # no decrease: converged once the step itself has become negligible
            if rel_step < xtol:
                converged = True
                break
            lam *= 10.0
            if lam > 1e16:
                break

    stddev, cov, dof_warning = _covariance(J, cost, m, p)
    return FitReport(
        params=p,
        stddev=stddev,
        covariance=cov,
        residual_norm=float(np.sqrt(cost)),
        iterations=it,
        converged=converged,
        dof_warning=dof_warning,
        cost_history=history,
        jacobian=J,
    )


def _covariance(J, cost, m, p):
    npar = p.size
    Js, colnorm = _scaled_jacobian(J)
    sv = np.linalg.svd(Js, compute_uv=False)
    cond = np.inf if sv[-1] == 0 else sv[0] / sv[-1]
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularNormalEquations(cond, params=p)
    inv_scaled = np.linalg.inv(Js.T @ Js)
    inv = inv_scaled / np.outer(colnorm, colnorm)
    inv = 0.5 * (inv + inv.T)
    if m == npar:
        warnings.warn("no residual degrees of freedom; standard deviations undefined",
                      DegreesOfFreedomWarning, stacklevel=3)
        return np.full(npar, np.inf), np.full((npar, npar), np.inf), True
    s2 = cost / (m - npar)
    cov = s2 * inv
    return np.sqrt(np.clip(np.diag(cov), 0.0, None)), cov, False
