"""Small nonlinear least-squares engine and Poisson utilities.

The fitter is a damped Gauss-Newton (Levenberg-Marquardt) loop with the
classic damping schedule: lambda starts at 1e-3, is multiplied by 10 after
a rejected step and divided by 10 after an accepted one. Within a single
iteration the division is repeated while it keeps improving the cost, so
linear problems converge in one parameter-changing iteration. Damping
scales the diagonal of J^T W J (Marquardt scaling). Box bounds are
enforced by clipping trial steps.

Built-in models ship analytic Jacobians; user-supplied models fall back
to central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import gammaln

LAMBDA_INIT = 1e-3
LAMBDA_MIN = 1e-13
LAMBDA_MAX = 1e12


# ---------------------------------------------------------------------------
# built-in models

def lorentzian(x, params):
    """offset + amplitude * (w/2)^2 / ((x - center)^2 + (w/2)^2)."""
    center, fwhm, amplitude, offset = params
    hw = 0.5 * fwhm
    den = (x - center) ** 2 + hw**2
    return offset + amplitude * hw**2 / den


def _lorentzian_jac(x, params):
    center, fwhm, amplitude, offset = params
    hw = 0.5 * fwhm
    dx = x - center
    den = dx**2 + hw**2
    j = np.empty((x.size, 4))
    j[:, 0] = amplitude * hw**2 * 2 * dx / den**2
    j[:, 1] = amplitude * hw * dx**2 / den**2  # d/d(fwhm) = d/d(hw) / 2
    j[:, 2] = hw**2 / den
    j[:, 3] = 1.0
    return j


def exponential_recovery(t, params):
    """1 - depth * exp(-t/tau); params = (tau, depth)."""
    tau, depth = params
    return 1.0 - depth * np.exp(-t / tau)


def _exponential_recovery_jac(t, params):
    tau, depth = params
    e = np.exp(-t / tau)
    j = np.empty((t.size, 2))
    j[:, 0] = -depth * e * t / tau**2
    j[:, 1] = -e
    return j


def scaled_pmf(x, params, reference=None):
    """scale * reference[x]; x indexes the reference vector."""
    (scale,) = params
    return scale * reference[np.asarray(x, dtype=int)]


def _scaled_pmf_jac(x, params, reference=None):
    return reference[np.asarray(x, dtype=int)].reshape(-1, 1)


MODELS: dict[str, tuple[Callable, Optional[Callable]]] = {
    "lorentzian": (lorentzian, _lorentzian_jac),
    "exponential_recovery": (exponential_recovery, _exponential_recovery_jac),
    "scaled_pmf": (scaled_pmf, _scaled_pmf_jac),
}


# ---------------------------------------------------------------------------
# problem/result containers

@dataclass
class FitProblem:
    """Data plus model for :func:`nlls_fit`.

    model is a name from MODELS or a callable model(x, params) returning
    predicted y. Weights multiply squared residuals; they default to 1.
    bounds, when given, is a (lower, upper) pair of per-parameter arrays
    (use +-inf for unbounded).
    """

    model: str | Callable
    x: np.ndarray
    y: np.ndarray
    init: np.ndarray
    weights: Optional[np.ndarray] = None
    bounds: Optional[tuple[np.ndarray, np.ndarray]] = None
    model_kwargs: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x)
        self.y = np.asarray(self.y, dtype=float)
        self.init = np.asarray(self.init, dtype=float)
        if self.y.size == 0:
            raise ValueError("empty data")
        if self.y.shape != (np.asarray(self.x).shape[0],):
            raise ValueError("x and y lengths differ")
        if self.weights is None:
            self.weights = np.ones_like(self.y)
        else:
            self.weights = np.asarray(self.weights, dtype=float)
            if np.any(self.weights <= 0):
                raise ValueError("weights must be positive")
        if self.bounds is not None:
            lo, hi = (np.asarray(b, dtype=float) for b in self.bounds)
            if np.any(self.init < lo) or np.any(self.init > hi):
                raise ValueError("init outside bounds")
            self.bounds = (lo, hi)

    def predict(self, params):
        if isinstance(self.model, str):
            func, _ = MODELS[self.model]
            return func(self.x, params, **self.model_kwargs)
        return self.model(self.x, params, **self.model_kwargs)

    def jacobian(self, params):
        if isinstance(self.model, str):
            _, jac = MODELS[self.model]
            if jac is not None:
                return jac(self.x, params, **self.model_kwargs)
        return finite_difference_jacobian(self.predict, params)


@dataclass
class FitResult:
    params: np.ndarray
    covariance: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    grad_norm: float
    message: str

    def param_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


class FitConvergenceError(RuntimeError):
    """Raised by callers that require a converged fit."""

    def __init__(self, message: str, result: FitResult):
        super().__init__(f"{message} (residual {result.residual_norm:.6g} "
                         f"after {result.iterations} iterations)")
        self.result = result


def finite_difference_jacobian(func, params, rel_step=1e-6):
    """Central-difference Jacobian of func(params) w.r.t. params."""
    params = np.asarray(params, dtype=float)
    f0 = np.asarray(func(params))
    jac = np.empty((f0.size, params.size))
    for i in range(params.size):
        h = rel_step * max(abs(params[i]), 1.0)
        up = params.copy()
        up[i] += h
        dn = params.copy()
        dn[i] -= h
        jac[:, i] = (np.asarray(func(up)) - np.asarray(func(dn))) / (2 * h)
    return jac


def _clip(params, bounds):
    if bounds is None:
        return params
    return np.minimum(np.maximum(params, bounds[0]), bounds[1])


def nlls_fit(problem: FitProblem, tol: float = 1e-8,
             max_iter: int = 200, step_tol: float = 1e-10) -> FitResult:
    """Levenberg-Marquardt fit of problem.

    Returns a FitResult whose `converged` flag reflects whether the
    weighted gradient norm dropped below tol (or the step below step_tol).
    Hitting max_iter never raises; it returns converged=False with the
    diagnostics filled in.
    """
    theta = _clip(problem.init.copy(), problem.bounds)
    sqw = np.sqrt(problem.weights)

    def residual(p):
        return (problem.predict(p) - problem.y) * sqw

    r = residual(theta)
    if not np.all(np.isfinite(r)):
        raise ValueError("residual not finite at the initial parameters")
    cost = float(r @ r)
    lam = LAMBDA_INIT
    grad_norm = math.inf
    message = "max_iter exceeded"
    converged = False
    it = 0

    for it in range(1, max_iter + 1):
        jac = problem.jacobian(theta) * sqw[:, None]
        grad = jac.T @ r
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm < tol:
            converged, message = True, "gradient norm below tol"
            break
        hess = jac.T @ jac
        diag = np.maximum(np.diag(hess), 1e-30)

        # All trial steps below linearize at theta_start; on success keep
        # dividing lambda by 10 while that still lowers the cost.
        theta_start = theta
        best = None
        last_step = None
        while True:
            try:
                delta = np.linalg.solve(hess + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                delta = None
            if delta is not None:
                trial = _clip(theta_start + delta, problem.bounds)
                last_step = float(np.linalg.norm(trial - theta_start))
                r_trial = residual(trial)
                c_trial = float(r_trial @ r_trial)
                ref = best[0] if best is not None else cost
                if np.isfinite(c_trial) and c_trial < ref:
                    best = (c_trial, trial, r_trial)
                    if lam <= LAMBDA_MIN:
                        break
                    lam /= 10.0
                    continue
            if best is not None:
                lam *= 10.0  # undo the final unhelpful relaxation
                break
            lam *= 10.0
            if lam > LAMBDA_MAX:
                break
        if best is None:
            # fully damped steps no longer move or help: stationary within
            # working precision when the last step fell below step_tol
            if last_step is not None and \
                    last_step < step_tol * (np.linalg.norm(theta) + step_tol):
                converged, message = True, "step size below step_tol"
            else:
                message = "no downhill step found (lambda exhausted)"
            break
        cost, theta, r = best
        if np.linalg.norm(theta - theta_start) < step_tol * (np.linalg.norm(theta) + step_tol):
            converged, message = True, "step size below step_tol"
            break

    jac = problem.jacobian(theta) * sqw[:, None]
    covariance = _covariance(jac, cost, problem.y.size, theta.size)
    return FitResult(params=theta, covariance=covariance,
                     residual_norm=math.sqrt(cost), iterations=it,
                     converged=converged,
                     grad_norm=float(np.max(np.abs(jac.T @ r))),
                     message=message)


def _covariance(jac, cost, n_data, n_params):
    hess = jac.T @ jac
    try:
        cov = np.linalg.inv(hess)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(hess)
    dof = max(n_data - n_params, 1)
    cov = cov * (cost / dof)
    return 0.5 * (cov + cov.T)


# ---------------------------------------------------------------------------
# Poisson utilities (log-space, stable for the mu <~ 100 used here)

def poisson_log_pmf(mu: float, k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if mu == 0.0:
        return np.where(k == 0, 0.0, -np.inf)
    return k * math.log(mu) - mu - gammaln(k + 1.0)


def poisson_pmf(mu: float, k):
    """P(N = k) for N ~ Poisson(mu); k may be an array."""
    out = np.exp(poisson_log_pmf(mu, k))
    return out if np.ndim(k) else float(out)


def poisson_cdf(mu: float, k):
    """P(N <= k), evaluated by direct summation of log-space terms."""
    scalar = np.ndim(k) == 0
    ks = np.atleast_1d(np.asarray(k, dtype=int))
    if np.any(ks < 0):
        raise ValueError("k must be nonnegative")
    kmax = int(ks.max())
    terms = poisson_pmf(mu, np.arange(kmax + 1))
    csum = np.cumsum(terms)
    out = csum[ks]
    return float(out[0]) if scalar else out


def poisson_pmf_vector(mu: float, kmax: int) -> np.ndarray:
    """PMF on 0..kmax as a dense vector."""
    return poisson_pmf(mu, np.arange(kmax + 1))
