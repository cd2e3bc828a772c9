"""scikit-learn style wrappers around the solvers.

Each estimator takes its parameters in ``__init__`` (so ``get_params`` and
``set_params`` work), learns from a spectrum in ``fit`` and exposes fitted
state with a trailing underscore. ``transform`` returns spectra and
``predict`` evaluates on points of the torus.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .arithmetic import Frequency, golden_frequency
from .cohomology import solve_scalar, solve_vector, verify_lemma1
from .fourier import SpectralScalar, SpectralVectorField, evaluate
from .kam import KamConfig, analytic_kam_solve, conjugacy_residual, gevrey_linearize
from .smoothing import SmoothingSchedule, approximation_sequence, verify_popov_bounds
from .weights import Weight

__all__ = [
    "check_frequency",
    "check_spectral",
    "check_points",
    "check_positive",
    "CohomologySolver",
    "GevreyApproximator",
    "AnalyticKAMSolver",
    "GevreyLinearizer",
]


# --- validation helpers ------------------------------------------------------

def check_frequency(omega, n: int | None = None) -> Frequency:
    """Coerce ``omega`` (array, :class:`Frequency` or ``"golden"``) and check its dimension."""
    if isinstance(omega, str):
        if omega.strip().lower() != "golden":
            raise ValueError(f"unknown frequency name {omega!r}")
        om = golden_frequency()
    elif omega is None:
        om = golden_frequency()
    else:
        om = Frequency.of(omega)
    if n is not None and om.n != n:
        raise ValueError(f"frequency has dimension {om.n}, spectrum has {n}")
    return om


def check_spectral(X, kind: str = "any"):
    """Accept a spectrum or a raw coefficient array; ``kind`` is ``scalar``, ``vector`` or ``any``."""
    if isinstance(X, (SpectralScalar, SpectralVectorField)):
        obj = X
    else:
        arr = np.asarray(X)
        if arr.ndim >= 2 and arr.shape[0] == arr.ndim - 1 and kind != "scalar":
            obj = SpectralVectorField(arr)
        else:
            obj = SpectralScalar(arr)
    if kind == "scalar" and not isinstance(obj, SpectralScalar):
        raise TypeError("expected a scalar spectrum")
    if kind == "vector" and not isinstance(obj, SpectralVectorField):
        raise TypeError("expected a vector field spectrum")
    if not np.all(np.isfinite(obj.coeffs)):
        raise ValueError("spectrum contains non-finite coefficients")
    return obj


def check_points(x, n: int) -> np.ndarray:
    """Points on ``T^n`` as a float array of shape ``(P, n)``."""
    x = check_array(np.atleast_2d(np.asarray(x, dtype=float)), ensure_2d=True)
    if x.shape[1] != n:
        raise ValueError(f"points must have {n} columns")
    return x


def check_positive(name: str, value, strict: bool = True) -> float:
    v = float(value)
    if not np.isfinite(v) or v < 0 or (strict and v == 0):
        raise ValueError(f"{name} must be {'positive' if strict else 'non-negative'}, got {value!r}")
    return v


def _kam_config(params: dict, overrides: dict | None) -> KamConfig:
    d = dict(overrides or {})
    d.update({k: v for k, v in params.items() if v is not None})
    return KamConfig.from_dict(d)


# --- estimators --------------------------------------------------------------

class CohomologySolver(BaseEstimator, TransformerMixin):
    """Solve ``X_omega g = f - c``; ``fit`` also measures the loss estimate.

    Parameters
    ----------
    omega : array_like or "golden"
    r, tau : float
        Width of the input and loss used in the estimate.
    a : float
        Gevrey exponent of the weight (``1`` for analytic).
    """

    def __init__(self, omega="golden", r=1.0, tau=1.0, a=0.5):
        self.omega = omega
        self.r = r
        self.tau = tau
        self.a = a

    def fit(self, X, y=None):
        f = check_spectral(X)
        om = check_frequency(self.omega, f.n)
        check_positive("tau", self.tau)
        if isinstance(f, SpectralScalar):
            sol = solve_scalar(f, om)
            self.constant_ = sol.c
            if f.K >= 1:
                rep = verify_lemma1(f, om, Weight.gevrey(self.a), check_positive("r", self.r), self.tau)
                self.loss_report_ = rep
        else:
            sol = solve_vector(f, om)
            self.constant_ = sol.lambda_vec
        self.solution_ = sol.g
        self.worst_divisor_ = sol.worst_divisor
        self.residual_ = sol.residual
        self.n_ = f.n
        return self

    def transform(self, X):
        """Solution for ``X``; ``None`` returns the fitted solution."""
        check_is_fitted(self, "solution_")
        if X is None:
            return self.solution_
        f = check_spectral(X)
        om = check_frequency(self.omega, f.n)
        return (solve_scalar if isinstance(f, SpectralScalar) else solve_vector)(f, om).g

    def predict(self, x):
        check_is_fitted(self, "solution_")
        return evaluate(self.solution_, check_points(x, self.n_))


class GevreyApproximator(BaseEstimator, TransformerMixin):
    """Truncation approximants ``f_j`` along the halving schedule."""

    def __init__(self, r0=1.0, r=0.8, a=0.5, u0=0.8, J=6, K_max=None):
        self.r0 = r0
        self.r = r
        self.a = a
        self.u0 = u0
        self.J = J
        self.K_max = K_max

    def _schedule(self) -> SmoothingSchedule:
        return SmoothingSchedule(self.r0, self.r, self.a, self.u0, self.J, self.K_max)

    def fit(self, X, y=None):
        f = check_spectral(X)
        sched = self._schedule()
        fl, recs = approximation_sequence(f, sched, return_certificate=True)
        self.schedule_ = sched
        self.stages_ = recs
        self.approximants_ = fl
        self.report_ = verify_popov_bounds(f, fl, sched)
        self.C2_ = self.report_.C2
        return self

    def transform(self, X):
        """Approximants of ``X``; ``None`` returns the fitted ones."""
        check_is_fitted(self, "approximants_")
        if X is None:
            return list(self.approximants_)
        return approximation_sequence(check_spectral(X), self._schedule())


class AnalyticKAMSolver(BaseEstimator):
    """Newton iteration for ``Phi^*(X_omega + F - lambda) = X_omega`` at fixed widths."""

    def __init__(self, omega="golden", s=0.2, sigma=0.04, tol=1e-12, max_inner=12, K_max=32,
                 config=None):
        self.omega = omega
        self.s = s
        self.sigma = sigma
        self.tol = tol
        self.max_inner = max_inner
        self.K_max = K_max
        self.config = config

    def fit(self, X, y=None):
        F = check_spectral(X, "vector")
        om = check_frequency(self.omega, F.n)
        cfg = _kam_config({"tol_residual": self.tol, "max_inner": self.max_inner, "K_max": self.K_max},
                          self.config)
        res = analytic_kam_solve(F, om, s=check_positive("s", self.s), sigma=check_positive("sigma", self.sigma),
                                 cfg=cfg)
        self.result_ = res
        self.lambda_ = res.lam
        self.map_ = res.phi
        self.residual_history_ = res.residual_history
        self.order_ = res.order
        self.field_ = F
        self.omega_ = om
        return self

    def predict(self, x):
        """``Phi(x)``."""
        check_is_fitted(self, "map_")
        return self.map_(check_points(x, self.map_.n))

    def score(self, X=None, y=None, N: int = 64) -> float:
        """Negative grid conjugacy residual (higher is better)."""
        check_is_fitted(self, "map_")
        F = self.field_ if X is None else check_spectral(X, "vector")
        return -conjugacy_residual(F, self.omega_.array, self.lambda_, self.map_, N=N)


class GevreyLinearizer(BaseEstimator):
    """Staged linearisation of a Gevrey perturbation.

    Keyword parameters mirror :class:`~torus_kam.kam.KamConfig`; ``config``
    may hold any further fields.
    """

    def __init__(self, omega="golden", a=0.5, r0=1.0, r=0.8, tau=0.2, tau0=0.1, K_max=32, u0=None,
                 calibrate=False, strict=False, config=None):
        self.omega = omega
        self.a = a
        self.r0 = r0
        self.r = r
        self.tau = tau
        self.tau0 = tau0
        self.K_max = K_max
        self.u0 = u0
        self.calibrate = calibrate
        self.strict = strict
        self.config = config

    def _cfg(self) -> KamConfig:
        p = {k: getattr(self, k) for k in ("a", "r0", "r", "tau", "tau0", "K_max", "calibrate", "strict")}
        cfg = _kam_config(p, self.config)
        if self.u0 is not None:
            cfg = KamConfig(**{**cfg.to_dict(), "u0": self.u0})
        return cfg

    def fit(self, X, y=None):
        F = check_spectral(X, "vector")
        om = check_frequency(self.omega, F.n)
        cert, lam, phi = gevrey_linearize(F, om, self._cfg())
        self.certificate_ = cert
        self.lambda_ = lam
        self.map_ = phi
        self.residual_ = cert.final["residual"]
        self.field_ = F
        self.omega_ = om
        return self

    def predict(self, x):
        check_is_fitted(self, "map_")
        return self.map_(check_points(x, self.map_.n))

    def score(self, X=None, y=None, N: int = 64) -> float:
        check_is_fitted(self, "map_")
        F = self.field_ if X is None else check_spectral(X, "vector")
        return -conjugacy_residual(F, self.omega_.array, self.lambda_, self.map_, N=N)
