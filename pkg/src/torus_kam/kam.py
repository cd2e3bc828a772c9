"""Newton scheme for ``Phi^*(X_omega + F - Theta^* lambda) = X_omega`` and the staged Gevrey driver.

Conventions
-----------
``Phi^* Y = (D Phi)^{-1} Y o Phi`` and ``Theta^* lambda = (D Theta)^{-1} lambda``.
One Newton step with current perturbation ``F`` and modifier map ``Theta``:

1. ``lambda_inc`` solves ``mean((D Theta)^{-1}) lambda_inc = mean(F)``;
2. ``H = F - Theta^* lambda_inc`` with ``H_0 := 0``;
3. ``G`` solves ``X_omega G = H``;
4. ``F_next = (I + DG)^{-1} (H(x + G) - H(x))``, the exact pullback of
   ``X_omega + H`` under ``Id + G``, evaluated without cancellation.

The staged driver smooths a Gevrey perturbation into analytic approximants and
solves one analytic problem per stage, pulling each new approximant back by the
map accumulated so far.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from .arithmetic import Frequency, small_divisor_scan
from .cohomology import solve_scalar, solve_vector
from .fourier import (
    NonInvertibleJacobianError,
    SpectralScalar,
    SpectralVectorField,
    TorusMap,
    _alias_free_N,
    _check_invertible,
    _eval_raw,
    _grid_to_spec,
    _shift_diff_raw,
    _spec_to_grid,
    evaluate,
    grid_points,
    jacobian_grid,
    l1_norm,
    log_weighted_norm,
    max_norm_array,
    pullback,
)
from .smoothing import (
    HypothesisViolation,
    SmoothingSchedule,
    TelescopingRefusal,
    approximation_sequence,
    telescoping_limit,
    verify_popov_bounds,
)
from .weights import Weight, conjugate_exponent, kam_constants, s_star

__all__ = [
    "ConfigError",
    "KamDivergenceError",
    "EnvelopeViolation",
    "KamConfig",
    "NewtonIncrement",
    "KamStepResult",
    "OracleResult",
    "GevreyKamCertificate",
    "kam_threshold_margin",
    "log_kam_threshold_margin",
    "newton_step",
    "analytic_kam_solve",
    "convergence_order",
    "conjugacy_residual",
    "reparametrized_oracle",
    "initial_width",
    "calibrate_constants",
    "gevrey_linearize",
]


class ConfigError(ValueError):
    """Parameters outside their admissible ranges."""


class KamDivergenceError(ArithmeticError):
    """The Newton residual grew for three consecutive steps (or became singular)."""

    def __init__(self, message: str, history: list):
        self.history = list(history)
        super().__init__(f"{message}; residual history {['%.3e' % h for h in self.history]}")


class EnvelopeViolation(ArithmeticError):
    """A staged increment exceeded its envelope in strict mode."""


def _phi_b(b: float, t: float) -> float:
    return t**b / b


@dataclass
class KamConfig:
    """Parameters of the analytic solver and of the staged driver.

    ``C2`` and ``C4`` are the approximation and KAM constants; ``u0`` overrides
    the closed-form initial width when given. ``K_max`` bounds every spectrum
    and ``grid_N`` is the resolution of measured residuals.
    """

    a: float = 0.5
    r0: float = 1.0
    r: float = 0.8
    tau: float = 0.2
    tau0: float = 0.1
    kappa: float = 1.5
    K_max: int = 32
    oversample: float = 2.0
    tol_residual: float = 1e-12
    max_inner: int = 12
    max_outer: int = 12
    C2: float = 1.0
    C4: float = 1.0
    strict: bool = False
    envelope_slack: float = 1.0
    u0: float | None = None
    grid_N: int = 64
    calibrate: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not (0.0 < self.a < 1.0):
            raise ConfigError("a must lie in (0, 1)")
        if not (self.r0 > self.r > 0.0):
            raise ConfigError("need r0 > r > 0")
        if not (self.tau > self.tau0 > 0.0):
            raise ConfigError("need tau > tau0 > 0")
        if not (1.0 < self.kappa < 2.0):
            raise ConfigError("kappa must lie in (1, 2)")
        if int(self.K_max) < 1 or int(self.max_inner) < 1 or int(self.max_outer) < 1:
            raise ConfigError("K_max, max_inner and max_outer must be positive")
        if not (self.oversample >= 1.0 and self.tol_residual > 0 and self.C2 > 0 and self.C4 > 0):
            raise ConfigError("oversample >= 1 and positive tol, C2, C4 required")
        if self.envelope_slack < 1.0:
            raise ConfigError("envelope_slack must be at least 1")
        if self.u0 is not None and not (0.0 < self.u0 <= self.r):
            raise ConfigError("u0 must lie in (0, r]")
        if int(self.grid_N) < 4:
            raise ConfigError("grid_N too small")

    @property
    def b(self) -> float:
        return conjugate_exponent(self.a)

    @property
    def delta(self) -> float:
        return kam_constants(self.a, self.kappa, self.r, self.tau).delta

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "KamConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown KAM parameters: {sorted(unknown)}")
        return cls(**d)


# --- thresholds --------------------------------------------------------------

def log_kam_threshold_margin(alpha: float, F_l1_at_s: float, s: float, sigma: float, cfg: KamConfig) -> float:
    """``ln`` of ``C4 alpha^{-1} exp(delta tau phi_b(tau/sigma)) |F|_s``."""
    if not (0.0 < 4.0 * sigma < s):
        raise ValueError("need 0 < 4 sigma < s")
    if F_l1_at_s == 0.0:
        return -math.inf
    return (math.log(cfg.C4) - math.log(alpha) + cfg.delta * cfg.tau * _phi_b(cfg.b, cfg.tau / sigma)
            + math.log(F_l1_at_s))


def kam_threshold_margin(alpha: float, F_l1_at_s: float, s: float, sigma: float, cfg: KamConfig) -> float:
    """Left-hand side of the analytic smallness condition; at most one means it holds."""
    lg = log_kam_threshold_margin(alpha, F_l1_at_s, s, sigma, cfg)
    if lg == -math.inf:
        return 0.0
    return math.exp(lg) if lg < 709.0 else math.inf


# --- Newton step -------------------------------------------------------------

@dataclass
class NewtonIncrement:
    lambda_inc: np.ndarray
    phi_inc: TorusMap
    F_next: SpectralVectorField
    tail: float
    worst_divisor: float
    theta_dist: float


def _inverse_jacobian_grid(Theta: TorusMap, N: int) -> np.ndarray:
    J = jacobian_grid(Theta, N)
    _check_invertible(J)
    return np.linalg.inv(J)


def newton_step(F: SpectralVectorField, omega, Theta: TorusMap | None = None, K_out: int | None = None,
                oversample: float = 2.0) -> NewtonIncrement:
    """One quadratic step; see the module docstring for the formulas.

    Parameters
    ----------
    F : SpectralVectorField
        Current perturbation of ``X_omega``.
    omega : array_like
    Theta : TorusMap, optional
        Map carrying the modifying term; identity by default.
    K_out : int, optional
        Cutoff of the returned spectra (default: that of ``F``).
    """
    n = F.n
    om = Frequency.of(omega).array
    if K_out is None:
        K_out = F.K if Theta is None else max(F.K, Theta.K)
    Fk = F.resize(K_out)
    theta_dist = 0.0
    if Theta is None or Theta.is_identity():
        lam = Fk.mean.copy()
        Lam = SpectralVectorField.constant(lam, K_out)
    else:
        N = _alias_free_N(max(K_out, Theta.K), oversample)
        Jinv = _inverse_jacobian_grid(Theta, N)
        theta_dist = float(np.max(np.abs(Jinv - np.eye(n)[None]).sum(axis=2)))
        lam = np.linalg.solve(Jinv.mean(axis=0), Fk.mean)
        vals = (Jinv @ lam).T.reshape((n,) + (N,) * n)
        Lam = SpectralVectorField(_grid_to_spec(vals, n, K_out), n)
    H = Fk - Lam
    H.coeffs[(slice(None),) + H.center] = 0.0
    sol = solve_vector(H, om)
    G = sol.g
    phi_inc = TorusMap(G)
    if G.is_zero():
        return NewtonIncrement(lam, phi_inc, SpectralVectorField.zeros(n, K_out), 0.0, sol.worst_divisor,
                               theta_dist)
    N = _alias_free_N(K_out, oversample)
    x = grid_points(n, N)
    g = _spec_to_grid(G.coeffs, n, K_out, N).reshape(n, -1)
    JG = jacobian_grid(phi_inc, N)
    _check_invertible(JG)
    diff = _shift_diff_raw(H.coeffs, n, K_out, x, g.T)
    vals = np.linalg.solve(JG, diff.T[..., None])[..., 0].T
    spec, tail = _grid_to_spec(vals.reshape((n,) + (N,) * n), n, K_out, tail=True)
    return NewtonIncrement(lam, phi_inc, SpectralVectorField(spec, n), tail, sol.worst_divisor, theta_dist)


# --- analytic solver ---------------------------------------------------------

def _map_norms(phi: TorusMap, w: float) -> tuple:
    """``(|Phi - Id|_w, |D Phi - Id|_w)`` as l1 bounds (max row sum for the derivative)."""
    disp = l1_norm(phi.displacement, w)
    D = phi.derivative_coeffs()
    wts = np.exp(w * max_norm_array(phi.n, phi.K))
    M = (np.abs(D) * wts).reshape(phi.n, phi.n, -1).sum(axis=-1)
    return disp, float(np.max(M.sum(axis=1), initial=0.0))


def _inner_widths(s: float, sigma: float, a: float, kappa: float, m: int) -> tuple:
    sig = [sigma * (kappa ** (1 - a) - 1) * kappa ** (-(1 - a) * (i + 1)) for i in range(m + 1)]
    return s - 4.0 * sum(sig[:m]), sig[m]


@dataclass
class KamStepResult:
    """Outcome of :func:`analytic_kam_solve`.

    ``residual_history`` holds the l1 norm (width 0) of the perturbation left
    after each Newton step, starting with the input.
    """

    lam: np.ndarray
    phi: TorusMap
    residual_history: list
    converged: bool
    budget_exhausted: bool
    width_ledger: dict
    certificates: dict
    threshold_log_margin: float
    F_final: SpectralVectorField | None = None

    @property
    def iterations(self) -> int:
        return len(self.residual_history) - 1

    @property
    def order(self) -> float:
        return convergence_order(self.residual_history)

    def to_dict(self) -> dict:
        return {"lambda": [float(v) for v in self.lam], "residual_history": list(self.residual_history),
                "converged": self.converged, "budget_exhausted": self.budget_exhausted,
                "width_ledger": self.width_ledger, "certificates": self.certificates,
                "threshold_log_margin": self.threshold_log_margin, "order": _finite_or_none(self.order)}


def _finite_or_none(x):
    return float(x) if x is not None and math.isfinite(x) else None


def convergence_order(history: list, floor: float = 0.0) -> float:
    """Slope of ``ln r_{m+1}`` against ``ln r_m`` over consecutive positive residuals above ``floor``."""
    h = [v for v in history if v > floor and math.isfinite(v)]
    if len(h) < 3:
        return math.nan
    x, y = np.log(h[:-1]), np.log(h[1:])
    return float(np.polyfit(x, y, 1)[0])


def analytic_kam_solve(F: SpectralVectorField, omega, Theta: TorusMap | None = None, s: float = 0.2,
                       sigma: float = 0.04, cfg: KamConfig | None = None, alpha: float | None = None,
                       tol: float | None = None) -> KamStepResult:
    """Iterate :func:`newton_step` until the l1 residual is at most ``tol``.

    Returns ``lambda`` and ``Phi`` with ``Phi^*(X_omega + F - Theta^* lambda) = X_omega``
    up to the final residual. The smallness condition and the estimates of the
    analytic theorem are evaluated and reported; execution never depends on
    them.

    Raises
    ------
    KamDivergenceError
        Residual growth over three consecutive steps, a non-finite residual or
        a map that ceases to be invertible.
    """
    cfg = cfg or KamConfig()
    if not (0.0 < 4.0 * sigma < s):
        raise ValueError("need 0 < 4 sigma < s")
    om = Frequency.of(omega)
    n = F.n
    K = max(int(cfg.K_max), F.K)
    if tol is None:
        tol = cfg.tol_residual
    if alpha is None:
        alpha = small_divisor_scan(om, K, tau=cfg.tau0, a=cfg.a).alpha
    F_s = l1_norm(F, s)
    log_margin = log_kam_threshold_margin(alpha, F_s, s, sigma, cfg)
    theta0 = Theta if Theta is not None and not Theta.is_identity() else None
    Theta_m = theta0
    phi = TorusMap.identity(n, K)
    lam = np.zeros(n)
    Fm = F.resize(K)
    history = [l1_norm(Fm)]
    ledger = {"s": s, "sigma": sigma, "s_minus_4sigma": s - 4 * sigma, "inner": []}
    converged = history[0] <= tol
    m = 0
    while not converged and m < cfg.max_inner:
        s_m, sig_m = _inner_widths(s, sigma, cfg.a, cfg.kappa, m)
        try:
            step = newton_step(Fm, om.array, Theta_m, K_out=K, oversample=cfg.oversample)
        except NonInvertibleJacobianError as exc:
            raise KamDivergenceError(f"map lost invertibility at step {m}: {exc}", history) from exc
        lam = lam + step.lambda_inc
        phi = phi.compose(step.phi_inc, K_out=K, oversample=cfg.oversample)
        if theta0 is None:
            Theta_m = phi
        else:
            Theta_m = Theta_m.compose(step.phi_inc, K_out=K, oversample=cfg.oversample)
        Fm = step.F_next
        r = l1_norm(Fm)
        history.append(r)
        ledger["inner"].append({"m": m, "s_m": s_m, "sigma_m": sig_m, "residual_at_s_m": l1_norm(Fm, max(s_m, 0.0)),
                                "tail": step.tail, "worst_divisor": step.worst_divisor,
                                "theta_dist": step.theta_dist})
        m += 1
        if not math.isfinite(r):
            raise KamDivergenceError("non-finite residual", history)
        if len(history) >= 4 and history[-1] > history[-2] > history[-3] > history[-4]:
            raise KamDivergenceError("residual grew for three consecutive steps", history)
        converged = r <= tol
    # estimates of the analytic theorem at width s - 4 sigma
    w = s - 4.0 * sigma
    disp, dphi = _map_norms(phi, w)
    lam_abs = float(np.max(np.abs(lam)))
    log_exp = cfg.delta * cfg.tau * _phi_b(cfg.b, cfg.tau / sigma)
    certs = {"lambda_abs": lam_abs, "phi_minus_id": disp, "dphi_minus_id": dphi, "F_l1_s": F_s,
             "dist_grid": phi.dist_grid(), "alpha": alpha}
    if F_s > 0:
        c_lam = lam_abs / F_s
        log_c_map = (math.log(max(disp, dphi)) + math.log(alpha) - math.log(F_s) - log_exp
                     if max(disp, dphi) > 0 else -math.inf)
        certs.update({"C4_lambda": c_lam, "log_C4_map": log_c_map,
                      "lambda_estimate_ok": lam_abs <= cfg.C4 * F_s,
                      "map_estimate_ok": log_c_map <= math.log(cfg.C4)})
    return KamStepResult(lam=lam, phi=phi, residual_history=history, converged=converged,
                         budget_exhausted=not converged, width_ledger=ledger, certificates=certs,
                         threshold_log_margin=log_margin, F_final=Fm)


# --- residuals ---------------------------------------------------------------

def _jacobian_at(phi: TorusMap, x: np.ndarray) -> np.ndarray:
    """``D Phi`` evaluated pointwise at ``x`` (P, n), shape ``(P, n, n)``."""
    n = phi.n
    D = phi.derivative_coeffs().reshape((n * n,) + phi.displacement.coeffs.shape[1:])
    return _eval_raw(D, n, phi.K, x).T.reshape(-1, n, n) + np.eye(n)[None]


def conjugacy_residual(F: SpectralVectorField, omega, lam, Phi: TorusMap, Theta: TorusMap | None = None,
                       mode: str = "constant", N: int = 64) -> float:
    """Grid sup of ``(D Phi)^{-1}(omega + F(Phi x) - Lambda(Phi x)) - omega``.

    ``Lambda`` is ``lam`` in ``constant`` mode and ``(D Theta)^{-1} lam`` in
    ``pullback`` mode. All quantities are evaluated pointwise (no truncation).
    """
    if mode not in ("constant", "pullback"):
        raise ValueError("mode must be 'constant' or 'pullback'")
    n = F.n
    om = Frequency.of(omega).array
    lam = np.asarray(lam, dtype=float)
    x = grid_points(n, N)
    y = Phi(x)
    J = _jacobian_at(Phi, x)
    _check_invertible(J)
    Fy = evaluate(F, y).T
    if mode == "pullback" and Theta is not None and not Theta.is_identity():
        JT = _jacobian_at(Theta, y)
        Lam = np.linalg.solve(JT, np.broadcast_to(lam, (len(x), n))[..., None])[..., 0]
    else:
        Lam = np.broadcast_to(lam, (len(x), n))
    rhs = Fy - Lam - (J - np.eye(n)[None]) @ om
    res = np.linalg.solve(J, rhs[..., None])[..., 0]
    return float(np.max(np.abs(res), initial=0.0))


# --- reparametrised oracle ---------------------------------------------------

@dataclass
class OracleResult:
    """Exact solution for ``X = (1/f) X_omega``.

    In the pullback convention the solution satisfies ``Phi^{-1} = Id + v omega``
    with ``X_omega v = f/(1 - mu f) - 1``, ``lambda = mu omega`` and ``mu``
    fixed by ``mean(f/(1 - mu f)) = 1``. When ``mean f = 1`` this is ``mu = 0``
    and ``v = g``, the solution of ``X_omega g = f - 1``. The first-order forms
    ``lambda = (1 - c) omega`` and ``Id + g omega`` are kept for comparison.
    """

    c: float
    mu: float
    lam: np.ndarray
    phi: TorusMap
    phi_inverse: TorusMap
    lam_first_order: np.ndarray
    phi_first_order: TorusMap
    g: SpectralScalar
    P: SpectralVectorField
    P_tail: float
    residual: float

    def to_dict(self) -> dict:
        return {"c": self.c, "mu": self.mu, "lambda": [float(v) for v in self.lam],
                "lambda_first_order": [float(v) for v in self.lam_first_order],
                "P_tail": self.P_tail, "residual": self.residual}


def reparametrized_oracle(f: SpectralScalar, omega, K_out: int | None = None, oversample: float = 4.0,
                          N_check: int = 64) -> OracleResult:
    """Closed-form solution for the reparametrised field ``(1/f) X_omega``.

    Raises
    ------
    ZeroDivisionError
        If ``f`` vanishes (or changes sign) on the sampling grid.
    """
    n = f.n
    om = Frequency.of(omega).array
    if K_out is None:
        K_out = max(4 * f.K, 16)
    N = _alias_free_N(K_out, oversample)
    fv = _spec_to_grid(f.coeffs, n, f.K, N)
    if np.min(np.abs(fv)) <= 0 or (np.min(fv) < 0 < np.max(fv)):
        raise ZeroDivisionError("f vanishes on the grid")
    c = f.mean

    def mean_eq(mu):
        return float(np.mean(fv / (1.0 - mu * fv))) - 1.0

    if abs(mean_eq(0.0)) <= 1e-15:
        mu = 0.0
    else:
        # 1 - mu f must keep the sign of f: mu in (-inf, 1/max f) for positive f
        if np.min(fv) > 0:
            lo, hi = -1.0 / np.min(fv), (1.0 - 1e-12) / np.max(fv)
            lo = min(lo, -1.0)
            while mean_eq(lo) > 0:
                lo *= 2.0
        else:
            lo, hi = (1.0 - 1e-12) / np.min(fv), 1.0 / np.max(np.abs(fv))
            while mean_eq(hi) < 0:
                hi *= 2.0
        mu = float(brentq(mean_eq, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=500))
    h = fv / (1.0 - mu * fv) - 1.0
    hs = SpectralScalar(_grid_to_spec(h, n, K_out), n)
    hs.coeffs[(K_out,) * n] = 0.0
    v = solve_scalar(hs, om).g
    inv = TorusMap(SpectralVectorField(np.stack([v.coeffs * om[d] for d in range(n)]), n))
    phi = inv.inverse(K_out=K_out, oversample=2.0)
    g = solve_scalar(f.resize(K_out), om).g
    first = TorusMap(SpectralVectorField(np.stack([g.coeffs * om[d] for d in range(n)]), n))
    pv = 1.0 / fv - 1.0
    pspec, ptail = _grid_to_spec(np.stack([pv * om[d] for d in range(n)]), n, K_out, tail=True)
    P = SpectralVectorField(pspec, n)
    lam = mu * om
    res = conjugacy_residual(P, om, lam, phi, N=N_check)
    return OracleResult(c=c, mu=mu, lam=lam, phi=phi, phi_inverse=inv, lam_first_order=(1.0 - c) * om,
                        phi_first_order=first, g=g, P=P, P_tail=ptail, residual=res)


# --- staged Gevrey driver ----------------------------------------------------

def initial_width(eps0: float, alpha: float, cfg: KamConfig) -> tuple:
    """Closed-form ``u0`` from ``exp(-r phi_b(r/(2 u0))) = C2 C4 eps0 / alpha``.

    Returns ``(u0, ratio, capped)``. When the ratio exceeds 1/2 or ``2 u0 >= r``
    the width is capped at ``0.45 r`` and ``capped`` is set.
    """
    b, r = cfg.b, cfg.r
    ratio = cfg.C2 * cfg.C4 * eps0 / alpha
    cap = 0.45 * r
    if not ratio < 0.5:
        return cap, ratio, True
    L = math.log(1.0 / ratio)
    u0 = 0.5 * r * (b * L / r) ** (-1.0 / b)
    if 2.0 * u0 >= r:
        return cap, ratio, True
    return u0, ratio, False


@dataclass
class GevreyKamCertificate:
    """Ledger of a staged run.

    Every bound is stored next to the measured quantity it controls; flags in
    ``hypotheses`` say which of the sufficient conditions actually hold.
    """

    epsilon0: float
    alpha: float
    u0: float
    u0_capped: bool
    u0_ratio: float
    schedule: dict
    constants: dict
    hypotheses: dict
    stages: list = field(default_factory=list)
    telescoping: dict | None = None
    calibration: dict | None = None
    final: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    lam: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return _clean_json(asdict(self))


def _clean_json(x):
    if isinstance(x, dict):
        return {str(k): _clean_json(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean_json(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _clean_json(x.tolist())
    return x


def _const_field(v, K: int) -> SpectralVectorField:
    return SpectralVectorField.constant(np.asarray(v, dtype=float), K)


def calibrate_constants(F: SpectralVectorField, omega, cfg: KamConfig, alpha: float) -> dict:
    """One measurement pass for ``C2`` and ``C4``.

    ``u0`` is computed with the configured constants, ``C2`` is the smallest
    constant satisfying the three approximation bounds on that schedule and
    ``C4`` the smallest constant satisfying both estimates of the first
    analytic solve. A measured value of zero (e.g. a mean-free ``F`` with a
    trivial map) falls back to the configured constant.
    """
    w = Weight.gevrey(cfg.a)
    eps0 = math.exp(log_weighted_norm(F, w, cfg.r0))
    u0 = cfg.u0 if cfg.u0 is not None else initial_width(eps0, alpha, cfg)[0]
    sched = SmoothingSchedule(cfg.r0, cfg.r, cfg.a, min(u0, cfg.r), cfg.max_outer - 1, K_max=int(cfg.K_max))
    Fs = approximation_sequence(F, sched)
    pop = verify_popov_bounds(F, Fs, sched)
    res = analytic_kam_solve(Fs[0].resize(int(cfg.K_max)), omega, s=u0 / 2.0, sigma=u0 / 16.0, cfg=cfg,
                             alpha=alpha)
    c = res.certificates
    c4 = max(c.get("C4_lambda", 0.0), math.exp(c.get("log_C4_map", -math.inf)))
    return {"C2": pop.C2 if pop.C2 > 0 else cfg.C2, "C4": c4 if c4 > 0 else cfg.C4,
            "C2_by_bound": pop.C2_by_bound, "C4_lambda": c.get("C4_lambda"), "log_C4_map": c.get("log_C4_map"),
            "u0_used": u0}


def gevrey_linearize(F: SpectralVectorField, omega, cfg: KamConfig | None = None, alpha: float | None = None):
    """Staged linearisation of ``X_omega + F`` for a Gevrey perturbation ``F``.

    Returns
    -------
    certificate : GevreyKamCertificate
    lam : ndarray
    Phi : TorusMap

    Raises
    ------
    KamDivergenceError
        If a stage fails to converge.
    EnvelopeViolation
        In strict mode, when a staged increment exceeds its envelope by more
        than ``envelope_slack``.
    """
    cfg = cfg or KamConfig()
    om = Frequency.of(omega)
    n = F.n
    K = max(int(cfg.K_max), 1)
    consts = kam_constants(cfg.a, cfg.kappa, cfg.r, cfg.tau)
    b, r = cfg.b, cfg.r
    w = Weight.gevrey(cfg.a)
    ln_eps = log_weighted_norm(F, w, cfg.r0)
    eps0 = math.exp(ln_eps) if ln_eps > -math.inf else 0.0
    if alpha is None:
        alpha = small_divisor_scan(om, K, tau=cfg.tau0, a=cfg.a).alpha
    if eps0 == 0.0:
        cert = GevreyKamCertificate(epsilon0=0.0, alpha=alpha, u0=0.0, u0_capped=False, u0_ratio=0.0,
                                    schedule={"stages": 0}, constants=consts.to_dict(),
                                    hypotheses={"r_gt_c_tau": consts.theorem_hypothesis},
                                    final={"residual": 0.0}, config=cfg.to_dict(), lam=[0.0] * n)
        return cert, np.zeros(n), TorusMap.identity(n, K)
    calibration = None
    if cfg.calibrate:
        calibration = calibrate_constants(F, om, cfg, alpha)
        cfg = KamConfig(**{**cfg.to_dict(), "C2": calibration["C2"], "C4": calibration["C4"],
                           "calibrate": False})
    if cfg.u0 is not None:
        u0, ratio, capped = cfg.u0, cfg.C2 * cfg.C4 * eps0 / alpha, False
    else:
        u0, ratio, capped = initial_width(eps0, alpha, cfg)
    sched = SmoothingSchedule(cfg.r0, r, cfg.a, min(u0, r), cfg.max_outer - 1, K_max=K)
    Fs = approximation_sequence(F.resize(max(F.K, 1)), sched)
    s0, sigma0 = u0 / 2.0, u0 / 16.0
    sstar = s_star(cfg.a, cfg.tau, cfg.tau0)
    hyp = {"r_gt_c_tau": consts.theorem_hypothesis, "u0_ratio_le_half": ratio <= 0.5,
           "two_u0_lt_r": 2 * u0 < r, "s0_le_s_star": s0 <= sstar, "u0_closed_form": not capped and cfg.u0 is None}
    hyp["theorem_backed"] = all(hyp[k] for k in ("r_gt_c_tau", "u0_ratio_le_half", "two_u0_lt_r", "s0_le_s_star"))

    lam = np.zeros(n)
    Phi = TorusMap.identity(n, K)
    stages, incs_disp = [], []
    prev_disp = Phi.displacement
    for k in range(cfg.max_outer):
        s_k, sig_k = math.ldexp(s0, -k), math.ldexp(sigma0, -k)
        u_prev = 2.0 * u0 if k == 0 else math.ldexp(u0, -(k - 1))
        N_k = sched.N(k)
        Fk = Fs[min(k, len(Fs) - 1)].resize(K)
        X = Fk - _const_field(lam, K)
        G = pullback(X, om.array, Phi, K_out=K, oversample=cfg.oversample) if k else X
        g_l1 = l1_norm(G)
        if k > 0 and g_l1 <= cfg.tol_residual:
            break
        res = analytic_kam_solve(G, om, Theta=None if k == 0 else Phi, s=s_k, sigma=sig_k, cfg=cfg,
                                 alpha=alpha)
        if not res.converged:
            raise KamDivergenceError(f"stage {k} exhausted its budget", res.residual_history)
        lam_inc = res.lam
        lam = lam + lam_inc
        Phi_new = Phi.compose(res.phi, K_out=K, oversample=cfg.oversample)
        inc = TorusMap(Phi_new.displacement - prev_disp)
        s_next = math.ldexp(s0, -(k + 1))
        d_inc, dd_inc = _map_norms(inc, s_next)
        d_tot, dd_tot = _map_norms(Phi_new, s_next)
        lam_env = alpha * math.exp(-r * _phi_b(b, r / u_prev))
        log_map_env = -consts.rho * _phi_b(b, r / u_prev)
        lam_inc_abs = float(np.max(np.abs(lam_inc)))
        rec = {
            "k": k, "u": math.ldexp(u0, -k), "s": s_k, "sigma": sig_k, "N": N_k, "N_used": min(N_k, K),
            "clamped": N_k > K, "input_l1": g_l1, "input_l1_s": l1_norm(G, s_k),
            "threshold_log_margin": res.threshold_log_margin, "inner_iterations": res.iterations,
            "residual_history": res.residual_history, "lambda_inc": lam_inc_abs, "lambda_envelope": lam_env,
            "lambda_ratio": lam_inc_abs / lam_env if lam_env > 0 else math.inf,
            "map_inc": d_inc, "dmap_inc": dd_inc, "log_map_envelope": log_map_env,
            "map_envelope_vacuous": log_map_env >= 0.0,
            "map_ok": max(d_inc, dd_inc) <= cfg.envelope_slack * math.exp(min(log_map_env, 700.0)),
            "dist": dd_tot, "dist_ok": dd_tot <= 1.0 / 3.0, "dist_grid": Phi_new.dist_grid(),
            "nesting_ok": d_tot <= 2.0 * math.ldexp(s0, -(k + 2)),
        }
        rec["lambda_ok"] = lam_inc_abs <= cfg.envelope_slack * lam_env
        stages.append(rec)
        if cfg.strict and not (rec["lambda_ok"] and rec["map_ok"]):
            raise EnvelopeViolation(f"stage {k}: increment exceeds its envelope "
                                    f"(lambda ratio {rec['lambda_ratio']:.3g})")
        incs_disp.append(inc.displacement)
        prev_disp = Phi_new.displacement
        Phi = Phi_new
        if rec["clamped"] and k + 1 >= cfg.max_outer:
            break

    # telescoping certificate for the accumulated maps
    tele = {"w_minus1": u0 / 4.0, "upsilon": consts.upsilon, "nu": consts.nu}
    if consts.rho <= 0:
        tele.update({"status": "refused", "reason": "rho = r - c tau <= 0"})
    else:
        comps = []
        try:
            for d in range(n):
                incs = [SpectralScalar(h.coeffs[d], n) for h in incs_disp]
                _, c_ = telescoping_limit(incs, u0 / 4.0, consts.upsilon, consts.nu, r, cfg.a)
                comps.append(c_.to_dict())
            tele.update({"status": "certified", "components": comps})
        except TelescopingRefusal as exc:
            tele.update({"status": "refused", "reason": str(exc), "required_w_minus1": exc.required_w})
        except HypothesisViolation as exc:
            tele.update({"status": "hypothesis_violated", "stage": exc.j, "log_margin": exc.log_margin})

    residual = conjugacy_residual(F, om.array, lam, Phi, N=cfg.grid_N)
    lam_abs = float(np.max(np.abs(lam)))
    es2 = 2.0 * cfg.C2 * cfg.C4 * eps0
    final = {"residual": residual, "lambda_abs": lam_abs, "es2_bound": es2, "es2_ok": lam_abs <= es2,
             "phi_dist_grid": Phi.dist_grid(), "phi_l1": Phi.displacement_l1(),
             "stages_run": len(stages)}
    if consts.rho > 0 and ratio < 1.0:
        es1 = 2.0 * ratio ** consts.iota
        meas = math.exp(log_weighted_norm(Phi.displacement, w, consts.nu)) if not Phi.is_identity() else 0.0
        final.update({"es1_bound": es1, "es1_measured": meas, "es1_ok": meas <= es1})
    else:
        final.update({"es1_bound": None, "es1_note": "bound not defined: rho <= 0 or ratio >= 1"})
    cert = GevreyKamCertificate(
        epsilon0=eps0, alpha=alpha, u0=u0, u0_capped=capped, u0_ratio=ratio,
        schedule={"u0": u0, "s0": s0, "sigma0": sigma0, "w_minus1": u0 / 4.0, "s_star": sstar,
                  "u": [math.ldexp(u0, -k) for k in range(len(stages))],
                  "s": [math.ldexp(s0, -k) for k in range(len(stages))],
                  "sigma": [math.ldexp(sigma0, -k) for k in range(len(stages))],
                  "N": [sched.N(k) for k in range(len(stages))]},
        constants=consts.to_dict(), hypotheses=hyp, stages=stages, telescoping=tele,
        calibration=calibration, final=final,
        config=cfg.to_dict(), lam=[float(v) for v in lam])
    return cert, lam, Phi
