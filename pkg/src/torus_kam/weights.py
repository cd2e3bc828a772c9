"""Weight functions, Young conjugates and the scalar constants of the scheme.

A weight is a continuous non-decreasing function ``phi`` on ``[0, inf)`` with
``phi(0) = 0`` that grades regularity through ``|f_k| <= C exp(-r phi(|k|))``.
Four families are supported:

* ``Smooth``    phi(t) = ln(1 + t)
* ``Gevrey``    phi(t) = t**a / a, 0 < a < 1   (a = 1 is the analytic weight)
* ``Analytic``  phi(t) = t
* ``LogPower``  psi_b(t) = t / ln(1 + t)**b, b >= 1
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

__all__ = [
    "WeightFamily",
    "Weight",
    "GevreyConstants",
    "TruncatedSearchWarning",
    "conjugate_exponent",
    "weight_eval",
    "gevrey_phi",
    "young_conjugate_gevrey",
    "young_conjugate_numeric",
    "scaled_conjugate",
    "kam_constants",
    "delta_constant",
    "c_constant",
    "gamma_majorant",
    "log_gamma_majorant",
    "psi_product",
    "log_psi_product",
    "psi_bound_exponent",
    "psi_cutoff",
    "s_star",
    "non_quasi_analytic_check",
]


class TruncatedSearchWarning(RuntimeWarning):
    """The maximiser of a grid search sits on the edge of the search window."""


class WeightFamily(str, enum.Enum):
    SMOOTH = "smooth"
    GEVREY = "gevrey"
    ANALYTIC = "analytic"
    LOGPOWER = "logpower"


@dataclass(frozen=True)
class Weight:
    """Tagged weight function.

    Parameters
    ----------
    family : WeightFamily or str
    a : float, optional
        Gevrey exponent in (0, 1]. ``a = 1`` is stored as the analytic family.
    b_pow : float, optional
        Exponent of the log-power weight, ``b_pow >= 1``.
    """

    family: WeightFamily
    a: float | None = None
    b_pow: float | None = None
    _knot: float = field(default=0.0, repr=False, compare=False)

    def __post_init__(self):
        fam = WeightFamily(self.family)
        object.__setattr__(self, "family", fam)
        if fam is WeightFamily.GEVREY:
            if self.a is None or not (0.0 < self.a <= 1.0):
                raise ValueError(f"Gevrey exponent must lie in (0, 1], got {self.a!r}")
            if self.a == 1.0:
                object.__setattr__(self, "family", WeightFamily.ANALYTIC)
                object.__setattr__(self, "a", None)
        elif fam is WeightFamily.LOGPOWER:
            if self.b_pow is None or not (self.b_pow >= 1.0) or not math.isfinite(self.b_pow):
                raise ValueError(f"log-power exponent must be >= 1, got {self.b_pow!r}")
            object.__setattr__(self, "_knot", _logpower_knot(self.b_pow))
        if fam is not WeightFamily.GEVREY and self.a is not None and fam is not WeightFamily.ANALYTIC:
            raise ValueError("parameter 'a' only applies to the Gevrey family")

    # constructors
    @classmethod
    def smooth(cls) -> "Weight":
        return cls(WeightFamily.SMOOTH)

    @classmethod
    def gevrey(cls, a: float) -> "Weight":
        return cls(WeightFamily.GEVREY, a=float(a))

    @classmethod
    def analytic(cls) -> "Weight":
        return cls(WeightFamily.ANALYTIC)

    @classmethod
    def logpower(cls, b_pow: float) -> "Weight":
        return cls(WeightFamily.LOGPOWER, b_pow=float(b_pow))

    def __call__(self, t):
        return weight_eval(self, t)

    def to_dict(self) -> dict:
        out = {"family": self.family.value}
        if self.a is not None:
            out["a"] = self.a
        if self.b_pow is not None:
            out["b_pow"] = self.b_pow
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Weight":
        return cls(WeightFamily(d["family"]), a=d.get("a"), b_pow=d.get("b_pow"))


def _psi_raw(t, b):
    return t / np.log1p(t) ** b


def _logpower_knot(b: float) -> float:
    # psi_b blows up at 0 for b > 1 and tends to 1 for b = 1; the literal formula is
    # kept from max(1, argmin psi_b) on and interpolated linearly from 0 below it.
    if b == 1.0:
        return 1.0
    res = optimize.minimize_scalar(lambda t: _psi_raw(t, b), bounds=(1e-9, 1e6), method="bounded",
                                   options={"xatol": 1e-12})
    return max(1.0, float(res.x))


def conjugate_exponent(a: float) -> float:
    """Return ``b = a / (1 - a)``, so that ``1/a - 1/b = 1``."""
    if not (0.0 < a < 1.0):
        raise ValueError(f"Gevrey exponent must lie in (0, 1), got {a!r}")
    return a / (1.0 - a)


def gevrey_phi(a: float, t):
    """``phi_a(t) = t**a / a`` (``a = 1`` gives the identity)."""
    t = np.asarray(t, dtype=float)
    out = np.power(t, a) / a
    return out if out.ndim else float(out)


def weight_eval(w: Weight, t):
    """Evaluate the weight at ``t >= 0`` (scalar or array)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("weights are defined on t >= 0")
    fam = w.family
    if fam is WeightFamily.SMOOTH:
        out = np.log1p(t_arr)
    elif fam is WeightFamily.GEVREY:
        out = np.power(t_arr, w.a) / w.a
    elif fam is WeightFamily.ANALYTIC:
        out = t_arr.astype(float, copy=True)
    else:
        tk = w._knot
        vk = float(_psi_raw(tk, w.b_pow))
        with np.errstate(divide="ignore", invalid="ignore"):
            lit = _psi_raw(np.maximum(t_arr, tk), w.b_pow)
        out = np.where(t_arr >= tk, lit, vk * t_arr / tk)
    return out if out.ndim else float(out)


def young_conjugate_gevrey(a: float, xi: float) -> float:
    """Closed-form Young conjugate ``phi_a^*(xi) = 1 / (b xi**b)``."""
    b = conjugate_exponent(a)
    if not xi > 0:
        raise ValueError("xi must be positive")
    return 1.0 / (b * xi**b)


def _default_tmax(w: Weight, xi: float) -> float:
    if w.family is WeightFamily.GEVREY:
        return 10.0 * xi ** (-1.0 / (1.0 - w.a))
    if w.family is WeightFamily.SMOOTH:
        return 10.0 * max(1.0, 1.0 / xi)
    if w.family is WeightFamily.ANALYTIC:
        return 10.0
    return 1e3


def young_conjugate_numeric(w: Weight, xi: float, t_max: float | None = None,
                            grid_points: int = 1_000_000) -> float:
    """Brute-force ``max_t {phi(t) - xi t}`` over a uniform grid on ``[0, t_max]``.

    Warns with :class:`TruncatedSearchWarning` when the maximiser is within one
    cell of ``t_max``.
    """
    if not xi > 0:
        raise ValueError("xi must be positive")
    if t_max is None:
        t_max = _default_tmax(w, xi)
    t = np.linspace(0.0, t_max, int(grid_points))
    vals = weight_eval(w, t) - xi * t
    i = int(np.argmax(vals))
    if i >= len(t) - 2:
        warnings.warn(f"maximiser at the edge of [0, {t_max}]", TruncatedSearchWarning, stacklevel=2)
    return float(vals[i])


def scaled_conjugate(a: float, r: float, xi: float) -> float:
    """``r phi_a^*(xi / r) = sup_t {r phi_a(t) - xi t}``."""
    if not r > 0:
        raise ValueError("r must be positive")
    return r * young_conjugate_gevrey(a, xi / r)


def delta_constant(a: float, kappa: float) -> float:
    """``delta = (kappa - 1)(kappa**(1-a) - 1)**(-1/(1-a))``."""
    _check_a_kappa(a, kappa)
    return (kappa - 1.0) * (kappa ** (1.0 - a) - 1.0) ** (-1.0 / (1.0 - a))


def c_constant(a: float, kappa: float) -> float:
    """``c = 32**b * delta``; ``r > c tau`` is the main smallness hypothesis."""
    return 32.0 ** conjugate_exponent(a) * delta_constant(a, kappa)


def _check_a_kappa(a, kappa):
    if not (0.0 < a < 1.0):
        raise ValueError(f"a must lie in (0, 1), got {a!r}")
    if not (1.0 < kappa < 2.0):
        raise ValueError(f"kappa must lie in (1, 2), got {kappa!r}")


@dataclass(frozen=True)
class GevreyConstants:
    """Derived constants for given ``(a, kappa, r, tau)``."""

    a: float
    b: float
    kappa: float
    r: float
    tau: float
    delta: float
    c: float
    rho: float
    upsilon: float
    nu: float
    iota: float
    theorem_hypothesis: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def kam_constants(a: float, kappa: float, r: float, tau: float) -> GevreyConstants:
    """Populate all constants; ``theorem_hypothesis`` records ``r > c tau``.

    The flag gates what a certificate may claim; nothing refuses to run on it.
    """
    _check_a_kappa(a, kappa)
    if not r > 0 or not tau > 0:
        raise ValueError("r and tau must be positive")
    b = conjugate_exponent(a)
    delta = delta_constant(a, kappa)
    c = 32.0**b * delta
    rho = r - c * tau
    upsilon = 8.0 ** (-b) * rho
    nu = upsilon / 2.0
    iota = 8.0 ** (-b) * upsilon / (2.0 * r)
    return GevreyConstants(a=a, b=b, kappa=kappa, r=r, tau=tau, delta=delta, c=c, rho=rho,
                           upsilon=upsilon, nu=nu, iota=iota, theorem_hypothesis=bool(r > c * tau))


# --- Gamma / Psi -----------------------------------------------------------

def _log_integrand(t, sigma, tau0, a):
    return np.log1p(t) + tau0 * np.power(t, a) / a - sigma * t


def _gamma_argmax(sigma, tau0, a, t_max=None, grid=4001):
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if tau0 < 0:
        raise ValueError("tau0 must be non-negative")
    # stationary point of tau0 t^a/a - sigma t, and of ln(1+t) - sigma t
    cands = [1.0 / sigma]
    if tau0 > 0:
        cands.append((tau0 / sigma) ** (1.0 / (1.0 - a)))
    tc = max(cands)
    grid_t = np.concatenate([[0.0], np.logspace(math.log10(tc) - 3, math.log10(tc) + 3, grid)])
    if t_max is not None:
        grid_t = grid_t[grid_t <= t_max]
        grid_t = np.append(grid_t, t_max)
    vals = _log_integrand(grid_t, sigma, tau0, a)
    i = int(np.argmax(vals))
    if i >= len(grid_t) - 1 and len(grid_t) > 2:
        warnings.warn("Gamma maximiser at the edge of the search window", TruncatedSearchWarning,
                      stacklevel=3)
    lo = grid_t[max(i - 1, 0)]
    hi = grid_t[min(i + 1, len(grid_t) - 1)]
    best_t, best_v = float(grid_t[i]), float(vals[i])
    if hi > lo:
        res = optimize.minimize_scalar(lambda t: -_log_integrand(t, sigma, tau0, a), bounds=(lo, hi),
                                       method="bounded", options={"xatol": 1e-12 * max(hi, 1.0)})
        if -res.fun > best_v:
            best_t, best_v = float(res.x), float(-res.fun)
    return best_t, best_v


def log_gamma_majorant(sigma: float, tau0: float, a: float, t_max: float | None = None,
                       grid: int = 4001) -> float:
    """Natural log of ``Gamma(sigma) = sup_t (1+t) exp(tau0 phi_a(t) - sigma t)``."""
    return _gamma_argmax(sigma, tau0, a, t_max, grid)[1]


def gamma_majorant(sigma: float, tau0: float, a: float, t_max: float | None = None,
                   grid: int = 4001) -> float:
    """``Gamma(sigma)``; may overflow to ``inf`` for tiny sigma (use the log form)."""
    lg = log_gamma_majorant(sigma, tau0, a, t_max, grid)
    return math.exp(lg) if lg < 709.0 else math.inf


def psi_cutoff(kappa: float, eps: float = 1e-8) -> int:
    """Smallest ``J`` with ``kappa_J = (kappa - 1) kappa**-(J+1) < eps``."""
    J = 0
    while (kappa - 1.0) * kappa ** (-(J + 1)) >= eps:
        J += 1
    return J


def _psi_sequence(sigma, a, kappa, J):
    j = np.arange(J + 1)
    sig_j = sigma * (kappa ** (1.0 - a) - 1.0) * kappa ** (-(1.0 - a) * (j + 1))
    kap_j = (kappa - 1.0) * kappa ** (-(j + 1.0))
    return sig_j, kap_j


def log_psi_product(sigma: float, a: float, kappa: float, tau0: float, J: int | None = None) -> float:
    """``ln prod_{j<=J} Gamma(sigma_j)**kappa_j`` on the geometric width sequence.

    ``sigma_j = sigma (kappa**(1-a) - 1) kappa**(-(1-a)(j+1))`` sums to ``sigma``
    and ``kappa_j = (kappa - 1) kappa**-(j+1)`` sums to one.
    """
    _check_a_kappa(a, kappa)
    if J is None:
        J = psi_cutoff(kappa)
    sig_j, kap_j = _psi_sequence(sigma, a, kappa, J)
    return float(sum(k * log_gamma_majorant(s, tau0, a) for s, k in zip(sig_j, kap_j)))


def psi_product(sigma: float, a: float, kappa: float, tau0: float, J: int | None = None) -> float:
    lp = log_psi_product(sigma, a, kappa, tau0, J)
    return math.exp(lp) if lp < 709.0 else math.inf


def psi_bound_exponent(sigma: float, a: float, kappa: float, tau: float) -> float:
    """Exponent ``delta tau phi_b(tau / sigma)`` of the bound on Psi."""
    b = conjugate_exponent(a)
    return delta_constant(a, kappa) * tau * float(gevrey_phi(b, tau / sigma))


def s_star(a: float, tau: float, tau0: float, lo: float = 1e-12, hi: float = 1e2,
           iters: int = 200) -> float:
    """Largest width scale below which ``ln(1+t*) <= (tau - tau0) phi_a(t*)`` at the
    maximiser ``t*`` of Gamma.

    The condition is tested on a logarithmic sigma ladder from ``lo`` upwards; the
    first failure is bracketed and refined by bisection in ``log sigma``. Below
    ``s*`` one gets ``Gamma(sigma) <= exp(tau phi_b(tau/sigma))`` by Young's
    inequality.
    """
    if not tau > tau0 > 0:
        raise ValueError("need tau > tau0 > 0")

    def ok(sig):
        t, _ = _gamma_argmax(sig, tau0, a)
        return math.log1p(t) <= (tau - tau0) * t**a / a

    ladder = np.logspace(math.log10(lo), math.log10(hi), 400)
    if not ok(ladder[0]):
        return 0.0
    prev = ladder[0]
    for s in ladder[1:]:
        if not ok(s):
            break
        prev = s
    else:
        return float(hi)
    a_, b_ = math.log(prev), math.log(s)
    for _ in range(iters):
        mid = 0.5 * (a_ + b_)
        if ok(math.exp(mid)):
            a_ = mid
        else:
            b_ = mid
        if b_ - a_ < 1e-12:
            break
    return math.exp(a_)


# --- quasi-analyticity ------------------------------------------------------

@dataclass(frozen=True)
class QuasiAnalyticityReport:
    verdict: str  # "NQ" or "Q"
    closed_form_reason: str
    partial_integrals: tuple
    horizons: tuple
    growth_rate: float

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "reason": self.closed_form_reason,
                "horizons": list(self.horizons), "partial_integrals": list(self.partial_integrals),
                "growth_rate": self.growth_rate}


def non_quasi_analytic_check(w: Weight, horizon: float = 1e8) -> QuasiAnalyticityReport:
    """Decide whether ``int_1^inf phi(t) / t**2 dt`` converges.

    The verdict comes from the closed form for each family; a numerical
    integration on ``[1, T]`` for growing ``T`` is attached, with the increment
    per decade of ``T`` as the divergence-rate indicator (zero in the limit for
    NQ weights, bounded below for Q weights).
    """
    fam = w.family
    if fam is WeightFamily.SMOOTH:
        verdict, why = "NQ", "ln(1+t)/t^2 is integrable"
    elif fam is WeightFamily.GEVREY:
        verdict, why = "NQ", f"t^(a-2) with a={w.a} < 1 is integrable"
    elif fam is WeightFamily.ANALYTIC:
        verdict, why = "Q", "1/t is not integrable"
    elif w.b_pow > 1.0:
        verdict, why = "NQ", f"1/(t ln(t)^{w.b_pow}) is integrable for b > 1"
    else:
        verdict, why = "Q", "1/(t ln t) is not integrable"

    # substitute t = e^u so the integrand phi(e^u) e^{-u} is smooth in u
    def integrand(u):
        t = math.exp(u)
        return weight_eval(w, t) / t

    horizons, vals, acc, prev_u = [], [], 0.0, 0.0
    T = 10.0
    while T <= horizon * 1.0001:
        u = math.log(T)
        acc += integrate.quad(integrand, prev_u, u, limit=200)[0]
        horizons.append(T)
        vals.append(acc)
        prev_u = u
        T *= 10.0
    rate = (vals[-1] - vals[-2]) if len(vals) > 1 else float("nan")
    return QuasiAnalyticityReport(verdict, why, tuple(vals), tuple(horizons), rate)
