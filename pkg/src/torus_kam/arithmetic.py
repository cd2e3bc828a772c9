"""Small divisors, continued fractions and arithmetic-class diagnostics.

For ``omega`` in ``R^n`` the small divisors are ``k.omega`` with ``k`` a nonzero
integer vector. For ``n = 2`` and ``omega = (1, alpha)`` the worst divisors come
from the continued-fraction convergents ``p_n / q_n`` of ``alpha``, and every
arithmetic condition used here is phrased through the growth of ``q_n``:

========================  ==========================================
Diophantine (D)           ``ln q_{n+1} = O(ln q_n)``
Russmann (R)              ``ln q_{n+1} = o(q_n)``
Bruno (B)                 ``sum q_n^{-1} ln q_{n+1} < inf``
Gevrey-R with exponent a  ``ln q_{n+1} = o(q_n^a)``
Gevrey-B with exponent a  ``sum q_n^{-a} ln q_{n+1} < inf``
========================  ==========================================

Membership is asymptotic; finite data can only support or refute it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from math import isqrt
from typing import Callable

import mpmath
import numpy as np

from .bignum import Tower, log_diff, mp
from .fourier import SpectralScalar, max_norm_array
from .weights import Weight, weight_eval

__all__ = [
    "ResonanceError",
    "NoWitnessError",
    "Frequency",
    "DivisorScan",
    "QuadraticIrrational",
    "ContinuedFractionRecord",
    "ClassificationReport",
    "small_divisor_scan",
    "divisor_table",
    "continued_fraction",
    "classify",
    "liouville_builder",
    "growth_constant",
    "growth_power_of_two",
    "growth_self_power",
    "growth_stretched_exp",
    "counterexample_source",
    "liouville_counterexample_norms",
    "golden_frequency",
    "GOLDEN",
]

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
_BITS_EXACT = 65536


class ResonanceError(ArithmeticError):
    """``k.omega == 0`` for some nonzero ``k``."""

    def __init__(self, k):
        self.k = tuple(int(x) for x in k)
        super().__init__(f"resonant frequency: k = {self.k} gives k.omega = 0")


class NoWitnessError(ValueError):
    """No mode satisfies the small-divisor witness inequality."""


# --- quadratic irrationals ---------------------------------------------------

@dataclass(frozen=True)
class QuadraticIrrational:
    """``(P + sqrt(D)) / Q`` with ``D`` a positive non-square."""

    P: int
    D: int
    Q: int

    def __post_init__(self):
        if self.D <= 0 or isqrt(self.D) ** 2 == self.D:
            raise ValueError("D must be a positive non-square")
        if self.Q == 0:
            raise ValueError("Q must be nonzero")

    @classmethod
    def golden_fraction(cls) -> "QuadraticIrrational":
        return cls(-1, 5, 2)

    @classmethod
    def sqrt(cls, D: int, shift: int = 0) -> "QuadraticIrrational":
        return cls(shift, D, 1)

    def __float__(self):
        return (self.P + math.sqrt(self.D)) / self.Q

    def to_mpf(self, ctx=mp):
        return (ctx.mpf(self.P) + ctx.sqrt(self.D)) / self.Q

    def _normalized(self):
        P, D, Q = self.P, self.D, self.Q
        if (D - P * P) % Q != 0:
            P, D, Q = P * abs(Q), D * Q * Q, Q * abs(Q)
        return P, D, Q

    def partial_quotients(self, terms: int) -> tuple[int, list]:
        """Return ``(a_0, [a_1, ..., a_terms])`` by the exact periodic algorithm."""
        m, D, d = self._normalized()
        s = isqrt(D)
        out = []
        for _ in range(terms + 1):
            a = _floor_quadratic(m, D, d, s)
            out.append(a)
            m = d * a - m
            d = (D - m * m) // d
        return out[0], out[1:]


def _floor_quadratic(m, D, d, s):
    # floor((m + sqrt(D)) / d), exact; s = isqrt(D) and sqrt(D) is irrational
    if d > 0:
        return (m + s) // d
    return -((m + s) // (-d)) - 1


# --- frequencies and scans ---------------------------------------------------

@dataclass(frozen=True)
class Frequency:
    """Frequency vector with an optional exact description of ``omega = (1, alpha)``."""

    values: tuple
    alpha: QuadraticIrrational | None = None

    def __post_init__(self):
        vals = tuple(float(v) for v in np.asarray(self.values, dtype=float).ravel())
        if len(vals) < 1 or not all(math.isfinite(v) for v in vals):
            raise ValueError("frequency must be a finite real vector")
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values)

    @classmethod
    def of(cls, omega) -> "Frequency":
        return omega if isinstance(omega, Frequency) else cls(tuple(np.asarray(omega, dtype=float)))


def golden_frequency() -> Frequency:
    """``omega = (1, (1 + sqrt 5)/2)`` with its exact description."""
    return Frequency((1.0, GOLDEN), QuadraticIrrational(1, 5, 2))


@dataclass
class DivisorScan:
    K: int
    worst_k: tuple
    min_div: float
    gamma_inv: float
    gamma_k: tuple
    tau: float
    weight: Weight
    alpha: float

    @property
    def a(self):
        return self.weight.a

    def to_dict(self) -> dict:
        return {"K": self.K, "worst_k": list(self.worst_k), "min_div": self.min_div,
                "gamma_inv": self.gamma_inv, "gamma_k": list(self.gamma_k), "tau": self.tau,
                "weight": self.weight.to_dict(), "alpha": self.alpha}


def _box_indices(n: int, K: int) -> np.ndarray:
    ax = np.arange(-K, K + 1)
    mesh = np.meshgrid(*([ax] * n), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def divisor_table(omega, K: int) -> np.ndarray:
    """``|k.omega|`` over the box ``|k| <= K`` as an array of shape ``(2K+1,)*n``."""
    om = Frequency.of(omega).array
    n = om.size
    k = np.arange(-K, K + 1, dtype=float)
    out = np.zeros((2 * K + 1,) * n)
    for d in range(n):
        shape = [1] * n
        shape[d] = -1
        out = out + om[d] * k.reshape(shape)
    return np.abs(out)


def _resonance_check(div: np.ndarray, n: int, K: int) -> None:
    zero = div == 0.0
    zero[(K,) * n] = False
    if np.any(zero):
        ks = np.argwhere(zero) - K
        norms = np.abs(ks).max(axis=1)
        ks = ks[norms == norms.min()]
        for k in ks:
            nz = k[np.nonzero(k)[0][0]]
            if nz > 0:
                raise ResonanceError(k)
        raise ResonanceError(ks[0])


def small_divisor_scan(omega, K: int, tau: float = 1.0, a: float | None = 0.5,
                       weight: Weight | None = None) -> DivisorScan:
    """Exhaustive scan of ``0 < |k| <= K``.

    Ties are broken toward the lexicographically smallest ``k`` (both signs
    are scanned, so ``k`` and ``-k`` compete).
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    om = Frequency.of(omega)
    n = om.n
    if weight is None:
        weight = Weight.gevrey(a) if a is not None and a < 1 else Weight.analytic()
    div = divisor_table(om, K)
    _resonance_check(div, n, K)
    c = (K,) * n
    masked = div.copy()
    masked[c] = np.inf
    i = int(np.argmin(masked))
    worst = tuple(int(x) - K for x in np.unravel_index(i, masked.shape))
    phi = weight_eval(weight, max_norm_array(n, K).astype(float))
    with np.errstate(divide="ignore"):
        lg = -np.log(2.0 * np.pi * div) - tau * phi
    lg[c] = -np.inf
    j = int(np.argmax(lg))
    gk = tuple(int(x) - K for x in np.unravel_index(j, lg.shape))
    ginv = float(np.exp(lg.flat[j]))
    return DivisorScan(K=K, worst_k=worst, min_div=float(masked.flat[i]), gamma_inv=ginv,
                       gamma_k=gk, tau=float(tau), weight=weight,
                       alpha=float(1.0 / (2.0 * np.pi * ginv)))


# --- continued fractions -----------------------------------------------------

def _as_log_tower(x):
    return Tower.of(x)


@dataclass
class ContinuedFractionRecord:
    """Partial quotients ``a_1..a_N`` and convergents ``p_n / q_n``, ``n = 0..N``.

    Entries beyond ordinary integer size are :class:`~torus_kam.bignum.Tower`
    values; the corresponding numerators are then ``None``.
    """

    alpha_value: float
    partial_quotients: list
    denominators: list
    numerators: list
    exact: bool = True
    trustworthy_terms: int | None = None
    precision_exhausted: bool = False
    source: str = ""

    def __post_init__(self):
        if self.trustworthy_terms is None:
            self.trustworthy_terms = len(self.partial_quotients)

    def __len__(self):
        return len(self.partial_quotients)

    # diagnostics -----------------------------------------------------------
    def _ln_q(self):
        return [_ln_mpf_or_tower(q) for q in self.denominators]

    def log_ratio_russmann(self) -> list:
        """``ln(ln q_{n+1} / q_n)`` for ``n = 0..N-1`` (``nan`` when unresolved)."""
        return [log_diff(_ln_tower(self.denominators[i + 1]), self.denominators[i])
                for i in range(len(self.denominators) - 1)]

    def log_ratio_diophantine(self) -> list:
        """``ln(ln q_{n+1} / ln q_n)``; ``nan`` where ``q_n = 1``."""
        out = []
        for i in range(len(self.denominators) - 1):
            q = self.denominators[i]
            if _is_one(q):
                out.append(mp.nan)
                continue
            out.append(log_diff(_ln_tower(self.denominators[i + 1]), _ln_tower(q)))
        return out

    def log_ratio_gevrey(self, a: float) -> list:
        """``ln(ln q_{n+1} / q_n^a)``."""
        return [log_diff(_ln_tower(self.denominators[i + 1]), _pow_tower(self.denominators[i], a))
                for i in range(len(self.denominators) - 1)]

    def ratio_russmann(self) -> list:
        """``ln q_{n+1} / q_n``."""
        return [_exp_capped(d) for d in self.log_ratio_russmann()]

    def ratio_diophantine(self) -> list:
        """``ln q_{n+1} / ln q_n``."""
        return [_exp_capped(d) for d in self.log_ratio_diophantine()]

    def ratio_gevrey(self, a: float) -> list:
        """``ln q_{n+1} / q_n^a``."""
        return [_exp_capped(d) for d in self.log_ratio_gevrey(a)]

    def bruno_sums(self) -> list:
        """Partial sums of ``q_n^{-1} ln q_{n+1}``."""
        return _partial_sums(self.ratio_russmann())

    def gevrey_bruno_sums(self, a: float) -> list:
        """Partial sums of ``q_n^{-a} ln q_{n+1}``."""
        return _partial_sums(self.ratio_gevrey(a))

    def convergent(self, n: int) -> Fraction | None:
        p, q = self.numerators[n], self.denominators[n]
        if p is None or not isinstance(q, int):
            return None
        return Fraction(p, q)

    def rational_approximation(self) -> Fraction | None:
        """Last convergent with exact integer data."""
        for n in range(len(self.denominators) - 1, -1, -1):
            c = self.convergent(n)
            if c is not None:
                return c
        return None

    def to_dict(self, a: float = 0.5) -> dict:
        return {
            "alpha_value": self.alpha_value,
            "exact": self.exact,
            "trustworthy_terms": self.trustworthy_terms,
            "precision_exhausted": self.precision_exhausted,
            "source": self.source,
            "partial_quotients": [_jsonable(x) for x in self.partial_quotients],
            "denominators": [_jsonable(x) for x in self.denominators],
            "bruno_sums": [_num(x) for x in self.bruno_sums()],
            "gevrey_bruno_sums": [_num(x) for x in self.gevrey_bruno_sums(a)],
            "ratio_russmann": [_num(x) for x in self.ratio_russmann()],
            "ratio_diophantine": [_num(x) for x in self.ratio_diophantine()],
            "ratio_gevrey": [_num(x) for x in self.ratio_gevrey(a)],
            "a": a,
        }


def _jsonable(x):
    if isinstance(x, int):
        return x if x.bit_length() <= 53 else str(x) if x.bit_length() <= 4096 else {"log": _num(_ln_mpf_or_tower(x))}
    if isinstance(x, Tower):
        return {"tower": x.to_dict()}
    return x


def _num(x):
    if isinstance(x, Tower):
        return {"tower": x.to_dict()}
    try:
        v = float(x)
    except (OverflowError, TypeError):
        return str(x)
    return v if math.isfinite(v) else (mp.nstr(x, 20) if not (x == mp.inf or x == -mp.inf) else str(v))


def _is_one(q) -> bool:
    return (isinstance(q, int) and q == 1)


def _ln_tower(q) -> Tower:
    t = Tower.of(q)
    if t.height == 0 and t.top <= 1:
        # ln q <= 0 cannot be a Tower; clamp to a tiny positive value
        return Tower(0, max(mp.log(t.top), mp.mpf(2) ** -300))
    return t.log()


def _ln_mpf_or_tower(q):
    t = Tower.of(q)
    v = t.log_mpf()
    return v if v != mp.inf else t.log()


def _pow_tower(q, a) -> Tower:
    return Tower.of(q) ** a


def _ratio(x: Tower, y) -> "mpmath.mpf":
    return x / Tower.of(y)


def _exp_capped(d):
    if mp.isnan(d):
        return mp.nan
    if d > 2**24:
        return mp.inf
    if d < -(2**24):
        return mp.zero
    return mp.exp(d)


def _partial_sums(terms) -> list:
    out, acc = [], mp.zero
    for t in terms:
        acc = acc + t
        out.append(acc)
    return out


def _cf_from_quotients(a0: int, quotients: list, alpha_value: float, exact=True, source=""):
    p_prev, p = 1, a0
    q_prev, q = 0, 1
    ps, qs = [p], [q]
    for a in quotients:
        p_new = _lin(a, p, p_prev)
        q_new = _lin(a, q, q_prev)
        p_prev, p, q_prev, q = p, p_new, q, q_new
        ps.append(p if isinstance(p, int) else None)
        qs.append(q)
    return ContinuedFractionRecord(alpha_value=alpha_value, partial_quotients=list(quotients),
                                   denominators=qs, numerators=ps, exact=exact, source=source)


def _lin(a, x, y):
    """``a x + y`` exactly for ints within the size budget, else as a Tower."""
    if x is None or y is None:
        return None if not isinstance(a, Tower) and x is None else _tower_lin(a, x, y)
    if isinstance(a, int) and isinstance(x, int) and isinstance(y, int):
        if a.bit_length() + x.bit_length() <= _BITS_EXACT:
            return a * x + y
    return _tower_lin(a, x, y)


def _tower_lin(a, x, y):
    if x is None:
        return None
    res = Tower.of(a) * Tower.of(x)
    return res + Tower.of(y) if y is not None else res


def continued_fraction(alpha, terms: int, prec: int = 256) -> ContinuedFractionRecord:
    """Continued fraction of ``alpha`` (reduced to its fractional part).

    Parameters
    ----------
    alpha : QuadraticIrrational, float, str or mpmath number
        Quadratic irrationals are expanded exactly. Other reals are expanded
        with interval arithmetic: a float stands for the interval of reals that
        round to it, a string is parsed at ``prec`` bits with a one-ulp
        radius. Expansion stops at the first partial quotient whose floor is not
        certified, and the record is flagged ``precision_exhausted``.
    terms : int
        Number of partial quotients ``a_1..a_terms``.
    """
    if terms < 0:
        raise ValueError("terms must be >= 0")
    if isinstance(alpha, QuadraticIrrational):
        a0, quots = alpha.partial_quotients(terms)
        return _cf_from_quotients(0, quots, float(alpha) - a0, True, source=str(alpha))
    if isinstance(alpha, (Fraction, int)):
        raise ValueError("alpha must be irrational")
    iv = mpmath.iv
    with mpmath.workprec(prec):
        if isinstance(alpha, float):
            m = mpmath.mpf(alpha)
            lo = mpmath.mpf(math.nextafter(alpha, -math.inf))
            hi = mpmath.mpf(math.nextafter(alpha, math.inf))
            x = iv.mpf([m - (m - lo) / 2, m + (hi - m) / 2])
        else:
            m = mpmath.mpf(alpha)
            eps = abs(m) * mpmath.mpf(2) ** (-prec + 2) + mpmath.mpf(2) ** (-prec)
            x = iv.mpf([m - eps, m + eps])
        a0 = int(mpmath.floor(x.a))
        if int(mpmath.floor(x.b)) != a0:
            raise ValueError("alpha not resolved to its integer part")
        x = x - a0
        alpha_value = float(mpmath.mpf(x.mid))
        quots = []
        exhausted = False
        for _ in range(terms):
            if x.a <= 0:
                exhausted = True
                break
            y = 1 / x
            lo, hi = int(mpmath.floor(y.a)), int(mpmath.floor(y.b))
            if lo != hi:
                exhausted = True
                break
            quots.append(lo)
            x = y - lo
    rec = _cf_from_quotients(0, quots, alpha_value, exact=False, source=repr(alpha))
    rec.trustworthy_terms = len(quots)
    rec.precision_exhausted = exhausted
    return rec


# --- classification ----------------------------------------------------------

CAVEAT = ("membership in these classes is an asymptotic statement; finite-horizon data can "
          "support or refute it but never prove it")


@dataclass
class ConditionEvidence:
    name: str
    kind: str  # "ratio->0", "bounded", "summable"
    values: list
    trend_slope: float
    verdict: str  # "supported" | "refuted" | "inconclusive"
    detail: str = ""

    def to_dict(self):
        return {"name": self.name, "kind": self.kind, "values": [_num(v) for v in self.values],
                "trend_slope": self.trend_slope, "verdict": self.verdict, "detail": self.detail}


@dataclass
class ClassificationReport:
    a: float
    horizon: int
    conditions: dict = field(default_factory=dict)
    caveat: str = CAVEAT

    def verdict(self, name: str) -> str:
        return self.conditions[name].verdict

    def to_dict(self) -> dict:
        return {"a": self.a, "horizon": self.horizon, "caveat": self.caveat,
                "conditions": {k: v.to_dict() for k, v in self.conditions.items()}}


_HUGE_LOG = 1e300
_STALL = 0.05  # a log-ratio step smaller than this counts as "no longer decreasing"


def _clean(logs):
    """Drop unresolved (nan) entries; returns floats with +-inf kept."""
    out = []
    for d in logs:
        if mp.isnan(d):
            continue
        if d == mp.inf:
            out.append(_HUGE_LOG * 10)
        elif d == -mp.inf:
            out.append(-_HUGE_LOG * 10)
        else:
            # order-preserving clip of astronomically large log-ratios
            out.append(float(max(min(d, mp.mpf(_HUGE_LOG)), -mp.mpf(_HUGE_LOG))))
    return out


def _slope(ys):
    ys = np.asarray(ys, dtype=float)
    ok = np.isfinite(ys)
    if ys.size and ys[-1] == np.inf:
        return math.inf
    if ys.size and ys[-1] == -np.inf:
        return -math.inf
    if ok.sum() < 2:
        return 0.0
    x = np.arange(ys.size)[ok]
    return float(np.polyfit(x, ys[ok], 1)[0])


def _window(logs, minimum=3):
    vals = _clean(logs)
    w = vals[len(vals) // 2:]
    if len(w) < minimum:
        w = vals[-minimum:]
    return vals, w


def _ratio_to_zero(name, logs):
    vals, w = _window(logs)
    dropped = len(logs) - len(vals)
    detail = f"log-ratio trend over the last {len(w)} resolved terms; {dropped} unresolved"
    if len(w) < 3:
        return ConditionEvidence(name, "ratio->0", logs, math.nan, "inconclusive", detail)
    slope = _slope(w)
    step = w[-2] - w[-1]
    if slope < 0 and step >= _STALL:
        verdict = "supported"
    elif step < _STALL:
        verdict = "refuted"
        detail += "; the ratio has stopped decreasing"
    else:
        verdict = "inconclusive"
    return ConditionEvidence(name, "ratio->0", logs, slope, verdict, detail)


def _bounded(name, logs):
    vals, w = _window(logs)
    dropped = len(logs) - len(vals)
    detail = f"log-ratio trend over the last {len(w)} resolved terms; {dropped} unresolved"
    if len(w) < 3:
        return ConditionEvidence(name, "bounded", logs, math.nan, "inconclusive", detail)
    slope = _slope(w)
    if math.isfinite(w[-1]) and abs(slope) <= 0.05 and w[-1] - min(w) < math.log(10.0):
        verdict = "supported"
    elif slope > 0 and w[-1] > w[0] + math.log(10.0):
        verdict = "refuted"
    else:
        verdict = "inconclusive"
    return ConditionEvidence(name, "bounded", logs, slope, verdict, detail)


def _summable(name, logs, tol=1e-3):
    terms = [_exp_capped(d) for d in logs]
    sums = _partial_sums([t for t in terms if not mp.isnan(t)])
    vals, w = _window(logs)
    detail = f"{len(logs) - len(vals)} unresolved terms"
    if len(w) < 3:
        return ConditionEvidence(name, "summable", sums, math.nan, "inconclusive", detail)
    slope = _slope(w)
    last = math.exp(w[-1]) if w[-1] < 700 else math.inf
    total = float(sums[-1]) if sums[-1] != mp.inf else math.inf
    detail += f"; last term {last:.3g} against relative tolerance {tol}"
    if slope < 0 and w[-2] - w[-1] >= _STALL and last < tol * max(1.0, total):
        verdict = "supported"
    elif w[-2] - w[-1] < _STALL and last >= tol * max(1.0, total):
        verdict = "refuted"
    else:
        verdict = "inconclusive"
    return ConditionEvidence(name, "summable", sums, slope, verdict, detail)


def classify(record: ContinuedFractionRecord, a: float = 0.5, horizon: int | None = None) -> ClassificationReport:
    """Finite-horizon evidence for the D, R, B, Gevrey-R and Gevrey-B conditions.

    Trends are read from the logarithms of the defining ratios over the
    second half of the horizon. Ratios that cannot be resolved at the working
    precision (possible for iterated-exponential denominators) are dropped and
    counted in the evidence detail.
    """
    N = len(record.partial_quotients)
    if horizon is None:
        horizon = N
    horizon = min(horizon, N)
    if horizon < 5:
        raise ValueError("classification needs at least 5 partial quotients")
    rec = ContinuedFractionRecord(record.alpha_value, record.partial_quotients[:horizon],
                                  record.denominators[: horizon + 1], record.numerators[: horizon + 1])
    rep = ClassificationReport(a=a, horizon=horizon)
    rus = rec.log_ratio_russmann()
    gev = rec.log_ratio_gevrey(a)
    rep.conditions["diophantine"] = _bounded("diophantine", rec.log_ratio_diophantine()[1:])
    rep.conditions["russmann"] = _ratio_to_zero("russmann", rus)
    rep.conditions["bruno"] = _summable("bruno", rus)
    rep.conditions["gevrey_russmann"] = _ratio_to_zero("gevrey_russmann", gev)
    rep.conditions["gevrey_bruno"] = _summable("gevrey_bruno", gev)
    return rep


# --- Liouville-type builders -------------------------------------------------

def growth_constant(c: int) -> Callable:
    def g(q):
        return int(c)
    return g


def growth_power_of_two(q):
    """``a_{n+1} = 2**q_n``."""
    if isinstance(q, int) and q <= _BITS_EXACT:
        return 2**q
    return 2 ** Tower.of(q)


def growth_self_power(q):
    """``a_{n+1} = q_n**q_n``."""
    if isinstance(q, int) and q.bit_length() * q <= _BITS_EXACT:
        return max(q, 2) ** q if q > 1 else 2
    t = Tower.of(q)
    return (t.log() * t).exp() if t > Tower.of(2) else Tower.of(4)


def growth_stretched_exp(beta: float) -> Callable:
    """``a_{n+1} = ceil(exp(q_n**beta))``, so ``ln a_{n+1} ~ q_n**beta``."""
    def g(q):
        if isinstance(q, int):
            x = mp.mpf(q) ** beta
            if x < 40:
                return int(math.ceil(math.exp(float(x))))
            if x * 1.4427 < _BITS_EXACT:
                return int(mp.ceil(mp.exp(x)))
        return (Tower.of(q) ** beta).exp()
    return g


def liouville_builder(growth: Callable, terms: int):
    """Continued fraction with prescribed partial quotients ``a_{n+1} = growth(q_n)``.

    Returns
    -------
    record : ContinuedFractionRecord
    approximation : Fraction or None
        The last convergent with exact integer data; its distance to ``alpha``
        is below ``1 / q_n**2``.
    """
    quots = []
    p_prev, p, q_prev, q = 1, 0, 0, 1
    qs, ps = [1], [0]
    for _ in range(terms):
        a = growth(q)
        if isinstance(a, int) and a < 1:
            raise ValueError("growth must yield positive integers")
        quots.append(a)
        p_new = _lin(a, p, p_prev) if p is not None and p_prev is not None else None
        q_new = _lin(a, q, q_prev)
        if not isinstance(p_new, int):
            p_new = None
        p_prev, p, q_prev, q = p, p_new, q, q_new
        ps.append(p)
        qs.append(q)
    alpha_value = 0.0
    last = None
    for n in range(len(qs) - 1, -1, -1):
        if ps[n] is not None and isinstance(qs[n], int):
            last = Fraction(ps[n], qs[n])
            break
    if last is not None:
        alpha_value = float(last)
    rec = ContinuedFractionRecord(alpha_value=alpha_value, partial_quotients=quots, denominators=qs,
                                  numerators=ps, exact=True, source=getattr(growth, "__name__", "growth"))
    return rec, last


# --- counterexample sources ----------------------------------------------------

def counterexample_source(omega, w: Weight, tau_seq, K: int, return_report: bool = False,
                          alpha_mp=None):
    """Sparse source whose cohomological solution loses every weighted norm.

    For each ``tau_j`` a witness ``k_j`` with ``|k_j| <= K`` and
    ``|2 pi k_j.omega|^{-1} >= exp(tau_j phi(|k_j|))`` is searched (smallest
    ``|k|`` first, distinct up to sign), and ``f_{k_j} = (2 pi i k_j.omega)
    |2 pi k_j.omega|^{-1/2}`` is placed on ``+-k_j``. Then ``|f_{k_j}| <=
    exp(-(tau_j/2) phi(|k_j|))`` while ``|g_{k_j}| >= exp((tau_j/2) phi(|k_j|))``.

    For ``n = 2`` with ``omega = (1, alpha)`` the search runs over
    ``k = (-round(k_2 alpha), k_2)``, the only candidates for the smallest
    divisor at given ``k_2``, when ``alpha_mp`` is supplied (an exact
    ``Fraction`` or an mpf) or the box is large; otherwise the full box is
    scanned.
    """
    om = Frequency.of(omega)
    n = om.n
    tau_seq = [float(t) for t in tau_seq]
    cands = _witness_candidates(om, K, alpha_mp)
    used = set()
    modes, witnesses, skipped = {}, [], []
    for j, tau in enumerate(tau_seq):
        found = None
        for k, dv in cands:
            key = k if k > tuple(-x for x in k) else tuple(-x for x in k)
            if key in used:
                continue
            ln_inv = -mp.log(2 * mp.pi * dv)
            if ln_inv >= tau * weight_eval(w, float(max(abs(x) for x in k))):
                found = (k, dv)
                break
        if found is None:
            skipped.append(j)
            continue
        k, dv = found
        used.add(k if k > tuple(-x for x in k) else tuple(-x for x in k))
        sgn = _sign_kdot(om, k, alpha_mp)
        val = complex(1j * sgn * float(mp.sqrt(2 * mp.pi * dv)))
        modes[k] = val
        witnesses.append({"j": j, "tau": tau, "k": list(k), "divisor": float(dv),
                          "abs_f": abs(val), "bound_f": math.exp(-0.5 * tau * weight_eval(w, float(max(map(abs, k))))),
                          "abs_g": float(1 / mp.sqrt(2 * mp.pi * dv))})
    if not modes:
        raise NoWitnessError("no witness found for any tau_j")
    f = SpectralScalar.from_modes(n, K, modes)
    if return_report:
        return f, {"witnesses": witnesses, "skipped": skipped}
    return f


def _sign_kdot(om: Frequency, k, alpha_mp) -> float:
    if alpha_mp is not None and om.n == 2:
        v = k[0] + k[1] * alpha_mp
    else:
        v = float(np.dot(k, om.array))
    return 1.0 if v > 0 else -1.0


def _witness_candidates(om: Frequency, K: int, alpha_mp):
    """Modes sorted by ``|k|`` then lexicographically, with their divisors ``|k.omega|``."""
    n = om.n
    out = []
    if n == 2 and (alpha_mp is not None or (2 * K + 1) ** 2 > 4_000_000):
        if om.values[0] != 1.0:
            raise ValueError("line search needs omega = (1, alpha)")
        alpha = alpha_mp if alpha_mp is not None else Fraction(om.values[1])
        if not isinstance(alpha, Fraction):
            alpha = mp.mpf(alpha)
        for k2 in range(1, K + 1):
            x = k2 * alpha
            k1 = -(round(x) if isinstance(x, Fraction) else int(mp.nint(x)))
            if abs(k1) > K:
                continue
            dv = abs(k1 + x)
            if dv == 0:
                raise ResonanceError((k1, k2))
            if isinstance(dv, Fraction):
                dv = mp.mpf(dv.numerator) / dv.denominator
            out.append(((k1, k2), dv))
        out.sort(key=lambda kd: (max(abs(kd[0][0]), abs(kd[0][1])), kd[0]))
        return out
    div = divisor_table(om, K)
    _resonance_check(div, n, K)
    ks = _box_indices(n, K)
    norms = np.abs(ks).max(axis=1)
    order = np.lexsort(tuple(ks[:, d] for d in range(n - 1, -1, -1)) + (norms,))
    for i in order:
        if norms[i] == 0:
            continue
        k = tuple(int(x) for x in ks[i])
        out.append((k, mp.mpf(float(div[tuple(x + K for x in k)]))))
    return out


@dataclass
class LiouvilleNormTable:
    """Log-domain bounds on ``||g||_r`` for the convergent-supported source."""

    cutoff_indices: list
    cutoffs: list
    log_norm_lower: list
    log_norm_upper: list
    witness_ok: list

    def growth_factors_at_least(self, factor: float) -> list:
        """For consecutive cutoffs, whether ``||g||`` grows by at least ``factor`` (certified)."""
        out = []
        c = mp.log(factor)
        for lo_next, up_cur in zip(self.log_norm_lower[1:], self.log_norm_upper[:-1]):
            out.append(_certified_gap(lo_next, up_cur, c))
        return out

    def to_dict(self):
        return {"cutoff_indices": self.cutoff_indices,
                "cutoffs": [_jsonable(q) for q in self.cutoffs],
                "log_norm_lower": [_num(x) for x in self.log_norm_lower],
                "log_norm_upper": [_num(x) for x in self.log_norm_upper],
                "witness_ok": self.witness_ok}


def _certified_gap(x: Tower, y: Tower, c) -> bool:
    """``x - y >= c`` for positive Towers."""
    d = log_diff(x, y)
    if mp.isnan(d) or d <= 0:
        return False
    return (x - y) >= Tower.of(c)


def liouville_counterexample_norms(record: ContinuedFractionRecord, w: Weight, r: float,
                                   cutoff_indices, tau_seq=None) -> LiouvilleNormTable:
    """``ln ||g||_r`` at cutoffs ``K = q_i`` for the source supported on convergent modes.

    The modes are ``k_j = (-p_j, q_j)``, ``j >= 1``, for ``omega = (1, alpha)``.
    Since ``1/(q_{j+1} + q_j) < |q_j alpha - p_j| < 1/q_{j+1}``, each
    ``ln |g_{k_j}| = -ln(2 pi |k_j.omega|)/2`` is bracketed without knowing
    ``alpha`` beyond its continued fraction, which keeps the computation valid
    for denominators of any size. Requires ``q_{i+1}`` for every cutoff ``q_i``.
    """
    qs = record.denominators
    ln2pi = mp.log(2 * mp.pi)
    terms_lo, terms_hi, wok = [], [], []
    last = max(cutoff_indices)
    if last + 1 >= len(qs):
        raise ValueError("record too short: need q_{i+1} for the largest cutoff")
    for j in range(1, last + 1):
        q, qn = Tower.of(qs[j]), Tower.of(qs[j + 1])
        lnq1 = qn.log()
        lnq1s = (qn + q).log()
        phi = _weight_tower(w, q) * r
        lo = lnq1.shift(-ln2pi) * 0.5 + phi
        hi = lnq1s.shift(-ln2pi) * 0.5 + phi
        terms_lo.append(lo)
        terms_hi.append(hi)
        if tau_seq is not None:
            tau = tau_seq[min(j - 1, len(tau_seq) - 1)]
            wok.append(bool(lnq1.shift(-ln2pi) >= _weight_tower(w, q) * tau))
    lows, ups = [], []
    for i in cutoff_indices:
        lows.append(max(terms_lo[:i]))
        ups.append(max(terms_hi[:i]))
    return LiouvilleNormTable(list(cutoff_indices), [qs[i] for i in cutoff_indices], lows, ups, wok)


def _weight_tower(w: Weight, q: Tower) -> Tower:
    from .weights import WeightFamily
    if w.family is WeightFamily.GEVREY:
        return (q ** w.a) * (1.0 / w.a)
    if w.family is WeightFamily.ANALYTIC:
        return q
    if w.family is WeightFamily.SMOOTH:
        return (q + Tower.of(1)).log()
    # log-power: q / ln(1+q)^b = exp(ln q - b ln ln(1+q))
    if q.height == 0:
        return Tower.of(weight_eval(w, float(q.top)))
    lnq = q.log()
    return lnq.shift(-w.b_pow * lnq.log_mpf() if lnq.height == 0 else 0).exp()
