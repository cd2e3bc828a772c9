"""Gevrey to analytic approximation by Fourier truncation, and telescoping limits.

A Gevrey function with ``||f||_{r0} < inf`` is approximated at width ``u_j``
by its truncation at ``N_j = ceil((r0/u_j)**(1/(1-a)))``, the point where the
envelope ``exp(u_j t - r0 phi_a(t))`` stops decreasing. The approximants meet
the three approximation bounds with a constant ``C2`` that is measured rather
than assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fourier import SpectralScalar, SpectralVectorField, l1_norm, log_weighted_norm, max_norm_array
from .weights import Weight, conjugate_exponent, gevrey_phi, scaled_conjugate

__all__ = [
    "SmoothingSchedule",
    "StageRecord",
    "PopovReport",
    "DecayFit",
    "TelescopingCertificate",
    "TelescopingRefusal",
    "HypothesisViolation",
    "approximation_sequence",
    "verify_popov_bounds",
    "decay_regression",
    "envelope_tail_bound",
    "seuilconv_margin",
    "required_initial_width",
    "telescoping_limit",
    "boundary_increments",
]


def _phi_b(b: float, t: float) -> float:
    return t**b / b


@dataclass(frozen=True)
class SmoothingSchedule:
    """Halving widths ``u_j = 2**-j u0`` and the matching truncation cutoffs.

    Parameters
    ----------
    r0, r : float
        Regularity of the input and target exponent, ``0 < r < r0``.
    a : float
        Gevrey exponent in (0, 1).
    u0 : float
        Initial width, ``0 < u0 <= r``.
    J : int
        Number of stages; approximants ``f_0, ..., f_J`` are produced.
    K_max : int, optional
        Largest cutoff that may be used; larger ``N_j`` are clamped.
    """

    r0: float
    r: float
    a: float
    u0: float
    J: int
    K_max: int | None = None

    def __post_init__(self):
        if not (0.0 < self.a < 1.0):
            raise ValueError("a must lie in (0, 1)")
        if not (0.0 < self.r < self.r0):
            raise ValueError("need 0 < r < r0")
        if not (0.0 < self.u0 <= self.r):
            raise ValueError("need 0 < u0 <= r")
        if int(self.J) < 0:
            raise ValueError("J must be non-negative")
        object.__setattr__(self, "J", int(self.J))

    @property
    def b(self) -> float:
        return conjugate_exponent(self.a)

    def u(self, j: int) -> float:
        return math.ldexp(self.u0, -int(j))

    def N(self, j: int) -> int:
        """Unclamped cutoff at stage ``j``."""
        return int(math.ceil((self.r0 / self.u(j)) ** (1.0 / (1.0 - self.a)) - 1e-9))

    def cutoff(self, j: int) -> int:
        N = self.N(j)
        return N if self.K_max is None else min(N, int(self.K_max))

    @property
    def widths(self) -> list:
        return [self.u(j) for j in range(self.J + 1)]

    @property
    def cutoffs(self) -> list:
        return [self.N(j) for j in range(self.J + 1)]

    def bound_exponent(self, j: int) -> float:
        """``r phi_b(r/u_j)``, the decay rate of the stage-``j`` bounds."""
        return self.r * _phi_b(self.b, self.r / self.u(j))

    def with_K_max(self, K_max: int) -> "SmoothingSchedule":
        return SmoothingSchedule(self.r0, self.r, self.a, self.u0, self.J, int(K_max))

    def to_dict(self) -> dict:
        return {"r0": self.r0, "r": self.r, "a": self.a, "b": self.b, "u0": self.u0, "J": self.J,
                "K_max": self.K_max, "u": self.widths, "N": self.cutoffs}


@dataclass
class StageRecord:
    j: int
    u: float
    N: int
    N_used: int
    clamped: bool
    tail_bound: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def envelope_tail_bound(norm: float, r0: float, a: float, n: int, K: int, s: float = 0.0,
                        eps: float = 1e-300) -> float:
    """Upper bound for ``sum_{|k| > K} |f_k| e^{s|k|}`` under ``|f_k| <= norm e^{-r0 phi_a(|k|)}``.

    Counts ``(2m+1)**n - (2m-1)**n`` modes on the shell ``|k| = m`` and sums
    until the shell term falls below ``eps`` times the running total, and
    returns ``inf`` if the envelope does not decay at width ``s``.
    """
    if norm == 0.0:
        return 0.0
    total = 0.0
    m = K + 1
    while True:
        count = (2 * m + 1) ** n - (2 * m - 1) ** n
        ln_term = math.log(count) + s * m - r0 * m**a / a
        term = math.exp(ln_term) if ln_term < 700 else math.inf
        total += term
        slope = s - r0 * m ** (a - 1.0)
        if not math.isfinite(total):
            return math.inf
        if slope < 0 and (term <= eps * total or term < 1e-320):
            break
        if m > K + 10**7:
            return math.inf
        m += max(1, m // 1000)
    return norm * total


def approximation_sequence(f, sched: SmoothingSchedule, return_certificate: bool = False):
    """Truncations ``f_j`` of ``f`` at the schedule cutoffs.

    Parameters
    ----------
    f : SpectralScalar or SpectralVectorField
    sched : SmoothingSchedule
        ``K_max`` defaults to the cutoff of ``f``.
    return_certificate : bool
        Also return one :class:`StageRecord` per stage. Clamped stages carry
        an envelope bound on the Fourier mass beyond ``K_max`` that the
        truncation cannot see.

    Returns
    -------
    list, or (list, list of StageRecord)
    """
    K_max = f.K if sched.K_max is None else min(int(sched.K_max), f.K)
    norm = math.exp(log_weighted_norm(f, Weight.gevrey(sched.a), sched.r0)) if not f.is_zero() else 0.0
    out, recs = [], []
    for j in range(sched.J + 1):
        N = sched.N(j)
        used = min(N, K_max)
        out.append(f.truncate(used))
        clamped = N > K_max
        tail = envelope_tail_bound(norm, sched.r0, sched.a, f.n, K_max) if clamped else 0.0
        recs.append(StageRecord(j, sched.u(j), N, used, clamped, tail))
    return (out, recs) if return_certificate else out


@dataclass
class DecayFit:
    """Least-squares slope of ``ln |f_{j+1}-f_j|_{u_{j+1}}`` against ``x_j``."""

    slope: float
    intercept: float
    stages: list
    x: list
    y: list
    predicted_slope: float = math.nan

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def decay_regression(f_list: list, sched: SmoothingSchedule) -> DecayFit:
    """Fit the increment decay against ``phi_b(r/u_j)``.

    Only stages with a nonzero increment enter the fit. ``predicted_slope``
    is the slope of ``y`` against the envelope exponent
    ``max_{N_j < |k| <= N_{j+1}} (u_{j+1}|k| - r0 phi_a(|k|))``; it is close
    to one when the measured decay is the one the envelope dictates.
    """
    xs, ys, stages, env = [], [], [], []
    b = sched.b
    for j in range(len(f_list) - 1):
        d = f_list[j + 1] - f_list[j]
        if d.is_zero():
            continue
        k = max_norm_array(d.n, d.K).astype(float)
        live = np.any(d.coeffs != 0, axis=0) if isinstance(d, SpectralVectorField) else d.coeffs != 0
        u1 = sched.u(j + 1)
        env.append(float(np.max((u1 * k - sched.r0 * gevrey_phi(sched.a, k))[live])))
        xs.append(_phi_b(b, sched.r / sched.u(j)))
        ys.append(math.log(l1_norm(d, u1)))
        stages.append(j)
    if len(xs) < 2:
        return DecayFit(math.nan, math.nan, stages, xs, ys)
    slope, icpt = np.polyfit(xs, ys, 1)
    pred = float(np.polyfit(env, ys, 1)[0])
    return DecayFit(float(slope), float(icpt), stages, xs, ys, pred)


@dataclass
class PopovReport:
    """Measured constant ``C2`` for the three approximation bounds.

    ``C2`` is the smallest constant for which all bounds hold; ``C2_by_bound``
    splits it into the initial, increment and error families.
    """

    C2: float
    C2_by_bound: dict
    norm: float
    stages: list
    monotone_violations: list
    decay: DecayFit | None = None
    records: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {"C2": self.C2, "C2_by_bound": self.C2_by_bound, "norm": self.norm, "stages": self.stages,
             "monotone_violations": self.monotone_violations,
             "records": [r.to_dict() for r in self.records]}
        d["decay"] = None if self.decay is None else self.decay.to_dict()
        return d


def verify_popov_bounds(f, f_list: list, sched: SmoothingSchedule) -> PopovReport:
    """Measure ``C2`` in

    * ``|f_0|_{u_0} <= C2 ||f||_{r0}``
    * ``|f_{j+1} - f_j|_{u_{j+1}} <= C2 ||f||_{r0} e^{-r phi_b(r/u_j)}``
    * ``|f_j - f|_0 <= C2 ||f||_{r0} e^{-r phi_b(r/u_j)}``

    with strip norms replaced by l1 norms. Ratios are formed in log space.
    """
    w = Weight.gevrey(sched.a)
    ln_norm = log_weighted_norm(f, w, sched.r0)
    if ln_norm == -math.inf:
        return PopovReport(0.0, {"initial": 0.0, "increment": 0.0, "error": 0.0}, 0.0, [], [])

    def log_l1(g, s):
        v = l1_norm(g, s)
        return math.log(v) if v > 0 else -math.inf

    c_init = log_l1(f_list[0], sched.u0) - ln_norm
    c_inc = c_err = -math.inf
    stages, errs = [], []
    for j in range(len(f_list)):
        e = sched.bound_exponent(j)
        ln_err = log_l1(f_list[j] - f, 0.0)
        errs.append(ln_err)
        rec = {"j": j, "u": sched.u(j), "N": sched.N(j), "bound_exponent": e,
               "log_error": ln_err, "log_C_error": ln_err - ln_norm + e}
        c_err = max(c_err, rec["log_C_error"])
        if j + 1 < len(f_list):
            ln_inc = log_l1(f_list[j + 1] - f_list[j], sched.u(j + 1))
            rec["log_increment"] = ln_inc
            rec["log_C_increment"] = ln_inc - ln_norm + e
            c_inc = max(c_inc, rec["log_C_increment"])
        stages.append(rec)
    viol = [j for j in range(1, len(errs)) if errs[j] > errs[j - 1] + 1e-12]
    parts = {"initial": math.exp(c_init), "increment": math.exp(c_inc), "error": math.exp(c_err)}
    return PopovReport(C2=max(parts.values()), C2_by_bound=parts, norm=math.exp(ln_norm), stages=stages,
                       monotone_violations=viol, decay=decay_regression(f_list, sched))


# --- telescoping limits ------------------------------------------------------

class TelescopingRefusal(ValueError):
    """The smallness condition on the initial width fails."""

    def __init__(self, margin: float, required_w: float):
        self.margin = margin
        self.required_w = required_w
        super().__init__(f"smallness condition fails (value {margin:.4g} > 1/2); "
                         f"need w_-1 <= {required_w:.6g}")


class HypothesisViolation(ValueError):
    """An increment exceeds its allowed size."""

    def __init__(self, j: int, log_margin: float):
        self.j = j
        self.log_margin = log_margin
        super().__init__(f"increment {j} exceeds its bound (log margin {log_margin:.4g})")


def seuilconv_margin(w_minus1: float, upsilon: float, nu: float, r: float, a: float) -> float:
    """``exp(-(upsilon - nu)(2**b - 1) phi_b(r/w_-1))``; must be at most 1/2."""
    b = conjugate_exponent(a)
    return math.exp(-(upsilon - nu) * (2.0**b - 1.0) * _phi_b(b, r / w_minus1))


def required_initial_width(upsilon: float, nu: float, r: float, a: float) -> float:
    """Largest ``w_-1`` meeting the smallness condition."""
    b = conjugate_exponent(a)
    L = math.log(2.0) / ((upsilon - nu) * (2.0**b - 1.0))
    return r * (b * L) ** (-1.0 / b)


@dataclass
class TelescopingCertificate:
    """Outcome of :func:`telescoping_limit`.

    ``links`` records, per increment, the l1 size at its width, the allowed
    size, the Young factor ``sup_t e^{nu phi_a(t) - w t}``, the resulting
    bound on ``||h^j||_nu`` and the measured value (all as logs).
    """

    w_minus1: float
    upsilon: float
    nu: float
    r: float
    a: float
    seuilconv: float
    bound: float
    measured: float
    links: list
    tail_ratios: list

    @property
    def log_margin(self) -> float:
        if self.measured == 0.0:
            return math.inf
        return math.log(self.bound) - math.log(self.measured)

    @property
    def holds(self) -> bool:
        return self.measured <= self.bound

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["log_margin"] = self.log_margin
        d["holds"] = self.holds
        return d


def telescoping_limit(increments: list, w_minus1: float, upsilon: float, nu: float, r: float, a: float):
    """Sum increments ``h^j`` with ``|h^j|_{w_{j-1}} <= exp(-upsilon phi_b(r/w_{j-1}))``.

    Widths are ``w_{j-1} = 2**-j w_-1``. The sum is bounded by
    ``2 exp(-(upsilon - nu) phi_b(r/w_-1))`` in the Gevrey norm of index ``nu``.

    Returns
    -------
    limit : SpectralScalar or SpectralVectorField or None
        ``None`` when ``increments`` is empty.
    certificate : TelescopingCertificate

    Raises
    ------
    TelescopingRefusal
        If ``w_-1`` is too large for the smallness condition.
    HypothesisViolation
        If some increment is larger than allowed.
    """
    if not (0.0 < nu < upsilon < r):
        raise ValueError("need 0 < nu < upsilon < r")
    b = conjugate_exponent(a)
    w = Weight.gevrey(a)
    gate = seuilconv_margin(w_minus1, upsilon, nu, r, a)
    if gate > 0.5:
        raise TelescopingRefusal(gate, required_initial_width(upsilon, nu, r, a))
    links, limit = [], None
    for j, h in enumerate(increments):
        wj = math.ldexp(w_minus1, -j)
        allowed = -upsilon * _phi_b(b, r / wj)
        size = l1_norm(h, wj)
        ln_size = math.log(size) if size > 0 else -math.inf
        if ln_size > allowed + 1e-12 * max(1.0, abs(allowed)):
            raise HypothesisViolation(j, allowed - ln_size)
        young = scaled_conjugate(a, nu, wj)
        ln_nu = log_weighted_norm(h, w, nu)
        links.append({"j": j, "w": wj, "log_size": ln_size, "log_allowed": allowed, "log_young": young,
                      "log_chain": ln_size + young, "log_stage_bound": -(upsilon - nu) * _phi_b(b, r / wj),
                      "log_measured": ln_nu,
                      "chain_ok": ln_nu <= ln_size + young + 1e-12 and
                      ln_size + young <= -(upsilon - nu) * _phi_b(b, r / wj) + 1e-9})
        limit = h.copy() if limit is None else limit + h
    ratios = []
    for j in range(len(increments)):
        wj = math.ldexp(w_minus1, -j)
        ratios.append(math.exp(-(upsilon - nu) * (_phi_b(b, 2.0 * r / wj) - _phi_b(b, r / wj))))
    bound = 2.0 * math.exp(-(upsilon - nu) * _phi_b(b, r / w_minus1))
    measured = 0.0 if limit is None else math.exp(log_weighted_norm(limit, w, nu))
    cert = TelescopingCertificate(w_minus1, upsilon, nu, r, a, gate, bound, measured, links, ratios)
    return limit, cert


def boundary_increments(n: int, w_minus1: float, upsilon: float, nu: float, r: float, a: float,
                        J: int, K: int | None = None) -> list:
    """Single-mode increments sitting exactly on the allowed size.

    Increment ``j`` is a real cosine on the mode ``(m_j, 0, ..., 0)`` with
    ``m_j`` the integer maximiser of ``nu phi_a(m) - w_{j-1} m``, so the
    Gevrey norm is as large as the hypothesis permits.
    """
    b = conjugate_exponent(a)
    ms, amps = [], []
    for j in range(J):
        wj = math.ldexp(w_minus1, -j)
        t = (nu / wj) ** (1.0 / (1.0 - a))
        cands = [max(1, math.floor(t)), max(1, math.ceil(t))]
        m = max(cands, key=lambda q: nu * q**a / a - wj * q)
        ms.append(m)
        # two conjugate modes carry the l1 mass
        amps.append(0.5 * math.exp(-upsilon * _phi_b(b, r / wj) - wj * m))
    Kc = max(ms) if K is None else K
    if max(ms) > Kc:
        raise ValueError(f"cutoff {Kc} too small for mode {max(ms)}")
    out = []
    for m, A in zip(ms, amps):
        k = (m,) + (0,) * (n - 1)
        out.append(SpectralScalar.from_modes(n, Kc, {k: A}))
    return out
