"""Exact Fourier solver for the cohomological equation ``X_omega g = f - c``.

On a finite spectrum the solution is explicit: ``c = f_0``, ``g_0 = 0`` and
``g_k = f_k / (2 pi i k.omega)``. Small divisors are never regularised; the
smallest one actually used is reported with the solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .arithmetic import Frequency, ResonanceError, small_divisor_scan
from .fourier import (
    SpectralScalar,
    SpectralVectorField,
    _kdot,
    directional_derivative,
    l1_norm,
    log_weighted_norm,
)
from .weights import Weight

__all__ = ["CohomSolution", "Lemma1Report", "solve_scalar", "solve_vector", "verify_lemma1",
           "sharpness_witness"]

RESIDUAL_TOL = 1e-12


@dataclass
class CohomSolution:
    """Normalised solution of the cohomological equation.

    Attributes
    ----------
    g : SpectralScalar or SpectralVectorField
        Solution with zero mean.
    c : float or None
        Average of ``f`` (scalar case).
    lambda_vec : ndarray or None
        Component averages (vector case).
    worst_divisor : float
        Smallest ``|k.omega|`` over the nonzero support of ``f`` (``inf`` if none).
    worst_k : tuple or None
        Mode attaining ``worst_divisor``.
    residual : float
        Relative l1 norm of ``X_omega g + c - f``.
    loss_certificate : dict or None
        Filled by :func:`verify_lemma1`.
    """

    g: object
    c: float | None = None
    lambda_vec: np.ndarray | None = None
    worst_divisor: float = math.inf
    worst_k: tuple | None = None
    residual: float = 0.0
    loss_certificate: dict | None = None

    def to_dict(self) -> dict:
        return {
            "c": self.c,
            "lambda": None if self.lambda_vec is None else [float(v) for v in self.lambda_vec],
            "worst_divisor": self.worst_divisor,
            "worst_k": None if self.worst_k is None else list(self.worst_k),
            "residual": self.residual,
            "loss_certificate": self.loss_certificate,
        }


def _divide(coeffs: np.ndarray, n: int, K: int, omega: np.ndarray):
    """Divide a (possibly vector) coefficient array by ``2 pi i k.omega`` on its support."""
    kw = _kdot(n, K, omega)
    lead = coeffs.ndim - n
    supp = np.any(coeffs != 0, axis=tuple(range(lead))) if lead else coeffs != 0
    supp[(K,) * n] = False
    bad = supp & (kw == 0.0)
    if np.any(bad):
        k = tuple(int(i) - K for i in np.argwhere(bad)[0])
        raise ResonanceError(k)
    g = np.zeros_like(coeffs)
    denom = 2j * np.pi * kw
    g[..., supp] = coeffs[..., supp] / denom[supp]
    if np.any(supp):
        div = np.where(supp, np.abs(kw), np.inf)
        i = int(np.argmin(div))
        worst = float(div.flat[i])
        wk = tuple(int(x) - K for x in np.unravel_index(i, div.shape))
    else:
        worst, wk = math.inf, None
    return g, worst, wk


def _relative_residual(f, g, const, omega) -> float:
    Xg = directional_derivative(g, omega)
    res = Xg.coeffs.copy()
    res[(slice(None),) * (res.ndim - f.n) + f.center] += const
    num = l1_norm(type(f)(res - f.coeffs, f.n))
    den = l1_norm(f)
    return num / den if den > 0 else num


def solve_scalar(f: SpectralScalar, omega) -> CohomSolution:
    """Solve ``X_omega g = f - c`` for a scalar spectrum.

    Parameters
    ----------
    f : SpectralScalar
    omega : Frequency or array_like

    Returns
    -------
    CohomSolution

    Raises
    ------
    ResonanceError
        If ``k.omega == 0`` for some ``k != 0`` in the support of ``f``.
    """
    om = Frequency.of(omega).array
    if om.size != f.n:
        raise ValueError("frequency and spectrum dimensions differ")
    gc, worst, wk = _divide(f.coeffs, f.n, f.K, om)
    g = SpectralScalar(gc, f.n)
    c = f.mean
    sol = CohomSolution(g=g, c=c, worst_divisor=worst, worst_k=wk)
    sol.residual = _relative_residual(f, g, c, om)
    return sol


def solve_vector(F: SpectralVectorField, omega) -> CohomSolution:
    """Componentwise solve; ``lambda_vec`` holds the component averages."""
    om = Frequency.of(omega).array
    if om.size != F.n:
        raise ValueError("frequency and field dimensions differ")
    gc, worst, wk = _divide(F.coeffs, F.n, F.K, om)
    G = SpectralVectorField(gc, F.n)
    lam = F.mean
    sol = CohomSolution(g=G, lambda_vec=lam, worst_divisor=worst, worst_k=wk)
    sol.residual = _relative_residual(F, G, lam, om)
    return sol


@dataclass
class Lemma1Report:
    """Comparison ``||g||_{r-tau}`` against ``gamma_tau^{-1} ||f||_r``."""

    lhs: float
    rhs: float
    ratio: float
    log_ratio: float
    gamma_inv: float
    gamma_k: tuple
    K: int
    r: float
    tau: float
    weight: Weight = field(default_factory=lambda: Weight.gevrey(0.5))

    @property
    def holds(self) -> bool:
        return self.log_ratio <= 0.0

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "ratio": self.ratio, "log_ratio": self.log_ratio,
                "gamma_inv": self.gamma_inv, "gamma_k": list(self.gamma_k), "K": self.K,
                "r": self.r, "tau": self.tau, "weight": self.weight.to_dict()}


def verify_lemma1(f: SpectralScalar, omega, w: Weight, r: float, tau: float,
                  K: int | None = None) -> Lemma1Report:
    """Measure the loss-of-regularity estimate for the solution of ``X_omega g = f - c``.

    ``gamma_tau^{-1}`` is the exhaustive sup over ``0 < |k| <= K`` with ``K``
    defaulting to the cutoff of ``f``. Norms are compared in log form, so the
    ratio is meaningful even when both sides overflow a float.
    """
    if K is None:
        K = f.K
    if K < f.K:
        raise ValueError("gamma must be computed at a cutoff covering the support of f")
    sol = solve_scalar(f, omega)
    scan = small_divisor_scan(omega, max(K, 1), tau=tau, weight=w)
    ln_lhs = log_weighted_norm(sol.g, w, r - tau)
    ln_f = log_weighted_norm(f, w, r)
    ln_rhs = math.log(scan.gamma_inv) + ln_f
    if ln_lhs == -math.inf:
        log_ratio = -math.inf
    else:
        log_ratio = ln_lhs - ln_rhs
    rep = Lemma1Report(lhs=_exp(ln_lhs), rhs=_exp(ln_rhs), ratio=_exp(log_ratio), log_ratio=log_ratio,
                       gamma_inv=scan.gamma_inv, gamma_k=scan.gamma_k, K=K, r=r, tau=tau, weight=w)
    sol.loss_certificate = rep.to_dict()
    return rep


def _exp(x: float) -> float:
    if x == -math.inf:
        return 0.0
    return math.exp(x) if x < 709.0 else math.inf


def sharpness_witness(omega, w: Weight, tau: float, K: int, amplitude: float = 1.0) -> SpectralScalar:
    """Single real mode on the maximiser of ``|2 pi k.omega|^{-1} e^{-tau phi(|k|)}``.

    For this input the estimate of :func:`verify_lemma1` is attained.
    """
    om = Frequency.of(omega)
    scan = small_divisor_scan(om, K, tau=tau, weight=w)
    return SpectralScalar.from_modes(om.n, K, {scan.gamma_k: 0.5 * amplitude})
