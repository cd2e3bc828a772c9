"""Truncated Fourier series on the n-torus.

Coefficients are stored densely: a scalar with cutoff ``K`` on ``T^n`` is an
array of shape ``(2K+1,)*n`` whose entry ``[k_1+K, ..., k_n+K]`` is ``f_k``.
Vector fields carry one extra leading axis of length ``n``. The frequency
norm is the max-norm ``|k| = max_i |k_i|`` and the torus is ``R^n / Z^n`` with
modes ``e_k(x) = exp(2 pi i k.x)``.

Composition with near-identity maps is computed pointwise with the expansion
``e_k(x + g) - e_k(x) = e_k(x) (prod_d (1 + m_d) - 1)``, ``m_d = expm1(2 pi i k_d g_d)``,
so that ``h(x + g(x)) - h(x)`` keeps full relative precision when ``g`` is tiny.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .weights import Weight, weight_eval

__all__ = [
    "SpectralScalar",
    "SpectralVectorField",
    "TorusMap",
    "GridScalar",
    "AliasingError",
    "NonInvertibleJacobianError",
    "to_grid",
    "from_grid",
    "multiply",
    "directional_derivative",
    "partial_derivative",
    "weighted_norm",
    "log_weighted_norm",
    "l1_norm",
    "strip_sup_bound",
    "grid_sup",
    "evaluate",
    "compose",
    "jacobian",
    "jacobian_grid",
    "pullback",
    "pullback_constant",
    "grid_points",
    "random_hermitian",
    "gevrey_random",
    "max_norm_array",
]

TWO_PI = 2.0 * np.pi
_CHUNK = 4096


class AliasingError(ValueError):
    """Grid too coarse for the requested spectral cutoff."""


class NonInvertibleJacobianError(ArithmeticError):
    """``|D Phi - Id|`` is not below one, so the pointwise inverse is not certified."""


# --- index helpers -----------------------------------------------------------

def _freqs(K: int) -> np.ndarray:
    return np.arange(-K, K + 1)


def max_norm_array(n: int, K: int) -> np.ndarray:
    """Array of ``|k|`` (max-norm) over the coefficient box."""
    k = np.abs(_freqs(K))
    out = k
    for _ in range(n - 1):
        out = np.maximum.outer(out, k)
    return out.reshape((2 * K + 1,) * n)


def _kdot(n: int, K: int, omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (n,):
        raise ValueError(f"frequency vector must have length {n}")
    k = _freqs(K).astype(float)
    out = np.zeros((2 * K + 1,) * n)
    for d in range(n):
        shape = [1] * n
        shape[d] = -1
        out = out + omega[d] * k.reshape(shape)
    return out


def _kaxis(n: int, K: int, d: int) -> np.ndarray:
    shape = [1] * n
    shape[d] = -1
    return _freqs(K).astype(float).reshape(shape)


def _hermitian_part(c: np.ndarray, n: int) -> np.ndarray:
    axes = tuple(range(c.ndim - n, c.ndim))
    return 0.5 * (c + np.conj(np.flip(c, axis=axes)))


def _resize(c: np.ndarray, n: int, K_old: int, K_new: int) -> np.ndarray:
    if K_new == K_old:
        return c.copy()
    lead = c.shape[: c.ndim - n]
    if K_new < K_old:
        sl = (Ellipsis,) + (slice(K_old - K_new, K_old + K_new + 1),) * n
        return c[sl].copy()
    out = np.zeros(lead + (2 * K_new + 1,) * n, dtype=complex)
    sl = (Ellipsis,) + (slice(K_new - K_old, K_new + K_old + 1),) * n
    out[sl] = c
    return out


# --- spectral containers -----------------------------------------------------

class _Spectral:
    """Common storage for scalar and vector spectra (``_lead`` leading axes)."""

    _lead = 0
    __array_priority__ = 1000

    def __init__(self, coeffs, n: int | None = None):
        c = np.array(coeffs, dtype=complex)
        if n is None:
            n = c.ndim - self._lead
        if c.ndim != n + self._lead:
            raise ValueError(f"expected {n + self._lead} axes, got {c.ndim}")
        box = c.shape[self._lead:]
        if n < 1 or len(set(box)) != 1 or box[0] % 2 != 1:
            raise ValueError(f"coefficient box must be (2K+1,)*n, got {box}")
        self.coeffs = c
        self.n = n
        self.K = (box[0] - 1) // 2

    # algebra
    def _like(self, coeffs):
        return type(self)(coeffs, self.n)

    def _aligned(self, other):
        if not isinstance(other, type(self)):
            raise TypeError(f"cannot combine {type(self).__name__} with {type(other).__name__}")
        if other.n != self.n:
            raise ValueError("dimension mismatch")
        K = max(self.K, other.K)
        return _resize(self.coeffs, self.n, self.K, K), _resize(other.coeffs, self.n, other.K, K)

    def __add__(self, other):
        a, b = self._aligned(other)
        return self._like(a + b)

    def __sub__(self, other):
        a, b = self._aligned(other)
        return self._like(a - b)

    def __neg__(self):
        return self._like(-self.coeffs)

    def __truediv__(self, s):
        return self._like(self.coeffs / s)

    def copy(self):
        return self._like(self.coeffs.copy())

    def resize(self, K: int):
        """Zero-pad or truncate the coefficient box to cutoff ``K``."""
        return self._like(_resize(self.coeffs, self.n, self.K, int(K)))

    def truncate(self, N: int):
        """Zero all modes with ``|k| > N`` (cutoff ``K`` unchanged)."""
        mask = max_norm_array(self.n, self.K) <= N
        return self._like(self.coeffs * mask)

    def hermitian_defect(self) -> float:
        c = self.coeffs
        axes = tuple(range(self._lead, c.ndim))
        return float(np.max(np.abs(c - np.conj(np.flip(c, axis=axes))), initial=0.0))

    def symmetrized(self):
        return self._like(_hermitian_part(self.coeffs, self.n))

    @property
    def center(self) -> tuple:
        return (self.K,) * self.n

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n}, K={self.K})"

    def __eq__(self, other):
        if not isinstance(other, type(self)) or other.n != self.n:
            return NotImplemented
        a, b = self._aligned(other)
        return bool(np.array_equal(a, b))

    __hash__ = None


class SpectralScalar(_Spectral):
    """Truncated Fourier series of a real function on ``T^n``.

    Parameters
    ----------
    coeffs : array_like, shape (2K+1,)*n
        Complex amplitudes; expected to satisfy ``f_{-k} = conj(f_k)``.
    """

    _lead = 0

    @classmethod
    def zeros(cls, n: int, K: int) -> "SpectralScalar":
        return cls(np.zeros((2 * K + 1,) * n, dtype=complex), n)

    @classmethod
    def constant(cls, n: int, K: int, value: float) -> "SpectralScalar":
        f = cls.zeros(n, K)
        f.coeffs[(K,) * n] = value
        return f

    @classmethod
    def from_modes(cls, n: int, K: int, modes: dict, hermitian: bool = True) -> "SpectralScalar":
        """Build from ``{k: amplitude}``; with ``hermitian`` the conjugate mode is set too."""
        f = cls.zeros(n, K)
        for k, v in modes.items():
            k = tuple(int(x) for x in k)
            if len(k) != n or max(abs(x) for x in k) > K:
                raise ValueError(f"mode {k} outside the box of cutoff {K}")
            f.coeffs[tuple(x + K for x in k)] = v
            if hermitian:
                f.coeffs[tuple(-x + K for x in k)] = np.conj(v)
        if hermitian:
            f.coeffs[(K,) * n] = f.coeffs[(K,) * n].real
        return f

    def coeff(self, k) -> complex:
        k = tuple(int(x) for x in k)
        if max(abs(x) for x in k) > self.K:
            return 0j
        return complex(self.coeffs[tuple(x + self.K for x in k)])

    @property
    def mean(self) -> float:
        return float(self.coeffs[self.center].real)

    def support(self) -> list:
        """List of ``(k, f_k)`` for nonzero coefficients, in lexicographic order."""
        idx = np.argwhere(self.coeffs != 0)
        return [(tuple(int(i) - self.K for i in row), complex(self.coeffs[tuple(row)])) for row in idx]

    def __mul__(self, other):
        if isinstance(other, SpectralScalar):
            return multiply(self, other)
        if isinstance(other, (int, float, complex, np.number)):
            return self._like(self.coeffs * other)
        if np.ndim(other) == 1:
            v = np.asarray(other, dtype=float)
            return SpectralVectorField(v.reshape((-1,) + (1,) * self.n) * self.coeffs[None], self.n)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return self._like(self.coeffs * other)
        return NotImplemented

    def __call__(self, x):
        return evaluate(self, x)


class SpectralVectorField(_Spectral):
    """``n`` real scalar series on ``T^n`` sharing the cutoff ``K``."""

    _lead = 1

    def __init__(self, coeffs, n: int | None = None):
        super().__init__(coeffs, n)
        if self.coeffs.shape[0] != self.n:
            raise ValueError("component count must equal the torus dimension")

    @classmethod
    def zeros(cls, n: int, K: int) -> "SpectralVectorField":
        return cls(np.zeros((n,) + (2 * K + 1,) * n, dtype=complex), n)

    @classmethod
    def constant(cls, vec, K: int) -> "SpectralVectorField":
        vec = np.asarray(vec, dtype=float)
        n = vec.shape[0]
        F = cls.zeros(n, K)
        F.coeffs[(slice(None),) + (K,) * n] = vec
        return F

    @classmethod
    def from_components(cls, comps) -> "SpectralVectorField":
        comps = list(comps)
        n = comps[0].n
        K = max(c.K for c in comps)
        return cls(np.stack([_resize(c.coeffs, n, c.K, K) for c in comps]), n)

    @property
    def components(self) -> list:
        return [SpectralScalar(self.coeffs[i], self.n) for i in range(self.n)]

    def __getitem__(self, i) -> SpectralScalar:
        return SpectralScalar(self.coeffs[i], self.n)

    @property
    def mean(self) -> np.ndarray:
        return self.coeffs[(slice(None),) + self.center].real.copy()

    def __mul__(self, s):
        if isinstance(s, (int, float, complex, np.number)):
            return self._like(self.coeffs * s)
        return NotImplemented

    __rmul__ = __mul__

    def __call__(self, x):
        return evaluate(self, x)


@dataclass
class GridScalar:
    """Real samples on the uniform grid ``(j_1/N, ..., j_n/N)``."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(set(self.values.shape)) != 1:
            raise ValueError("grid must be square")

    @property
    def n(self) -> int:
        return self.values.ndim

    @property
    def N(self) -> int:
        return self.values.shape[0]


# --- grid transforms ---------------------------------------------------------

def grid_points(n: int, N: int) -> np.ndarray:
    """Grid points in C order, shape ``(N**n, n)``."""
    ax = np.arange(N) / N
    mesh = np.meshgrid(*([ax] * n), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _spec_to_grid(c: np.ndarray, n: int, K: int, N: int, real: bool = True) -> np.ndarray:
    if N < 2 * K + 1:
        raise AliasingError(f"grid N={N} too coarse for cutoff K={K}")
    lead = c.shape[: c.ndim - n]
    full = np.zeros(lead + (N,) * n, dtype=complex)
    idx = np.arange(-K, K + 1) % N
    full[(Ellipsis,) + np.ix_(*([idx] * n))] = c
    axes = tuple(range(len(lead), len(lead) + n))
    v = np.fft.ifftn(full, axes=axes) * N**n
    return v.real if real else v


def _grid_to_spec(v: np.ndarray, n: int, K: int, tail: bool = False):
    N = v.shape[-1]
    if N < 2 * K + 1:
        raise AliasingError(f"grid N={N} too coarse for cutoff K={K}")
    axes = tuple(range(v.ndim - n, v.ndim))
    full = np.fft.fftn(v, axes=axes) / N**n
    idx = np.arange(-K, K + 1) % N
    c = _hermitian_part(full[(Ellipsis,) + np.ix_(*([idx] * n))], n)
    if not tail:
        return c
    mass = np.abs(full).reshape(full.shape[: v.ndim - n] + (-1,)).sum(axis=-1)
    kept = np.abs(c).reshape(c.shape[: c.ndim - n] + (-1,)).sum(axis=-1)
    return c, float(np.max(np.maximum(mass - kept, 0.0), initial=0.0))


def to_grid(f: SpectralScalar, N: int) -> GridScalar:
    """Sample ``f`` on the ``N**n`` grid; requires ``N >= 2K + 2``."""
    if N < 2 * f.K + 2:
        raise AliasingError(f"to_grid needs N >= 2K+2 = {2 * f.K + 2}, got {N}")
    return GridScalar(_spec_to_grid(f.coeffs, f.n, f.K, N))


def from_grid(g: GridScalar, K: int) -> SpectralScalar:
    """Discrete Fourier coefficients with ``|k| <= K``; requires ``K <= (N-2)/2``."""
    if 2 * K + 2 > g.N:
        raise AliasingError(f"from_grid needs K <= (N-2)/2 = {(g.N - 2) // 2}, got {K}")
    return SpectralScalar(_grid_to_spec(g.values, g.n, K), g.n)


def _alias_free_N(K: int, oversample: float = 1.0) -> int:
    return int(math.ceil(oversample * (2 * K + 2)))


def multiply(f: SpectralScalar, g: SpectralScalar) -> SpectralScalar:
    """Product, exact for trigonometric polynomials (cutoff ``K_f + K_g``)."""
    if f.n != g.n:
        raise ValueError("dimension mismatch")
    K = f.K + g.K
    N = 2 * K + 2
    v = _spec_to_grid(f.coeffs, f.n, f.K, N) * _spec_to_grid(g.coeffs, g.n, g.K, N)
    return SpectralScalar(_grid_to_spec(v, f.n, K), f.n)


# --- calculus ----------------------------------------------------------------

def directional_derivative(f, omega):
    """``X_omega f``: coefficient ``k`` becomes ``2 pi i (k.omega) f_k``."""
    fac = 1j * TWO_PI * _kdot(f.n, f.K, omega)
    return f._like(f.coeffs * fac)


def partial_derivative(f, d: int):
    """``d f / d x_d``."""
    fac = 1j * TWO_PI * _kaxis(f.n, f.K, d)
    return f._like(f.coeffs * fac)


# --- norms -------------------------------------------------------------------

def _per_component(f):
    c = f.coeffs
    return c[None] if isinstance(f, SpectralScalar) else c


def log_weighted_norm(f, w: Weight, r: float) -> float:
    """``ln ||f||_r`` with ``||f||_r = sup_k |f_k| exp(r phi(|k|))`` (max over components)."""
    c = _per_component(f)
    phi = weight_eval(w, max_norm_array(f.n, f.K).astype(float))
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(c)) + r * phi
    return float(np.max(logs)) if c.size else -math.inf


def weighted_norm(f, w: Weight, r: float) -> float:
    """Weighted sup norm ``sup_k |f_k| exp(r phi(|k|))``; max over components for fields."""
    ln = log_weighted_norm(f, w, r)
    return math.exp(ln) if ln < 709.0 else math.inf


def l1_norm(f, s: float = 0.0) -> float:
    """``sum_k |f_k| exp(s |k|)``; max over components for fields."""
    c = _per_component(f)
    wts = np.exp(s * max_norm_array(f.n, f.K))
    return float(np.max(np.sum(np.abs(c) * wts, axis=tuple(range(1, c.ndim)))))


def strip_sup_bound(f, s: float = 0.0) -> float:
    """Upper bound for the sup over the complex strip ``|Im x| < s`` (the l1 norm)."""
    return l1_norm(f, s)


def grid_sup(f, N: int | None = None) -> float:
    """Sup of ``|f|`` sampled on the real torus (max over components)."""
    if N is None:
        N = max(64, _alias_free_N(f.K, 4))
    if N < 2 * f.K + 1:
        v = _eval_raw(_per_component(f), f.n, f.K, grid_points(f.n, N))
    else:
        v = _spec_to_grid(f.coeffs, f.n, f.K, N)
    return float(np.max(np.abs(v), initial=0.0))


# --- point evaluation --------------------------------------------------------

def _contract(c: np.ndarray, n: int, factors: list) -> np.ndarray:
    """``sum_k c[b, k] prod_d factors[d][p, k_d]`` -> (P, B)."""
    B = c.shape[0]
    M = c.shape[-1]
    P = factors[0].shape[0]
    T = (factors[0] @ np.moveaxis(c, 1, 0).reshape(M, -1)).reshape(P, B, -1)
    for d in range(1, n):
        T = np.einsum("pbmr,pm->pbr", T.reshape(P, B, M, -1), factors[d])
    return T.reshape(P, B)


def _mode_factors(x: np.ndarray, K: int) -> list:
    k = _freqs(K)
    return [np.exp(1j * TWO_PI * np.outer(x[:, d], k)) for d in range(x.shape[1])]


def _eval_raw(c: np.ndarray, n: int, K: int, x: np.ndarray) -> np.ndarray:
    """Evaluate batch ``c`` (B, box) at points ``x`` (P, n); returns real (B, P)."""
    out = np.empty((c.shape[0], x.shape[0]))
    for s in range(0, x.shape[0], _CHUNK):
        xs = x[s:s + _CHUNK]
        out[:, s:s + _CHUNK] = _contract(c, n, _mode_factors(xs, K)).real.T
    return out


def _expm1_i(theta: np.ndarray) -> np.ndarray:
    """``exp(i theta) - 1`` accurate for small real theta."""
    return -2.0 * np.sin(0.5 * theta) ** 2 + 1j * np.sin(theta)


def _shift_diff_raw(c: np.ndarray, n: int, K: int, x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``h(x + g) - h(x)`` for batch ``c`` at points ``x`` with shifts ``g`` (P, n)."""
    out = np.zeros((c.shape[0], x.shape[0]))
    k = _freqs(K)
    subsets = [S for r in range(1, n + 1) for S in itertools.combinations(range(n), r)]
    for s in range(0, x.shape[0], _CHUNK):
        xs, gs = x[s:s + _CHUNK], g[s:s + _CHUNK]
        E = _mode_factors(xs, K)
        Mf = [E[d] * _expm1_i(TWO_PI * np.outer(gs[:, d], k)) for d in range(n)]
        acc = np.zeros((xs.shape[0], c.shape[0]), dtype=complex)
        for S in subsets:
            acc += _contract(c, n, [Mf[d] if d in S else E[d] for d in range(n)])
        out[:, s:s + _CHUNK] = acc.real.T
    return out


def evaluate(f, x) -> np.ndarray:
    """Evaluate at points ``x`` of shape ``(P, n)`` (or ``(n,)``).

    Returns shape ``(P,)`` for scalars and ``(n, P)`` for vector fields.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != f.n:
        raise ValueError("points must have n coordinates")
    v = _eval_raw(_per_component(f), f.n, f.K, x)
    return v[0] if isinstance(f, SpectralScalar) else v


# --- torus maps --------------------------------------------------------------

class TorusMap:
    """Diffeomorphism ``x -> x + d(x)`` of ``T^n`` with periodic displacement ``d``."""

    def __init__(self, displacement: SpectralVectorField):
        if not isinstance(displacement, SpectralVectorField):
            raise TypeError("displacement must be a SpectralVectorField")
        self.displacement = displacement

    @property
    def n(self) -> int:
        return self.displacement.n

    @property
    def K(self) -> int:
        return self.displacement.K

    @classmethod
    def identity(cls, n: int, K: int = 0) -> "TorusMap":
        return cls(SpectralVectorField.zeros(n, K))

    @classmethod
    def translation(cls, v, K: int = 0) -> "TorusMap":
        return cls(SpectralVectorField.constant(v, K))

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x + evaluate(self.displacement, x).T

    def __repr__(self):
        return f"TorusMap(n={self.n}, K={self.K})"

    def is_identity(self) -> bool:
        return self.displacement.is_zero()

    def derivative_coeffs(self) -> np.ndarray:
        """``d_j d_i`` coefficients, shape ``(n, n, box)`` (row i, column j)."""
        c = self.displacement.coeffs
        n, K = self.n, self.K
        return np.stack([c * (1j * TWO_PI * _kaxis(n, K, j))[None] for j in range(n)], axis=1)

    def dist_certificate(self) -> float:
        """l1 bound on ``|D Phi - Id|`` in the operator norm induced by the max-norm."""
        D = np.abs(self.derivative_coeffs()).reshape(self.n, self.n, -1).sum(axis=-1)
        return float(np.max(D.sum(axis=1), initial=0.0))

    def dist_grid(self, N: int | None = None) -> float:
        """Grid estimate of ``sup_x |D Phi(x) - Id|`` (max row sum)."""
        if N is None:
            N = max(32, _alias_free_N(self.K, 2))
        D = _spec_to_grid(self.derivative_coeffs(), self.n, self.K, N)
        return float(np.max(np.abs(D).sum(axis=1), initial=0.0))

    def invertible(self) -> bool:
        return self.dist_grid() < 1.0

    def displacement_l1(self, s: float = 0.0) -> float:
        return l1_norm(self.displacement, s)

    def compose(self, inner: "TorusMap", K_out: int | None = None, oversample: float = 2.0) -> "TorusMap":
        """``self o inner`` with displacement ``d_in(x) + d_self(x + d_in(x))``."""
        if K_out is None:
            K_out = max(self.K, inner.K)
        if self.is_identity():
            return TorusMap(inner.displacement.resize(K_out))
        if inner.is_identity():
            return TorusMap(self.displacement.resize(K_out))
        N = _alias_free_N(max(K_out, self.K, inner.K), oversample)
        n = self.n
        x = grid_points(n, N)
        g = _spec_to_grid(inner.displacement.coeffs, n, inner.K, N).reshape(n, -1)
        base = _spec_to_grid(self.displacement.coeffs, n, self.K, N).reshape(n, -1)
        vals = g + base + _shift_diff_raw(self.displacement.coeffs, n, self.K, x, g.T)
        c = _grid_to_spec(vals.reshape((n,) + (N,) * n), n, K_out)
        return TorusMap(SpectralVectorField(c, n))

    def shifted(self, m) -> "TorusMap":
        """``Phi o T_{-m}``, i.e. displacement ``d(x - m) - m``."""
        m = np.asarray(m, dtype=float)
        phase = np.exp(-1j * TWO_PI * _kdot(self.n, self.K, m))
        c = self.displacement.coeffs * phase[None]
        c[(slice(None),) + self.displacement.center] -= m
        return TorusMap(SpectralVectorField(c, self.n))

    def normalized(self) -> "TorusMap":
        """Precompose with the translation that makes the displacement mean-free."""
        return self.shifted(self.displacement.mean)

    def inverse(self, K_out: int | None = None, oversample: float = 2.0, tol: float = 1e-15,
                max_iter: int = 200) -> "TorusMap":
        """Inverse map by fixed-point iteration ``e(x) = -d(x + e(x))`` on a grid."""
        if K_out is None:
            K_out = self.K
        n = self.n
        if self.dist_grid() >= 1.0:
            raise NonInvertibleJacobianError("|D Phi - Id| >= 1 on the grid")
        N = _alias_free_N(max(K_out, self.K), oversample)
        x = grid_points(n, N)
        d0 = _spec_to_grid(self.displacement.coeffs, n, self.K, N).reshape(n, -1)
        e = -d0
        for _ in range(max_iter):
            new = -(d0 + _shift_diff_raw(self.displacement.coeffs, n, self.K, x, e.T))
            step = np.max(np.abs(new - e))
            e = new
            if step <= tol * max(1.0, float(np.max(np.abs(e), initial=0.0))):
                break
        c = _grid_to_spec(e.reshape((n,) + (N,) * n), n, K_out)
        return TorusMap(SpectralVectorField(c, n))

    def sup_distance(self, other: "TorusMap", N: int = 64) -> float:
        """Sup over a grid of ``|self(x) - other(x)|`` (max-norm)."""
        diff = self.displacement - other.displacement
        return grid_sup(diff, N)


# --- composition and pullback ------------------------------------------------

def compose(f, phi: TorusMap, K_out: int | None = None, oversample: float = 4.0):
    """``f o phi`` truncated at ``K_out`` (default: the cutoff of ``f``).

    Returns
    -------
    (g, tail) : SpectralScalar or SpectralVectorField, float
        ``tail`` is the l1 mass of the sampled spectrum beyond ``K_out``, the
        composition-error certificate.
    """
    if f.n != phi.n:
        raise ValueError("dimension mismatch")
    if K_out is None:
        K_out = f.K
    n = f.n
    c = _per_component(f)
    if phi.is_identity():
        res = f.resize(K_out)
        tail = l1_norm(f - res.resize(f.K)) if K_out < f.K else 0.0
        return res, tail
    N = _alias_free_N(max(K_out, f.K, phi.K), oversample)
    x = grid_points(n, N)
    g = _spec_to_grid(phi.displacement.coeffs, n, phi.K, N).reshape(n, -1)
    base = _spec_to_grid(c, n, f.K, N).reshape(c.shape[0], -1)
    vals = base + _shift_diff_raw(c, n, f.K, x, g.T)
    spec, tail = _grid_to_spec(vals.reshape((c.shape[0],) + (N,) * n), n, K_out, tail=True)
    out = SpectralScalar(spec[0], n) if isinstance(f, SpectralScalar) else SpectralVectorField(spec, n)
    return out, tail


def jacobian(phi: TorusMap) -> list:
    """``D Phi`` as an ``n x n`` nested list of :class:`SpectralScalar`."""
    D = phi.derivative_coeffs()
    n, K = phi.n, phi.K
    out = []
    for i in range(n):
        row = []
        for j in range(n):
            s = SpectralScalar(D[i, j].copy(), n)
            if i == j:
                s.coeffs[(K,) * n] += 1.0
            row.append(s)
        out.append(row)
    return out


def jacobian_grid(phi: TorusMap, N: int) -> np.ndarray:
    """``D Phi`` sampled on the grid, shape ``(P, n, n)`` in C order."""
    n = phi.n
    D = _spec_to_grid(phi.derivative_coeffs(), n, phi.K, N).reshape(n, n, -1)
    return np.moveaxis(D, -1, 0) + np.eye(n)[None]


def _check_invertible(J: np.ndarray) -> None:
    dist = float(np.max(np.abs(J - np.eye(J.shape[-1])[None]).sum(axis=2), initial=0.0))
    if not dist < 1.0:
        raise NonInvertibleJacobianError(f"|D Phi - Id| = {dist:.3g} >= 1 on the grid")


def pullback(X_pert: SpectralVectorField, omega, phi: TorusMap, K_out: int | None = None,
             oversample: float = 2.0, return_tail: bool = False):
    """Perturbation part of ``Phi^* (X_omega + X_pert)``.

    Computes ``(D Phi)^{-1} (omega + X(Phi(x))) - omega`` in the equivalent form
    ``(D Phi)^{-1} (X(Phi(x)) - D d(x) omega)`` that avoids cancellation.
    """
    n = X_pert.n
    if K_out is None:
        K_out = max(X_pert.K, phi.K)
    if phi.is_identity():
        out = X_pert.resize(K_out)
        return (out, 0.0) if return_tail else out
    omega = np.asarray(omega, dtype=float)
    N = _alias_free_N(max(K_out, X_pert.K, phi.K), oversample)
    x = grid_points(n, N)
    J = jacobian_grid(phi, N)
    _check_invertible(J)
    g = _spec_to_grid(phi.displacement.coeffs, n, phi.K, N).reshape(n, -1)
    Xphi = _spec_to_grid(X_pert.coeffs, n, X_pert.K, N).reshape(n, -1)
    Xphi = Xphi + _shift_diff_raw(X_pert.coeffs, n, X_pert.K, x, g.T)
    rhs = Xphi.T - (J - np.eye(n)[None]) @ omega
    sol = np.linalg.solve(J, rhs[..., None])[..., 0].T
    spec, tail = _grid_to_spec(sol.reshape((n,) + (N,) * n), n, K_out, tail=True)
    out = SpectralVectorField(spec, n)
    return (out, tail) if return_tail else out


def pullback_constant(lam, Theta: TorusMap, K_out: int | None = None, oversample: float = 2.0):
    """``Theta^* lambda = (D Theta)^{-1} lambda`` as a spectral field."""
    lam = np.asarray(lam, dtype=float)
    n = Theta.n
    if K_out is None:
        K_out = Theta.K
    if Theta.is_identity():
        return SpectralVectorField.constant(lam, K_out)
    N = _alias_free_N(max(K_out, Theta.K), oversample)
    J = jacobian_grid(Theta, N)
    _check_invertible(J)
    sol = np.linalg.solve(J, np.broadcast_to(lam, (J.shape[0], n))[..., None])[..., 0].T
    return SpectralVectorField(_grid_to_spec(sol.reshape((n,) + (N,) * n), n, K_out), n)


# --- generators --------------------------------------------------------------

def random_hermitian(n: int, K: int, rng: np.random.Generator, scale: float = 1.0) -> SpectralScalar:
    """Random real trigonometric polynomial with Gaussian coefficients."""
    shape = (2 * K + 1,) * n
    c = scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return SpectralScalar(_hermitian_part(c, n), n)


def gevrey_random(n: int, K: int, a: float, r0: float, rng: np.random.Generator,
                  norm: float = 1.0, random_modulus: bool = False) -> SpectralScalar:
    """Random phases on the envelope ``exp(-r0 phi_a(|k|))``, scaled so ``||f||_{r0} = norm``.

    With ``random_modulus`` the envelope is multiplied by uniform factors in (0, 1].
    """
    shape = (2 * K + 1,) * n
    env = np.exp(-r0 * np.power(max_norm_array(n, K).astype(float), a) / a)
    theta = rng.uniform(0.0, TWO_PI, size=shape)
    mod = rng.uniform(0.0, 1.0, size=shape) if random_modulus else np.ones(shape)
    mod = 1.0 - mod if random_modulus else mod  # uniform on (0, 1]
    c = env * mod * np.exp(1j * theta)
    # keep exact moduli: copy the upper half onto the lower half by conjugation
    flat = c.reshape(-1)
    L = flat.size
    flat[L // 2 + 1:] = np.conj(flat[: L // 2][::-1])
    flat[L // 2] = np.abs(flat[L // 2]) * (1.0 if np.cos(theta.reshape(-1)[L // 2]) >= 0 else -1.0)
    f = SpectralScalar(flat.reshape(shape), n)
    cur = weighted_norm(f, Weight.gevrey(a), r0)
    return f * (norm / cur)
