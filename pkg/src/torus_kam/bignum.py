"""Positive numbers of iterated-exponential size.

A :class:`Tower` stores ``x = exp(exp(...exp(top)...))`` with ``height``
exponentials applied to an mpmath float ``top``. Heights are normalised so that
height-0 values are at most ``BIG = exp(LIM)`` and, for ``height >= 1``,
``LIM < top <= BIG``; values are then ordered by ``(height, top)``.

Only the operations needed for continued-fraction denominators of Liouville
numbers are provided. Results that fall below the working precision of a
larger operand (``x + y`` with ``y/x`` beyond ``2**-prec``) are absorbed,
exactly as in floating point.
"""

from __future__ import annotations

import math
from functools import total_ordering

import mpmath

__all__ = ["Tower", "mp", "as_tower", "tlog", "texp", "is_tower", "log_diff"]

mp = mpmath.MPContext()
mp.prec = 192

LIM = mp.mpf(2) ** 40
BIG = mp.exp(LIM)
_NEGLIGIBLE = mp.mpf(mp.prec + 16)  # y/x below exp(-this) does not change x
_EXP_CAP = mp.mpf(2) ** 24  # ratios beyond exp(2**24) are reported as 0 or inf


@total_ordering
class Tower:
    __slots__ = ("height", "top")

    def __init__(self, height: int, top):
        top = mp.mpf(top)
        if top <= 0 and height == 0:
            raise ValueError("Tower holds positive numbers only")
        self.height = int(height)
        self.top = top
        self._normalize()

    def _normalize(self):
        h, t = self.height, self.top
        while h > 0 and t <= LIM:
            t = mp.exp(t)
            h -= 1
        while t > BIG:
            t = mp.log(t)
            h += 1
        self.height, self.top = h, t

    @classmethod
    def of(cls, x) -> "Tower":
        if isinstance(x, Tower):
            return x
        if isinstance(x, int) and x.bit_length() > 10_000_000:
            raise OverflowError("integer too large to convert")
        return cls(0, mp.mpf(x))

    # conversions
    def __float__(self):
        if self.height > 0:
            return math.inf
        try:
            return float(self.top)
        except OverflowError:
            return math.inf

    def to_mpf(self):
        if self.height > 0:
            return mp.inf
        return self.top

    def __repr__(self):
        if self.height == 0:
            return f"Tower({mp.nstr(self.top, 12)})"
        return f"Tower(exp^{self.height}({mp.nstr(self.top, 12)}))"

    def to_dict(self) -> dict:
        return {"height": self.height, "top": mp.nstr(self.top, 30)}

    # order
    def _key(self):
        return (self.height, self.top)

    def __eq__(self, other):
        other = _coerce(other)
        if other is None:
            return NotImplemented
        return self._key() == other._key()

    def __lt__(self, other):
        other = _coerce(other)
        if other is None:
            return NotImplemented
        return self._key() < other._key()

    __hash__ = None

    # elementary functions
    def log(self) -> "Tower | mpmath.mpf":
        """Natural logarithm; height-0 results are returned as a Tower too (needs x > 1)."""
        if self.height == 0:
            v = mp.log(self.top)
            if v <= 0:
                raise ValueError("log of a number <= 1 is not a positive Tower")
            return Tower(0, v)
        return Tower(self.height - 1, self.top)

    def log_mpf(self):
        """Natural logarithm as an mpf (``inf`` when it does not fit)."""
        if self.height == 0:
            return mp.log(self.top)
        if self.height == 1:
            return self.top
        return mp.inf

    def exp(self) -> "Tower":
        if self.height == 0 and self.top <= LIM:
            return Tower(0, mp.exp(self.top))
        return Tower(self.height + 1, self.top)

    def shift(self, s) -> "Tower":
        """``self + s`` for a (possibly negative) mpf ``s`` with ``|s| < self``."""
        s = mp.mpf(s)
        if self.height == 0:
            return Tower(0, self.top + s)
        return self  # |s| is far below the absolute resolution of self

    def scale(self, c) -> "Tower":
        """``c * self`` for positive mpf ``c``."""
        c = mp.mpf(c)
        if self.height == 0:
            return Tower(0, self.top * c)
        return _log_of(self).shift(mp.log(c)).exp()

    # arithmetic
    def __add__(self, other):
        other = _coerce(other)
        if other is None:
            return NotImplemented
        x, y = (self, other) if self >= other else (other, self)
        if x.height == 0:
            return Tower(0, x.top + y.top)
        d = log_diff(y, x)
        if d < -_NEGLIGIBLE:
            return x
        if mp.isnan(d):
            d = mp.zero
        return _log_of(x).shift(mp.log1p(mp.exp(d))).exp()

    __radd__ = __add__

    def __sub__(self, other):
        """Difference of positives with ``self > other``."""
        other = _coerce(other)
        if other is None:
            return NotImplemented
        if not self > other:
            raise ValueError("Tower difference must be positive")
        if self.height == 0:
            return Tower(0, self.top - other.top)
        d = log_diff(other, self)
        if d < -_NEGLIGIBLE:
            return self
        if mp.isnan(d) or d >= 0:
            raise ValueError("difference not resolved at the working precision")
        return _log_of(self).shift(mp.log(-mp.expm1(d))).exp()

    def __mul__(self, other):
        if isinstance(other, (int, float)) or _is_mpf(other):
            other = mp.mpf(other)
            if other <= 0:
                raise ValueError("Tower holds positive numbers only")
            return self.scale(other)
        other = _coerce(other)
        if other is None:
            return NotImplemented
        if self.height == 0 and other.height == 0:
            return Tower(0, self.top * other.top)
        return (_signed_log(self) + _signed_log(other)).exp()

    __rmul__ = __mul__

    def __truediv__(self, other):
        """Ratio as an mpf (0 or inf when out of range)."""
        other = _coerce(other)
        if other is None:
            return NotImplemented
        d = log_diff(self, other)
        if mp.isnan(d):
            return mp.nan
        if d > _EXP_CAP:
            return mp.inf
        if d < -_EXP_CAP:
            return mp.zero
        return mp.exp(d)

    def __pow__(self, p):
        p = mp.mpf(p)
        if p <= 0:
            raise ValueError("only positive powers")
        if self.height == 0:
            return Tower(0, self.top ** p)
        return _log_of(self).scale(p).exp()

    def __rpow__(self, base):
        base = mp.mpf(base)
        if base <= 1:
            raise ValueError("base must exceed 1")
        return self.scale(mp.log(base)).exp()


def _is_mpf(x) -> bool:
    return type(x).__name__ in ("mpf", "constant")


def _coerce(x):
    if isinstance(x, Tower):
        return x
    if isinstance(x, (int, float)) or _is_mpf(x):
        if x <= 0:
            return None
        return Tower.of(x)
    return None


def _log_of(x: Tower) -> Tower:
    """``ln x`` as a Tower for ``x >= BIG`` (always > LIM there)."""
    return Tower(x.height - 1, x.top)


class _SignedLog:
    """Sum of logarithms kept as ``Tower`` for multiplication of large values."""

    def __init__(self, big: Tower, small):
        self.big, self.small = big, small

    def __add__(self, other):
        return _SignedLog(self.big + other.big, self.small + other.small)

    def exp(self) -> Tower:
        return self.big.shift(self.small).exp()


def _signed_log(x: Tower) -> _SignedLog:
    if x.height == 0:
        v = mp.log(x.top)
        if v > 0:
            return _SignedLog(Tower(0, v), mp.zero)
        return _SignedLog(Tower(0, mp.mpf(1)), v - 1)
    return _SignedLog(_log_of(x), mp.zero)


def _resolution(v):
    return abs(v) * mp.mpf(2) ** (-(mp.prec - 16))


def log_diff(x, y):
    """``ln x - ln y`` as an mpf.

    Returns ``+-inf`` when the difference is certainly beyond the mpf range and
    ``nan`` when the two values agree to within the resolution of their
    representation (the sign of the difference is then unknown).
    """
    x, y = Tower.of(x), Tower.of(y)
    if x.height <= 1 and y.height <= 1:
        lx, ly = x.log_mpf(), y.log_mpf()
        d = lx - ly
        u = max(_resolution(lx) if x.height == 1 else 0, _resolution(ly) if y.height == 1 else 0)
        if abs(d) <= u and u > mp.mpf(2) ** -20:
            return mp.nan
        return d
    if x.height != y.height:
        return mp.inf if x.height > y.height else -mp.inf
    if abs(x.top - y.top) <= _resolution(max(x.top, y.top)):
        return mp.nan
    return mp.inf if x.top > y.top else -mp.inf


def as_tower(x) -> Tower:
    return Tower.of(x)


def is_tower(x) -> bool:
    return isinstance(x, Tower)


def tlog(x) -> Tower:
    """Natural log of a positive int, mpf or Tower (> 1), as a Tower."""
    return Tower.of(x).log()


def texp(x) -> Tower:
    return Tower.of(x).exp()
