"""Exact univariate polynomials and rational functions in S over the rationals.

Coefficients are :class:`fractions.Fraction`.  Polynomials are stored as
tuples of coefficients in ascending powers of ``S`` with trailing zeros
trimmed.  :class:`RationalInS` additionally carries an integer power of
``C~(s) = Gamma(-S+1)**2 / Gamma(-2S+2)`` and the pole set recorded before
cancellation.
"""
from __future__ import annotations

from fractions import Fraction
from functools import reduce
from math import lcm
from numbers import Rational
from typing import Iterable, Sequence

__all__ = [
    "Poly",
    "RationalInS",
    "PoleError",
    "as_fraction",
]


class PoleError(ArithmeticError):
    """Raised when an expression is evaluated at one of its poles."""


def as_fraction(x) -> Fraction:
    """Convert ints, Fractions and ``"p/q"`` strings to a Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**12)
    raise TypeError(f"cannot convert {type(x).__name__} to Fraction")


def _trim(cs: Iterable[Fraction]) -> tuple:
    cs = list(cs)
    while cs and cs[-1] == 0:
        cs.pop()
    return tuple(cs)


class Poly:
    """Polynomial in S with rational coefficients (ascending order)."""

    __slots__ = ("c",)

    def __init__(self, coeffs: Sequence = ()):
        self.c = _trim(as_fraction(x) for x in coeffs)

    # constructors
    @classmethod
    def const(cls, a) -> "Poly":
        return cls((a,))

    @classmethod
    def S(cls) -> "Poly":
        return cls((0, 1))

    @classmethod
    def linear(cls, a, b) -> "Poly":
        """Return ``a*S + b``."""
        return cls((b, a))

    @classmethod
    def from_roots(cls, roots: Iterable, lead=1) -> "Poly":
        p = cls.const(lead)
        for r in roots:
            p = p * cls((-as_fraction(r), 1))
        return p

    # basic queries
    @property
    def degree(self) -> int:
        return len(self.c) - 1

    def is_zero(self) -> bool:
        return not self.c

    def lead(self) -> Fraction:
        return self.c[-1] if self.c else Fraction(0)

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Poly.const(other)
        return isinstance(other, Poly) and self.c == other.c

    def __hash__(self):
        return hash(self.c)

    def __repr__(self):
        return f"Poly({[str(x) for x in self.c]})"

    # arithmetic
    def __add__(self, other):
        other = _poly(other)
        n = max(len(self.c), len(other.c))
        a = self.c + (Fraction(0),) * (n - len(self.c))
        b = other.c + (Fraction(0),) * (n - len(other.c))
        return Poly(x + y for x, y in zip(a, b))

    __radd__ = __add__

    def __neg__(self):
        return Poly(-x for x in self.c)

    def __sub__(self, other):
        return self + (-_poly(other))

    def __rsub__(self, other):
        return _poly(other) - self

    def __mul__(self, other):
        other = _poly(other)
        if not self.c or not other.c:
            return Poly()
        out = [Fraction(0)] * (len(self.c) + len(other.c) - 1)
        for i, x in enumerate(self.c):
            if x:
                for j, y in enumerate(other.c):
                    out[i + j] += x * y
        return Poly(out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power of a polynomial")
        out = Poly.const(1)
        for _ in range(k):
            out = out * self
        return out

    def divmod(self, other: "Poly"):
        other = _poly(other)
        if other.is_zero():
            raise ZeroDivisionError("polynomial division by zero")
        rem = list(self.c)
        dq = other.degree
        lc = other.lead()
        if len(rem) - 1 < dq:
            return Poly(), Poly(rem)
        quo = [Fraction(0)] * (len(rem) - dq)
        for i in range(len(rem) - 1, dq - 1, -1):
            f = rem[i] / lc
            quo[i - dq] = f
            if f:
                for j, y in enumerate(other.c):
                    rem[i - dq + j] -= f * y
        return Poly(quo), Poly(rem[:dq])

    def __floordiv__(self, other):
        return self.divmod(other)[0]

    def __mod__(self, other):
        return self.divmod(other)[1]

    def monic(self) -> "Poly":
        if self.is_zero():
            return self
        lc = self.lead()
        return Poly(x / lc for x in self.c)

    def gcd(self, other: "Poly") -> "Poly":
        a, b = self, _poly(other)
        while not b.is_zero():
            a, b = b, a % b
        return a.monic() if not a.is_zero() else Poly.const(1)

    def deriv(self) -> "Poly":
        return Poly(i * x for i, x in enumerate(self.c) if i > 0)

    def __call__(self, x):
        """Horner evaluation; exact for Fraction input."""
        if isinstance(x, (int, str)):
            x = as_fraction(x)
        acc = 0 * x
        for coef in reversed(self.c):
            acc = acc * x + (coef if isinstance(x, Fraction) else _num(coef, x))
        return acc

    def compose_linear(self, a, b) -> "Poly":
        """Return ``P(a*S + b)``."""
        lin = Poly.linear(a, b)
        out = Poly()
        for coef in reversed(self.c):
            out = out * lin + Poly.const(coef)
        return out

    def rational_roots(self) -> list:
        """Distinct rational roots (rational root theorem on the integer form)."""
        if self.degree < 1:
            return []
        den = reduce(lcm, (x.denominator for x in self.c), 1)
        ints = [int(x * den) for x in self.c]
        roots = []
        # strip zero roots first
        k = 0
        while ints[k] == 0:
            k += 1
        if k:
            roots.append(Fraction(0))
        ints = ints[k:]
        if len(ints) > 1:
            a0, an = abs(ints[0]), abs(ints[-1])
            for p in _divisors(a0):
                for q in _divisors(an):
                    for sgn in (1, -1):
                        r = Fraction(sgn * p, q)
                        if r not in roots and self(r) == 0:
                            roots.append(r)
        return sorted(roots)

    def root_multiplicity(self, r) -> int:
        r = as_fraction(r)
        lin = Poly((-r, 1))
        m, p = 0, self
        while not p.is_zero():
            q, rem = p.divmod(lin)
            if not rem.is_zero():
                break
            m, p = m + 1, q
        return m

    def to_strings(self) -> list:
        return [str(x) for x in self.c]

    @classmethod
    def from_strings(cls, xs: Sequence[str]) -> "Poly":
        return cls(Fraction(x) for x in xs)

    def pretty(self, var: str = "S") -> str:
        if self.is_zero():
            return "0"
        parts = []
        for i in range(len(self.c) - 1, -1, -1):
            a = self.c[i]
            if a == 0:
                continue
            sign = "-" if a < 0 else "+"
            mag = abs(a)
            if i == 0:
                body = str(mag)
            else:
                mono = var if i == 1 else f"{var}^{i}"
                body = mono if mag == 1 else f"{mag}*{mono}"
            parts.append((sign, body))
        s0, b0 = parts[0]
        out = ("-" if s0 == "-" else "") + b0
        for sg, b in parts[1:]:
            out += f" {sg} {b}"
        return out


def _num(coef: Fraction, like):
    if isinstance(like, complex):
        return complex(coef)
    try:
        return type(like)(coef.numerator) / type(like)(coef.denominator)
    except Exception:
        return float(coef)


def _divisors(a: int) -> list:
    if a == 0:
        return [1]
    out = []
    i = 1
    while i * i <= a:
        if a % i == 0:
            out.append(i)
            if i * i != a:
                out.append(a // i)
        i += 1
    return out


def _poly(x) -> Poly:
    if isinstance(x, Poly):
        return x
    return Poly.const(x)


class RationalInS:
    """Exact rational function ``num/den`` of S times ``C~(s)**c_power``.

    Parameters
    ----------
    num, den : Poly
        Numerator and denominator.  Reduced on construction so that
        ``gcd(num, den) = 1`` and ``den`` is monic.
    c_power : int
        Power of ``C~(s) = (4 pi)^{n/2} C(s)`` multiplying the rational part.
    pole_set : iterable of Fraction, optional
        Pole candidates recorded before cancellation.  Defaults to the
        rational roots of the unreduced denominator.
    """

    __slots__ = ("num", "den", "c_power", "pole_set")

    def __init__(self, num=None, den=None, c_power: int = 0, pole_set=None):
        num = _poly(num if num is not None else 0)
        den = _poly(den if den is not None else 1)
        if den.is_zero():
            raise ZeroDivisionError("zero denominator")
        pre = tuple(sorted(set(as_fraction(p) for p in pole_set))) if pole_set is not None \
            else tuple(den.rational_roots())
        if num.is_zero():
            num, den = Poly(), Poly.const(1)
        else:
            g = num.gcd(den)
            if g.degree > 0:
                num, den = num // g, den // g
            lc = den.lead()
            num = Poly(x / lc for x in num.c)
            den = den.monic()
        self.num = num
        self.den = den
        self.c_power = int(c_power) if not num.is_zero() else 0
        self.pole_set = pre

    # constructors
    @classmethod
    def const(cls, a, c_power: int = 0) -> "RationalInS":
        return cls(Poly.const(a), Poly.const(1), c_power)

    @classmethod
    def poly(cls, p: Poly, c_power: int = 0) -> "RationalInS":
        return cls(p, Poly.const(1), c_power)

    @classmethod
    def S(cls) -> "RationalInS":
        return cls(Poly.S())

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def is_polynomial(self) -> bool:
        return self.den.degree == 0

    def with_c_power(self, k: int) -> "RationalInS":
        return RationalInS(self.num, self.den, k, self.pole_set)

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = RationalInS.const(other)
        if not isinstance(other, RationalInS):
            return NotImplemented
        return (self.num == other.num and self.den == other.den
                and self.c_power == other.c_power)

    def __hash__(self):
        return hash((self.num, self.den, self.c_power))

    def _check_c(self, other: "RationalInS") -> int:
        if self.is_zero():
            return other.c_power
        if other.is_zero():
            return self.c_power
        if self.c_power != other.c_power:
            raise ValueError(
                f"cannot add terms with C-powers {self.c_power} and {other.c_power}")
        return self.c_power

    def __add__(self, other):
        other = _rat(other)
        k = self._check_c(other)
        poles = set(self.pole_set) | set(other.pole_set)
        if self.den == other.den:
            return RationalInS(self.num + other.num, self.den, k, poles)
        return RationalInS(self.num * other.den + other.num * self.den,
                           self.den * other.den, k, poles)

    __radd__ = __add__

    def __neg__(self):
        return RationalInS(-self.num, self.den, self.c_power, self.pole_set)

    def __sub__(self, other):
        return self + (-_rat(other))

    def __rsub__(self, other):
        return _rat(other) - self

    def __mul__(self, other):
        other = _rat(other)
        return RationalInS(self.num * other.num, self.den * other.den,
                           self.c_power + other.c_power,
                           set(self.pole_set) | set(other.pole_set))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _rat(other)
        if other.is_zero():
            raise ZeroDivisionError("division by zero rational function")
        poles = set(self.pole_set) | set(other.num.rational_roots())
        return RationalInS(self.num * other.den, self.den * other.num,
                           self.c_power - other.c_power, poles)

    def __call__(self, S):
        """Evaluate the rational part only (the C~ factor is ignored)."""
        return eval_rational(self, S)

    def poles(self) -> list:
        """Rational poles of the reduced rational part."""
        return self.den.rational_roots()

    def __repr__(self):
        return f"RationalInS({self.pretty()!r})"

    def pretty(self, var: str = "S", show_c: bool = True) -> str:
        n = self.num.pretty(var)
        body = n if self.den.degree == 0 else f"({n})/({self.den.pretty(var)})"
        if show_c and self.c_power:
            if self.den.degree == 0 and len([x for x in self.num.c if x]) > 1:
                body = f"({body})"
            body += " * C~" if self.c_power == 1 else f" * C~^{self.c_power}"
        return body

    def to_json(self) -> dict:
        return {"num": self.num.to_strings(), "den": self.den.to_strings(),
                "c_power": self.c_power}

    @classmethod
    def from_json(cls, d: dict) -> "RationalInS":
        return cls(Poly.from_strings(d["num"]), Poly.from_strings(d["den"]),
                   d.get("c_power", 0))


def _rat(x) -> RationalInS:
    if isinstance(x, RationalInS):
        return x
    if isinstance(x, Poly):
        return RationalInS.poly(x)
    return RationalInS.const(x)


def eval_rational(expr: RationalInS, S):
    """Evaluate the rational part of ``expr`` at ``S``.

    Exact for rational ``S`` (int, Fraction or ``"p/q"``); complex double
    precision otherwise.

    Raises
    ------
    PoleError
        If the reduced denominator vanishes at ``S``.
    """
    if isinstance(S, (int, str)):
        S = as_fraction(S)
    d = expr.den(S)
    if d == 0:
        raise PoleError(f"pole of {expr.pretty()} at S={S}")
    if not isinstance(S, Fraction) and abs(d) < 1e-300:
        raise PoleError(f"pole of {expr.pretty()} at S={S}")
    return expr.num(S) / d
