"""Gamma-function ratios with integer offsets, reduced to rational functions of S.

Every ratio handled here has the shape ``prod Gamma(a*S + b)**e`` with
multiplier ``a`` in ``{1, -1, 2, -2}``.  The reducible family is the one
whose non-polynomial content is an integer power of::

    C~(s) = Gamma(-S+1)**2 / Gamma(-2S+2) = (4 pi)^{n/2} C(s)

which is exactly what the (u, v) moment integrals of the heat symbol
produce.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import mpmath

from .rational import Poly, RationalInS, PoleError, as_fraction, eval_rational

__all__ = [
    "GammaFactor",
    "GammaRatio",
    "IrreducibleRatioError",
    "ConstraintError",
    "pochhammer_reduce",
    "uv_gamma_ratio",
    "uv_coefficient",
    "C_of_s",
    "Ctilde_exact",
    "c_pole_order",
    "pole_orders",
    "pole_locations",
    "substitution_reference",
    "check_substitution_table",
    "eval_rational",
    "PoleError",
]

# base argument for each multiplier: Gamma(S), Gamma(-S+1), Gamma(2S), Gamma(-2S+2)
_BASE = {1: 0, -1: 1, 2: 0, -2: 2}
POLE_WINDOW = 20


class IrreducibleRatioError(ValueError):
    """The Gamma ratio is not a rational function times a power of C~."""


class ConstraintError(ValueError):
    """``r > min(p, q) + 2`` in a (u, v) moment integral."""


@dataclass(frozen=True)
class GammaFactor:
    """``Gamma(a*S + b) ** exponent``."""

    a: int
    b: Fraction
    exponent: int = 1

    def __post_init__(self):
        if self.a not in _BASE:
            raise IrreducibleRatioError(f"unsupported multiplier a={self.a}")
        object.__setattr__(self, "b", as_fraction(self.b))

    def arg(self, S):
        return self.a * S + self.b

    def __str__(self):
        a = {1: "S", -1: "-S", 2: "2S", -2: "-2S"}[self.a]
        b = "" if self.b == 0 else (f"+{self.b}" if self.b > 0 else f"{self.b}")
        e = "" if self.exponent == 1 else f"^{self.exponent}"
        return f"Gamma({a}{b}){e}"


@dataclass(frozen=True)
class GammaRatio:
    """Product of Gamma factors, stored before any reduction."""

    factors: tuple = field(default_factory=tuple)

    @classmethod
    def of(cls, num: Iterable = (), den: Iterable = ()) -> "GammaRatio":
        """Build from ``(a, b)`` pairs for numerator and denominator."""
        fs = [GammaFactor(a, b, 1) for a, b in num]
        fs += [GammaFactor(a, b, -1) for a, b in den]
        return cls(tuple(fs))

    def __mul__(self, other: "GammaRatio") -> "GammaRatio":
        return GammaRatio(self.factors + other.factors)

    def evaluate(self, S, dps: int = 30):
        """Numeric value via mpmath (cross-checks only)."""
        with mpmath.workdps(dps):
            S = mpmath.mpmathify(S)
            out = mpmath.mpf(1)
            for f in self.factors:
                x = f.arg(S)
                out *= mpmath.gamma(x) ** f.exponent if f.exponent > 0 else \
                    mpmath.rgamma(x) ** (-f.exponent)
            return out

    def __str__(self):
        num = [str(GammaFactor(f.a, f.b, f.exponent)) for f in self.factors if f.exponent > 0]
        den = [str(GammaFactor(f.a, f.b, -f.exponent)) for f in self.factors if f.exponent < 0]
        return f"[{' '.join(num) or '1'}] / [{' '.join(den) or '1'}]"


def _pochhammer(a: int, base: int, m: int):
    """``Gamma(aS+base+m)/Gamma(aS+base)`` as (num Poly, den Poly)."""
    num, den = Poly.const(1), Poly.const(1)
    if m >= 0:
        for i in range(m):
            num = num * Poly.linear(a, base + i)
    else:
        for i in range(1, -m + 1):
            den = den * Poly.linear(a, base - i)
    return num, den


def pochhammer_reduce(g: GammaRatio):
    """Reduce a Gamma ratio to ``RationalInS * C~**c_power``.

    Each factor ``Gamma(aS+b)`` is rewritten as ``Gamma(aS+b0)`` times a
    Pochhammer chain, with ``b0`` the base offset of its multiplier class.
    The leftover base factors must collapse to a power of ``C~``.

    Returns
    -------
    (RationalInS, int)
        The rational part (with ``c_power`` already set) and ``c_power``.

    Raises
    ------
    IrreducibleRatioError
        If an offset is not integer-compatible with its base, or the
        remaining base factors are not a power of ``C~``.
    """
    num, den = Poly.const(1), Poly.const(1)
    expo = {a: 0 for a in _BASE}
    for f in g.factors:
        m = f.b - _BASE[f.a]
        if m.denominator != 1:
            raise IrreducibleRatioError(f"non-integer offset in {f}")
        pn, pd = _pochhammer(f.a, _BASE[f.a], int(m))
        e = f.exponent
        if e > 0:
            num, den = num * pn ** e, den * pd ** e
        else:
            num, den = num * pd ** (-e), den * pn ** (-e)
        expo[f.a] += e
    k = -expo[-2]
    if expo[1] != 0 or expo[2] != 0 or expo[-1] != 2 * k:
        raise IrreducibleRatioError(
            f"leftover Gamma(S)^{expo[1]} Gamma(2S)^{expo[2]} "
            f"Gamma(-S+1)^{expo[-1]} Gamma(-2S+2)^{expo[-2]} is not a power of C~")
    return RationalInS(num, den, k), k


def uv_gamma_ratio(p: int, q: int, r: int) -> GammaRatio:
    """The Gamma ratio of the closed-form (u, v) moment integral."""
    return GammaRatio.of(
        num=[(1, 2 + p + q - r), (-1, r - p - 1), (-1, r - q - 1)],
        den=[(1, 0), (-2, 2 * r - p - q - 2)],
    )


def check_uv_constraint(p: int, q: int, r: int):
    if min(p, q, r) < 0:
        raise ConstraintError(f"negative exponent in (p,q,r)=({p},{q},{r})")
    if r > min(p, q) + 2:
        raise ConstraintError(f"r={r} > min(p,q)+2 for (p,q)=({p},{q})")


def uv_coefficient(p: int, q: int, r: int):
    """Closed form of the normalized (u, v) moment integral.

    The integral::

        (1/Gamma(S)) int_0^inf int_0^inf (u+v)^{s-r} u^p v^q G du dv

    equals ``coeff * C(s) * |xi|^{n-2s+e}`` with ``e = 2r - 2p - 2q - 4``.

    Returns
    -------
    coeff : RationalInS
        Rational part with ``c_power == 1``.
    e : int
        Offset of the ``|xi|`` power.

    Raises
    ------
    ConstraintError
        If ``r > min(p, q) + 2``.
    """
    check_uv_constraint(p, q, r)
    coeff, k = pochhammer_reduce(uv_gamma_ratio(p, q, r))
    assert k == 1
    return coeff, 2 * r - 2 * p - 2 * q - 4


def _S_of(n, s):
    if isinstance(s, (int, Fraction, str)):
        return as_fraction(s) - Fraction(n, 2)
    return s - n / 2


def Ctilde_exact(S: Fraction):
    """Exact value of ``C~`` at integer ``S <= 0``; None otherwise."""
    S = as_fraction(S)
    if S.denominator != 1 or S > 0:
        return None
    m = int(-S)
    from math import factorial
    return Fraction(factorial(m) ** 2, factorial(2 * m + 1))


def C_of_s(n: int, s, dps: int = 30):
    """``C(s) = (4 pi)^{-n/2} Gamma(-S+1)^2 / Gamma(-2S+2)``.

    Returns an mpmath number.  At ``S`` in the positive integers the value
    is a pole and :class:`PoleError` is raised; at half-integers ``>= 3/2``
    the value is zero.
    """
    S = _S_of(n, s)
    if c_pole_order(S) > 0:
        raise PoleError(f"C(s) has a pole at S={S}")
    with mpmath.workdps(dps):
        Sm = mpmath.mpmathify(complex(S) if isinstance(S, complex) else
                              (mpmath.mpf(S.numerator) / S.denominator if isinstance(S, Fraction) else S))
        val = mpmath.gamma(1 - Sm) ** 2 * mpmath.rgamma(2 - 2 * Sm)
        return (4 * mpmath.pi) ** (-mpmath.mpf(n) / 2) * val


def c_pole_order(S) -> int:
    """Pole order of ``C~`` at ``S`` (negative for zeros)."""
    try:
        S = as_fraction(S)
    except TypeError:
        return 0
    order = 0
    x = 1 - S
    if x.denominator == 1 and x <= 0:
        order += 2
    y = 2 - 2 * S
    if y.denominator == 1 and y <= 0:
        order -= 1
    return order


def gamma_factor_order(f: GammaFactor, S: Fraction) -> int:
    x = f.arg(S)
    if x.denominator == 1 and x <= 0:
        return f.exponent
    return 0


def pole_orders(obj, window: int = POLE_WINDOW, cancel: bool = True) -> dict:
    """Pole orders in S within ``|S| <= window``.

    Parameters
    ----------
    obj : GammaRatio or RationalInS
        For a GammaRatio, orders come from the Gamma factors.  For a
        RationalInS the reduced rational part is combined with
        ``c_power`` copies of ``C~``.
    cancel : bool
        With ``cancel=False`` only the poles of the individual numerator
        factors are reported (the pre-cancellation view); with ``True``
        the net order after zeros of denominator factors is used.

    Returns
    -------
    dict
        Map ``S -> order`` for positive orders.
    """
    cands = set()
    for k in range(-2 * window, 2 * window + 1):
        cands.add(Fraction(k, 2))
    out = {}
    if isinstance(obj, GammaRatio):
        for S in sorted(cands):
            orders = [gamma_factor_order(f, S) for f in obj.factors]
            o = sum(orders) if cancel else sum(x for x in orders if x > 0)
            if o > 0:
                out[S] = o
        return out
    if isinstance(obj, RationalInS):
        cands |= set(obj.den.rational_roots())
        cands |= set(obj.pole_set)
        for S in sorted(cands):
            if abs(S) > window:
                continue
            if cancel:
                o = obj.den.root_multiplicity(S) - obj.num.root_multiplicity(S)
                o += obj.c_power * c_pole_order(S)
            else:
                o = (1 if S in obj.pole_set else 0) + max(0, 2 * obj.c_power if c_pole_order(S) > 0 else 0)
            if o > 0:
                out[S] = o
        return out
    raise TypeError(type(obj).__name__)


def pole_locations(expr, n: int, window: int = POLE_WINDOW, cancel: bool = True) -> list:
    """Poles of ``expr`` (times its C~ power) as values of ``s = S + n/2``."""
    return [S + Fraction(n, 2) for S in pole_orders(expr, window, cancel)]


def in_pole_lattice(s, n: int) -> bool:
    """True if ``s`` lies in ``n/2 + {1, 2, ...}``."""
    S = as_fraction(s) - Fraction(n, 2)
    return S.denominator == 1 and S >= 1


def substitution_reference() -> dict:
    """Hand-encoded ``(p, q, r) -> (coefficient, offset)`` table of the nine basic moments."""
    P = lambda *cs: RationalInS.poly(Poly(cs)).with_c_power(1)
    return {
        (2, 2, 4): (P(0, 1, 1), -4),
        (1, 1, 3): (P(0, 1), -2),
        (1, 2, 3): (P(-1, 1, 2), -4),
        (0, 1, 2): (P(-1, 2), -2),
        (1, 1, 2): (P(-2, 2, 4), -4),
        (0, 0, 1): (P(-2, 4), -2),
        (0, 2, 2): (P(0, -2, 4), -4),
        (0, 0, 2): (P(1), 0),
        (0, 0, 0): (P(-4, 0, 16), -4),
    }


def check_substitution_table() -> dict:
    """``(p, q, r) -> bool`` comparing uv_coefficient with the reference table."""
    return {k: uv_coefficient(*k) == v for k, v in substitution_reference().items()}
