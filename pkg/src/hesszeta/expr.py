"""Index-tensor expressions: xi-monomials, Kronecker deltas and |xi| powers.

A :class:`TensorTerm` stands for::

    coeff(S) * xi_{i1} ... xi_{im} * delta_{a1 b1} ... * |xi|^{n - 2s + e}

with ``n - 2s = -2S``.  Indices are either abstract labels (``str``) or
concrete coordinates (``int`` in ``1..n``).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

import mpmath

from .rational import Poly, RationalInS, PoleError, as_fraction, eval_rational
from .gamma_rational import Ctilde_exact, c_pole_order

__all__ = [
    "MultiIndex",
    "TensorTerm",
    "TensorExpr",
    "UnassignedIndexError",
    "canonicalize",
    "instantiate",
    "expr_equal",
    "XI_BASKET",
]

IndexSymbol = Union[str, int]

# integer vectors in dimension 4 with distinct perfect-square |xi|^2
XI_BASKET = (
    (1, 2, 2, 4),    # 25
    (2, 4, 5, 6),    # 81
    (1, 1, 3, 5),    # 36
    (1, 2, 4, 10),   # 121
    (1, 1, 1, 1),    # 4
)


class UnassignedIndexError(KeyError):
    """An abstract index was left without a concrete value."""


def _ikey(i: IndexSymbol):
    return (0, i, "") if isinstance(i, int) else (1, 0, i)


def _sort_idx(xs: Iterable[IndexSymbol]) -> tuple:
    return tuple(sorted(xs, key=_ikey))


def _pair(a: IndexSymbol, b: IndexSymbol) -> tuple:
    return (a, b) if _ikey(a) <= _ikey(b) else (b, a)


@dataclass(frozen=True)
class MultiIndex:
    """Multi-index ``alpha = (alpha_1, ..., alpha_n)`` of non-negative ints."""

    entries: tuple = ()

    def __post_init__(self):
        ent = tuple(int(x) for x in self.entries)
        if any(x < 0 for x in ent):
            raise ValueError("multi-index entries must be non-negative")
        object.__setattr__(self, "entries", ent)

    @classmethod
    def zero(cls, n: int) -> "MultiIndex":
        return cls((0,) * n)

    @classmethod
    def unit(cls, n: int, j: int) -> "MultiIndex":
        """``e_j`` with 1-based ``j``."""
        return cls(tuple(1 if i == j - 1 else 0 for i in range(n)))

    @classmethod
    def from_indices(cls, idx: Sequence[int], n: int) -> "MultiIndex":
        """Multi-index of the derivative ``d_{i1} d_{i2} ...`` (1-based)."""
        ent = [0] * n
        for i in idx:
            ent[i - 1] += 1
        return cls(tuple(ent))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def order(self) -> int:
        return sum(self.entries)

    def __abs__(self):
        return self.order

    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        if len(self) != len(other):
            raise ValueError("dimension mismatch")
        return MultiIndex(tuple(a + b for a, b in zip(self, other)))

    def factorial(self) -> int:
        return math.prod(math.factorial(a) for a in self.entries)

    def binomial(self, other: "MultiIndex") -> int:
        """``binom(self, other) = prod binom(a_i, b_i)``."""
        return math.prod(math.comb(a, b) for a, b in zip(self, other))

    def indices(self) -> tuple:
        """Expand into a sorted list of 1-based coordinate labels."""
        out = []
        for i, a in enumerate(self.entries):
            out += [i + 1] * a
        return tuple(out)


@dataclass(frozen=True)
class TensorTerm:
    coeff: RationalInS
    xi: tuple = ()
    deltas: tuple = ()
    e: int = 0

    def __post_init__(self):
        object.__setattr__(self, "xi", _sort_idx(self.xi))
        ds = tuple(sorted((_pair(*p) for p in self.deltas),
                          key=lambda p: (_ikey(p[0]), _ikey(p[1]))))
        object.__setattr__(self, "deltas", ds)
        if not isinstance(self.coeff, RationalInS):
            object.__setattr__(self, "coeff", RationalInS.const(as_fraction(self.coeff)))

    def key(self):
        return (self.xi, self.deltas, self.e, self.coeff.c_power)

    def indices(self) -> set:
        out = set(self.xi)
        for a, b in self.deltas:
            out |= {a, b}
        return out

    def relabel(self, mapping: Mapping) -> "TensorTerm":
        f = lambda i: mapping.get(i, i)
        return TensorTerm(self.coeff, tuple(f(i) for i in self.xi),
                          tuple((f(a), f(b)) for a, b in self.deltas), self.e)

    def with_coeff(self, c: RationalInS) -> "TensorTerm":
        return TensorTerm(c, self.xi, self.deltas, self.e)


def _simplify_term(t: TensorTerm):
    """Contract trivial deltas; return None for a vanishing term."""
    if t.coeff.is_zero():
        return None
    keep = []
    for a, b in t.deltas:
        if a == b:
            continue
        if isinstance(a, int) and isinstance(b, int):
            return None
        keep.append((a, b))
    if len(keep) == len(t.deltas):
        return t
    return TensorTerm(t.coeff, t.xi, tuple(keep), t.e)


@dataclass(frozen=True)
class TensorExpr:
    """A sum of :class:`TensorTerm` objects."""

    terms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    @classmethod
    def term(cls, coeff, xi=(), deltas=(), e=0) -> "TensorExpr":
        if not isinstance(coeff, RationalInS):
            coeff = RationalInS.const(as_fraction(coeff))
        return cls((TensorTerm(coeff, tuple(xi), tuple(deltas), e),))

    def __add__(self, other: "TensorExpr") -> "TensorExpr":
        return canonicalize(TensorExpr(self.terms + other.terms))

    def __neg__(self):
        return self.scale(-1)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c) -> "TensorExpr":
        if not isinstance(c, RationalInS):
            c = RationalInS.const(as_fraction(c))
        return canonicalize(TensorExpr(tuple(t.with_coeff(t.coeff * c) for t in self.terms)))

    def relabel(self, mapping: Mapping) -> "TensorExpr":
        return canonicalize(TensorExpr(tuple(t.relabel(mapping) for t in self.terms)))

    def free_indices(self) -> list:
        out = set()
        for t in self.terms:
            out |= {i for i in t.indices() if isinstance(i, str)}
        return sorted(out)

    def is_zero(self) -> bool:
        return not canonicalize(self).terms

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    # rendering
    def to_text(self) -> str:
        if not self.terms:
            return "0"
        out = []
        for t in self.terms:
            c = t.coeff.pretty(show_c=True)
            fac = [f"xi_{i}" for i in t.xi] + [f"delta_{a}{b}" for a, b in t.deltas]
            norm = f"|xi|^(n-2s{t.e:+d})" if t.e else "|xi|^(n-2s)"
            out.append(" * ".join([f"({c})"] + fac + [norm]))
        return "\n  + ".join(out)

    def to_latex(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for t in self.terms:
            c = _latex_rational(t.coeff)
            fac = "".join(f"\\xi_{{{i}}}" for i in t.xi)
            fac += "".join(f"\\delta_{{{a}{b}}}" for a, b in t.deltas)
            off = "" if t.e == 0 else (f"{t.e}" if t.e < 0 else f"+{t.e}")
            parts.append(f"{c}\\,{fac}\\,|\\xi|^{{n-2s{off}}}")
        s = " + ".join(parts)
        return s.replace("+ -", "- ")

    def to_json(self) -> dict:
        return {"terms": [{"coeff": t.coeff.to_json(),
                           "xi": list(t.xi),
                           "deltas": [list(p) for p in t.deltas],
                           "norm_offset": t.e} for t in self.terms]}

    @classmethod
    def from_json(cls, d: dict) -> "TensorExpr":
        terms = []
        for t in d["terms"]:
            terms.append(TensorTerm(RationalInS.from_json(t["coeff"]), tuple(t["xi"]),
                                    tuple(tuple(p) for p in t["deltas"]), int(t["norm_offset"])))
        return canonicalize(cls(tuple(terms)))


def _latex_poly(p: Poly) -> str:
    if p.is_zero():
        return "0"
    parts = []
    for i in range(p.degree, -1, -1):
        a = p.c[i]
        if a == 0:
            continue
        mag = abs(a)
        num = "" if (mag == 1 and i > 0) else (
            str(mag) if mag.denominator == 1 else f"\\frac{{{mag.numerator}}}{{{mag.denominator}}}")
        mono = "" if i == 0 else ("S" if i == 1 else f"S^{{{i}}}")
        parts.append(("-" if a < 0 else "+", num + mono))
    s = ("-" if parts[0][0] == "-" else "") + parts[0][1]
    for sg, b in parts[1:]:
        s += f" {sg} {b}"
    return s


def _latex_rational(c: RationalInS) -> str:
    n = _latex_poly(c.num)
    body = f"\\left({n}\\right)" if c.den.degree == 0 else \
        f"\\frac{{{n}}}{{{_latex_poly(c.den)}}}"
    if c.c_power:
        body += "\\,\\tilde C(s)" + ("" if c.c_power == 1 else f"^{{{c.c_power}}}")
    return body


def canonicalize(e: TensorExpr) -> TensorExpr:
    """Sort indices and delta pairs, merge like terms and drop zeros.

    ``delta_{ii}`` contracts to 1 and ``delta_{ab}`` with distinct concrete
    ``a, b`` kills its term.
    """
    acc: dict = {}
    order = []
    for t in e.terms:
        t = _simplify_term(t)
        if t is None:
            continue
        k = t.key()
        if k in acc:
            acc[k] = acc[k] + t.coeff
        else:
            acc[k] = t.coeff
            order.append(k)
    terms = []
    for k in sorted(order, key=_term_sort_key):
        c = acc[k]
        if not c.is_zero():
            terms.append(TensorTerm(c, k[0], k[1], k[2]))
    return TensorExpr(tuple(terms))


def _term_sort_key(k):
    xi, ds, e, cp = k
    return (e, cp, -len(xi), [_ikey(i) for i in xi],
            [(_ikey(a), _ikey(b)) for a, b in ds])


def _norm_power(N: Fraction, x, mode: str):
    """``|xi|^x`` with ``|xi|^2 = N``; exact when possible."""
    if isinstance(x, Fraction):
        if (x / 2).denominator == 1:
            return N ** int(x / 2)
        if x.denominator == 1:
            rn, rd = math.isqrt(N.numerator), math.isqrt(N.denominator)
            if rn * rn == N.numerator and rd * rd == N.denominator:
                return Fraction(rn, rd) ** int(x)
    if mode == "exact":
        raise ValueError(f"|xi|^{x} is not exact at |xi|^2={N}")
    if isinstance(x, complex):
        return complex(mpmath.power(mpmath.mpf(N.numerator) / N.denominator, mpmath.mpc(x) / 2))
    return float(N) ** (float(x) / 2)


def _ctilde_value(S, k: int, mode: str):
    if k == 0:
        return 1
    if isinstance(S, Fraction):
        if c_pole_order(S) > 0 and k > 0:
            raise PoleError(f"C~ has a pole at S={S}")
        v = Ctilde_exact(S)
        if v is not None:
            return v ** k
        if mode == "exact":
            raise ValueError(f"C~ at S={S} is not rational")
        Sm = mpmath.mpf(S.numerator) / S.denominator
    else:
        Sm = mpmath.mpmathify(S)
    val = mpmath.gamma(1 - Sm) ** 2 * mpmath.rgamma(2 - 2 * Sm)
    val = val ** k
    return complex(val) if isinstance(S, complex) else float(val)


def instantiate(e: TensorExpr, n: int, index_assignment: Mapping, xi: Sequence, S,
                mode: str = "auto"):
    """Evaluate an expression at concrete indices, ``xi`` and ``S``.

    Parameters
    ----------
    e : TensorExpr
    n : int
        Dimension; concrete indices must lie in ``1..n``.
    index_assignment : mapping
        Abstract label to concrete index.
    xi : sequence of rationals
    S : rational, float or complex
        ``s - n/2``.
    mode : {"auto", "exact", "float"}
        ``exact`` raises if a factor cannot be represented as a rational;
        ``auto`` falls back to floating point silently; ``float`` always
        returns a float.

    Returns
    -------
    Fraction, float or complex

    Raises
    ------
    UnassignedIndexError
        If an abstract index has no value.
    PoleError
        If a coefficient has a pole at ``S``.
    """
    if len(xi) != n:
        raise ValueError(f"xi has length {len(xi)}, expected {n}")
    xi = [as_fraction(x) for x in xi]
    if isinstance(S, (int, str)):
        S = as_fraction(S)
    N = sum(x * x for x in xi)
    total = Fraction(0)
    use_float = mode == "float" or not isinstance(S, Fraction)
    for t in canonicalize(e).terms:
        def conc(i):
            if isinstance(i, str):
                if i not in index_assignment:
                    raise UnassignedIndexError(i)
                i = index_assignment[i]
            if not 1 <= i <= n:
                raise ValueError(f"index {i} outside 1..{n}")
            return i
        xs = [conc(i) for i in t.xi]
        ds = [(conc(a), conc(b)) for a, b in t.deltas]
        if any(a != b for a, b in ds):
            continue
        mono = math.prod((xi[i - 1] for i in xs), start=Fraction(1))
        if mono == 0:
            continue
        x = -2 * S + t.e
        if N == 0:
            if (x.real if isinstance(x, complex) else x) < 0:
                raise ZeroDivisionError("xi = 0 with negative |xi| power")
            if x != 0:
                continue
            normv = Fraction(1)
        else:
            normv = _norm_power(N, x, mode)
        cval = eval_rational(t.coeff, S)
        ct = _ctilde_value(S, t.coeff.c_power, mode)
        total = total + cval * ct * mono * normv
    if use_float and isinstance(total, Fraction):
        return float(total)
    return total


def _assignments(free: Sequence[str], dim: int = 4):
    for vals in itertools.product(range(1, dim + 1), repeat=len(free)):
        yield dict(zip(free, vals))


def _symbolic_value(e: TensorExpr, assignment: Mapping, xi: Sequence[int]) -> dict:
    """Value with ``|xi|^{-2S}`` stripped, grouped by C~ power."""
    N = sum(x * x for x in xi)
    r = math.isqrt(N)
    assert r * r == N
    out: dict = {}
    for t in e.terms:
        get = lambda i: assignment[i] if isinstance(i, str) else i
        if any(get(a) != get(b) for a, b in t.deltas):
            continue
        mono = math.prod(xi[get(i) - 1] for i in t.xi)
        if mono == 0:
            continue
        w = Fraction(mono) * Fraction(r) ** t.e
        k = t.coeff.c_power
        out[k] = out.get(k, RationalInS.const(0, k)) + t.coeff * w
    return {k: v for k, v in out.items() if not v.is_zero()}


def expr_equal(a: TensorExpr, b: TensorExpr, basket=XI_BASKET) -> bool:
    """Decide equality as multilinear forms.

    All abstract indices are run over ``1..4`` and evaluated at every
    vector in ``basket``; at each point the coefficient (a rational
    function of S per power of C~) must agree exactly.
    """
    diff = canonicalize(TensorExpr(a.terms + tuple(
        t.with_coeff(-t.coeff) for t in b.terms)))
    if not diff.terms:
        return True
    free = sorted(set(a.free_indices()) | set(b.free_indices()))
    for asg in _assignments(free):
        for xi in basket:
            if _symbolic_value(diff, asg, xi):
                return False
    return True
