"""Gaussian symbol calculus for the local Hessian term u_s.

The pipeline is

1. Hermite-type polynomials ``P(d^alpha, t, w)`` from the recursion
   ``P(d_j d^alpha) = (d_{w_j} - w_j / 2t) P(d^alpha)``;
2. xi-derivatives of the Gaussian
   ``G = (4 pi)^{-n/2} (u+v)^{-n/2} exp(-|xi|^2 uv/(u+v))``;
3. the sigma terms ``(i xi)^{alpha+gamma} P(d^beta, u, -i d_xi)
   P(d^delta, v, -i d_xi) G`` as linear combinations of
   ``u^p v^q (u+v)^{-r} G`` (a :class:`UVExpr`);
4. the closed-form moment integral over the quadrant, producing a
   :class:`~hesszeta.expr.TensorExpr` with coefficients rational in S
   times ``C(s)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Optional, Sequence

from .expr import MultiIndex, TensorExpr, TensorTerm, canonicalize, _sort_idx, _pair, _ikey
from .gamma_rational import ConstraintError, uv_coefficient
from .rational import Poly, RationalInS, as_fraction

__all__ = [
    "HermiteP",
    "UVTerm",
    "UVExpr",
    "TaylorDatum",
    "ImaginaryResidueError",
    "NonIntegrableError",
    "hermite_P",
    "gaussian_xi_derivative",
    "sigma_term",
    "e_part",
    "uv_integrate",
    "us_term",
    "U_s_ell",
    "taylor_data_from_uv",
    "PATTERNS",
    "theorem2_table",
    "theorem2_reference",
    "check_theorem2",
]


class ImaginaryResidueError(ArithmeticError):
    """An odd power of i survived the assembly of a sigma term."""


class NonIntegrableError(ArithmeticError):
    """A negative power of u or v remained after cancellation."""


def _labels(x) -> tuple:
    """Normalize a derivative specification to a tuple of index labels.

    Accepts a :class:`MultiIndex` (concrete, 1-based), a string such as
    ``"jk"`` (one abstract label per character), a sequence of labels, or
    ``None``/``""`` for the identity.
    """
    if x is None:
        return ()
    if isinstance(x, MultiIndex):
        return x.indices()
    if isinstance(x, str):
        return tuple(x)
    return tuple(x)


def _clean_deltas(deltas) -> Optional[tuple]:
    out = []
    for a, b in deltas:
        if a == b:
            continue
        if isinstance(a, int) and isinstance(b, int):
            return None
        out.append(_pair(a, b))
    return tuple(sorted(out, key=lambda p: (_ikey(p[0]), _ikey(p[1]))))


# --------------------------------------------------------------------------
# Hermite polynomials

@dataclass(frozen=True)
class HermiteP:
    """``sum coeff * t^{t_power} * w_{i1}...w_{im} * delta...``."""

    terms: tuple = ()

    def __iter__(self):
        return iter(self.terms)

    def evaluate(self, t, w: Sequence, assignment=None):
        """Numeric value at concrete ``t`` and vector ``w`` (1-based indices)."""
        assignment = assignment or {}
        get = lambda i: assignment.get(i, i)
        total = 0
        for c, tp, ws, ds in self.terms:
            if any(get(a) != get(b) for a, b in ds):
                continue
            val = c * t ** tp
            for i in ws:
                val = val * w[get(i) - 1]
            total = total + val
        return total


def _merge(items: Iterable, key_len: int) -> tuple:
    acc: dict = {}
    for it in items:
        c, key = it[0], it[1:]
        acc[key] = acc.get(key, 0) + c
    out = [(c,) + k for k, c in acc.items() if c != 0]
    out.sort(key=lambda x: repr(x[1:]))
    return tuple(out)


def hermite_P(alpha) -> HermiteP:
    """``P(d^alpha, t, w) = exp(|w|^2/4t) d_w^alpha exp(-|w|^2/4t)``.

    Parameters
    ----------
    alpha : MultiIndex, str or sequence of labels

    Returns
    -------
    HermiteP
        Terms ``(coeff, t_power, w_indices, delta_pairs)``.
    """
    return _hermite(_labels(alpha))


@lru_cache(maxsize=None)
def _hermite(labels: tuple) -> HermiteP:
    terms = [(Fraction(1), 0, (), ())]
    for j in reversed(labels):
        new = []
        for c, tp, ws, ds in terms:
            # d_{w_j}
            for pos, wi in enumerate(ws):
                rest = ws[:pos] + ws[pos + 1:]
                d2 = _clean_deltas(ds + ((j, wi),))
                if d2 is not None:
                    new.append((c, tp, _sort_idx(rest), d2))
            # - w_j / (2t)
            new.append((-c / 2, tp - 1, _sort_idx(ws + (j,)), ds))
        terms = list(_merge(new, 3))
    return HermiteP(tuple(terms))


# --------------------------------------------------------------------------
# (u, v) expressions

@dataclass(frozen=True)
class UVTerm:
    """``coeff * u^p v^q (u+v)^{-r} * xi-monomial * deltas * G``."""

    coeff: Fraction
    p: int
    q: int
    r: int
    xi: tuple = ()
    deltas: tuple = ()

    def key(self):
        return (self.p, self.q, self.r, self.xi, self.deltas)

    def tensor_key(self):
        return (self.xi, self.deltas)


@dataclass(frozen=True)
class UVExpr:
    terms: tuple = ()

    def __iter__(self):
        return iter(self.terms)

    def __len__(self):
        return len(self.terms)

    def __add__(self, other: "UVExpr") -> "UVExpr":
        return canonicalize_uv(UVExpr(self.terms + other.terms))

    def scale(self, c) -> "UVExpr":
        c = as_fraction(c)
        return canonicalize_uv(UVExpr(tuple(
            UVTerm(t.coeff * c, t.p, t.q, t.r, t.xi, t.deltas) for t in self.terms)))

    def swap_uv(self) -> "UVExpr":
        return canonicalize_uv(UVExpr(tuple(
            UVTerm(t.coeff, t.q, t.p, t.r, t.xi, t.deltas) for t in self.terms)))

    def relabel(self, mapping) -> "UVExpr":
        f = lambda i: mapping.get(i, i)
        out = []
        for t in self.terms:
            ds = _clean_deltas(tuple((f(a), f(b)) for a, b in t.deltas))
            if ds is None:
                continue
            out.append(UVTerm(t.coeff, t.p, t.q, t.r, _sort_idx(f(i) for i in t.xi), ds))
        return canonicalize_uv(UVExpr(tuple(out)))

    def evaluate(self, u, v, xi: Sequence, n: int, assignment=None):
        """Numeric value at concrete (u, v, xi); used by quadrature checks."""
        import math
        assignment = assignment or {}
        get = lambda i: assignment.get(i, i)
        N = sum(float(x) ** 2 for x in xi)
        lam = u * v / (u + v)
        G = (4 * math.pi) ** (-n / 2) * (u + v) ** (-n / 2) * math.exp(-N * lam)
        total = 0.0
        for t in self.terms:
            if any(get(a) != get(b) for a, b in t.deltas):
                continue
            mono = 1.0
            for i in t.xi:
                mono *= float(xi[get(i) - 1])
            total += float(t.coeff) * u ** t.p * v ** t.q * (u + v) ** (-t.r) * mono
        return total * G

    def to_text(self) -> str:
        if not self.terms:
            return "0"
        rows = []
        for t in self.terms:
            fac = [f"xi_{i}" for i in t.xi] + [f"delta_{a}{b}" for a, b in t.deltas]
            rows.append(f"({t.coeff}) u^{t.p} v^{t.q} (u+v)^-{t.r} " + " ".join(fac) + " G")
        return "\n  + ".join(rows)


def _bivar_from_terms(terms, A, B, R) -> dict:
    """Numerator polynomial ``sum c u^{p+A} v^{q+B} (u+v)^{R-r}``."""
    from math import comb
    N: dict = {}
    for t in terms:
        k = R - t.r
        for i in range(k + 1):
            key = (t.p + A + i, t.q + B + k - i)
            N[key] = N.get(key, 0) + t.coeff * comb(k, i)
    return {k: v for k, v in N.items() if v != 0}


def _divide_u_plus_v(N: dict):
    """Exact division of a bivariate polynomial by (u+v), or None."""
    if not N:
        return {}
    # homogeneous components are divided separately
    out: dict = {}
    by_deg: dict = {}
    for (a, b), c in N.items():
        by_deg.setdefault(a + b, {})[a] = c
    for d, comp in by_deg.items():
        # comp: polynomial sum c_a u^a v^{d-a}; divide by (u+v) via x = u/v
        cs = [comp.get(a, Fraction(0)) for a in range(d + 1)]
        quo = [Fraction(0)] * d
        rem = list(cs)
        for a in range(d, 0, -1):
            f = rem[a]
            quo[a - 1] = f
            rem[a] -= f
            rem[a - 1] -= f
        if rem[0] != 0:
            return None
        for a, c in enumerate(quo):
            if c != 0:
                out[(a, d - 1 - a)] = c
    return out


def _combine_negative(terms: list) -> list:
    """Put terms with negative u or v powers over a common denominator."""
    neg = [t for t in terms if t.p < 0 or t.q < 0]
    if not neg:
        return terms
    pos = [t for t in terms if not (t.p < 0 or t.q < 0)]
    A = max(0, -min(t.p for t in neg))
    B = max(0, -min(t.q for t in neg))
    R = max(t.r for t in neg)
    N = _bivar_from_terms(neg, A, B, R)
    while N and A > 0 and all(a > 0 for a, _ in N):
        N = {(a - 1, b): c for (a, b), c in N.items()}
        A -= 1
    while N and B > 0 and all(b > 0 for _, b in N):
        N = {(a, b - 1): c for (a, b), c in N.items()}
        B -= 1
    while N and R > 0:
        d = _divide_u_plus_v(N)
        if d is None:
            break
        N, R = d, R - 1
    if not N:
        return pos
    if A > 0 or B > 0:
        xi, ds = neg[0].xi, neg[0].deltas
        raise NonIntegrableError(
            f"u^-{A} v^-{B} survives in the xi{xi} delta{ds} component")
    xi, ds = neg[0].xi, neg[0].deltas
    return pos + [UVTerm(c, a, b, R, xi, ds) for (a, b), c in N.items()]


def canonicalize_uv(e: UVExpr) -> UVExpr:
    """Merge like terms and clear negative u, v powers per tensor shape."""
    acc: dict = {}
    for t in e.terms:
        ds = _clean_deltas(t.deltas)
        if ds is None or t.coeff == 0:
            continue
        t = UVTerm(as_fraction(t.coeff), t.p, t.q, t.r, _sort_idx(t.xi), ds)
        acc[t.key()] = acc.get(t.key(), 0) + t.coeff
    groups: dict = {}
    for (p, q, r, xi, ds), c in acc.items():
        if c != 0:
            groups.setdefault((xi, ds), []).append(UVTerm(c, p, q, r, xi, ds))
    out = []
    for k in sorted(groups, key=repr):
        out += _combine_negative(groups[k])
    # merge again: combination can create coincident keys
    acc2: dict = {}
    for t in out:
        acc2[t.key()] = acc2.get(t.key(), 0) + t.coeff
    terms = [UVTerm(c, *k) for k, c in acc2.items() if c != 0]
    terms.sort(key=lambda t: (len(t.xi) * -1, repr(t.deltas), repr(t.xi), t.r, t.p, t.q))
    return UVExpr(tuple(terms))


# --------------------------------------------------------------------------
# Gaussian derivatives

@lru_cache(maxsize=None)
def _gauss(labels: tuple) -> tuple:
    """Terms ``(coeff, k, xi, deltas)`` with ``lambda^k``, ``lambda = uv/(u+v)``."""
    terms = [(Fraction(1), 0, (), ())]
    for j in labels:
        new = []
        for c, k, xs, ds in terms:
            for pos, xi_i in enumerate(xs):
                rest = xs[:pos] + xs[pos + 1:]
                d2 = _clean_deltas(ds + ((j, xi_i),))
                if d2 is not None:
                    new.append((c, k, _sort_idx(rest), d2))
            new.append((-2 * c, k + 1, _sort_idx(xs + (j,)), ds))
        terms = list(_merge(new, 3))
    return tuple(terms)


def gaussian_xi_derivative(mu) -> UVExpr:
    """Exact expansion of ``d_xi^mu G`` as a :class:`UVExpr`."""
    return canonicalize_uv(UVExpr(tuple(
        UVTerm(c, k, k, k, xs, ds) for c, k, xs, ds in _gauss(_labels(mu)))))


# --------------------------------------------------------------------------
# sigma terms

def _pp_terms(beta: tuple, delta: tuple):
    """``P(d^beta, u, -i d_xi) P(d^delta, v, -i d_xi) G`` with i-powers."""
    out = []
    for c1, t1, w1, d1 in _hermite(beta):
        for c2, t2, w2, d2 in _hermite(delta):
            ds = _clean_deltas(d1 + d2)
            if ds is None:
                continue
            ipow = 3 * (len(w1) + len(w2))  # (-i)^m = i^{3m}
            for c3, k, xs, d3 in _gauss(_sort_idx(w1 + w2)):
                dd = _clean_deltas(ds + d3)
                if dd is None:
                    continue
                out.append((ipow, UVTerm(c1 * c2 * c3, t1 + k, t2 + k, k, xs, dd)))
    return out


def _resolve_i(items, what: str):
    """Fold i^2 = -1 into coefficients; return (UVExpr, residual i power)."""
    terms, residual = [], None
    for ipow, t in items:
        ipow %= 4
        sign = -1 if ipow >= 2 else 1
        res = ipow % 2
        if residual is None:
            residual = res
        elif residual != res:
            raise ImaginaryResidueError(f"mixed real and imaginary terms in {what}")
        terms.append(UVTerm(sign * t.coeff, t.p, t.q, t.r, t.xi, t.deltas))
    return canonicalize_uv(UVExpr(tuple(terms))), (residual or 0)


def e_part(beta, delta):
    """``P(d^beta, u, -i d_xi) P(d^delta, v, -i d_xi) G``.

    Returns
    -------
    (UVExpr, int)
        Real part and the residual power of i (0 or 1).
    """
    return _resolve_i(_pp_terms(_labels(beta), _labels(delta)), "E-part")


def sigma_term(alpha, beta, gamma, delta) -> UVExpr:
    """``sigma = (i xi)^{alpha+gamma} P(d^beta,u,-i d_xi) P(d^delta,v,-i d_xi) G``.

    Raises
    ------
    ImaginaryResidueError
        If the result is not real (odd total power of i).
    """
    a, b, g, d = (_labels(x) for x in (alpha, beta, gamma, delta))
    return _sigma(a, b, g, d)


@lru_cache(maxsize=None)
def _sigma(a, b, g, d) -> UVExpr:
    outer = a + g
    items = [(ipow + len(outer),
              UVTerm(t.coeff, t.p, t.q, t.r, _sort_idx(t.xi + outer), t.deltas))
             for ipow, t in _pp_terms(b, d)]
    e, residual = _resolve_i(items, "sigma term")
    if residual:
        raise ImaginaryResidueError(
            f"sigma({a},{b},{g},{d}) carries an odd power of i")
    return e


# --------------------------------------------------------------------------
# integration

def uv_integrate(e: UVExpr) -> TensorExpr:
    """Integrate ``(u+v)^s * e`` over the quadrant, normalized by ``1/Gamma(S)``.

    Each term ``u^p v^q (u+v)^{-r} G`` is replaced by
    ``uv_coefficient(p, q, r) * C(s) * |xi|^{n-2s+e}``.  Coefficients of
    the result carry ``c_power = 1``.

    Raises
    ------
    ConstraintError
        If a term has ``r > min(p, q) + 2``.
    """
    terms = []
    for t in e.terms:
        coeff, off = uv_coefficient(t.p, t.q, t.r)
        terms.append(TensorTerm(coeff * RationalInS.const(t.coeff), t.xi, t.deltas, off))
    return canonicalize(TensorExpr(tuple(terms)))


def _strip_c(e: TensorExpr, k: int = 1) -> TensorExpr:
    return canonicalize(TensorExpr(tuple(
        t.with_coeff(t.coeff.with_c_power(t.coeff.c_power - k)) for t in e.terms)))


def us_term(alpha, beta, gamma, delta) -> TensorExpr:
    """``u_s(d^alpha, d^beta, d^gamma, d^delta, x, xi)`` with C(s) factored out."""
    return _strip_c(uv_integrate(sigma_term(alpha, beta, gamma, delta)))


# --------------------------------------------------------------------------
# general expansion term

@dataclass(frozen=True)
class TaylorDatum:
    """One coefficient of the Taylor expansion of the heat kernel product.

    Represents ``value * u^a v^b (u+v)^{-r} xi^nu delta... G`` inside the
    integral; ``r`` defaults to ``ell``.  Values are coefficients with
    respect to ``G`` (the ``(4 pi)^{n/2}`` normalization is absorbed).
    """

    a: int
    b: int
    nu: tuple = ()
    value: object = Fraction(1)
    deltas: tuple = ()
    r: Optional[int] = None

    def __post_init__(self):
        nu = self.nu
        if isinstance(nu, MultiIndex):
            nu = nu.indices()
        elif isinstance(nu, str):
            nu = tuple(nu)
        object.__setattr__(self, "nu", _sort_idx(nu))
        v = self.value
        if not isinstance(v, RationalInS):
            v = RationalInS.const(as_fraction(v))
        object.__setattr__(self, "value", v)


def U_s_ell(data: Sequence[TaylorDatum], ell: int, m: Optional[int] = None) -> TensorExpr:
    """The degree ``n - 2s - 4 - ell`` symbol term from Taylor data.

    Each datum contributes ``value * uv_coefficient(a, b, r) * xi^nu *
    |xi|^{n-2s+e}`` with ``r = ell`` unless given.

    Raises
    ------
    ConstraintError
        On negative ``a``/``b``, inhomogeneous data
        (``a + b - r != (ell + |nu|)/2``), ``|nu| > 2m + ell`` when ``m``
        is given, or ``r > min(a, b) + 2``.
    """
    terms = []
    for d in data:
        r = ell if d.r is None else d.r
        if d.a < 0 or d.b < 0:
            raise ConstraintError(f"negative exponent in datum {d}")
        if 2 * (d.a + d.b - r) != ell + len(d.nu):
            raise ConstraintError(f"datum {d} is not homogeneous of degree -4-{ell}")
        if m is not None and d.r is None and len(d.nu) > 2 * m + ell:
            raise ConstraintError(f"|nu|={len(d.nu)} exceeds 2m+ell")
        coeff, off = uv_coefficient(d.a, d.b, r)
        terms.append(TensorTerm(coeff * d.value, d.nu, d.deltas, off))
    return canonicalize(TensorExpr(tuple(terms)))


def taylor_data_from_uv(e: UVExpr) -> list:
    """Convert a UVExpr into TaylorDatum records (explicit ``r``)."""
    return [TaylorDatum(t.p, t.q, t.xi, t.coeff, t.deltas, t.r) for t in e.terms]


def multiply_xi(e: TensorExpr, labels: Sequence, sign=1) -> TensorExpr:
    labels = tuple(labels)
    return canonicalize(TensorExpr(tuple(
        TensorTerm(t.coeff * RationalInS.const(sign), t.xi + labels, t.deltas, t.e)
        for t in e.terms)))


# --------------------------------------------------------------------------
# the six index patterns of u_s

PATTERNS = {
    "a": ("jk", "", "pq", ""),
    "b": ("j", "k", "pq", ""),
    "c": ("j", "k", "p", "q"),
    "d": ("", "jk", "pq", ""),
    "e": ("", "jk", "p", "q"),
    "f": ("", "jk", "", "pq"),
}


def theorem2_table(parallel: bool = False) -> dict:
    """Generate the six u_s patterns (C(s) factored out)."""
    if parallel:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor() as ex:
            vals = list(ex.map(lambda k: us_term(*PATTERNS[k]), sorted(PATTERNS)))
        return dict(zip(sorted(PATTERNS), vals))
    return {k: us_term(*PATTERNS[k]) for k in sorted(PATTERNS)}


def _P(*cs) -> RationalInS:
    return RationalInS.poly(Poly(cs))


def theorem2_reference() -> dict:
    """Hand-encoded right-hand sides of the six u_s formulas."""
    X4 = ("j", "k", "p", "q")
    T = lambda c, xi=(), ds=(), e=0: TensorTerm(c, xi, ds, e)
    half = Fraction(1, 2)
    ref = {
        "a": [T(_P(-4, 0, 16), X4, (), -4)],
        "b": [T(_P(2, 0, -8), X4, (), -4)],
        "c": [T(_P(-2, 2, 4), X4, (), -4),
              T(_P(1, -2), ("j", "p"), (("k", "q"),), -2)],
        "d": [T(_P(0, -2, 4), X4, (), -4),
              T(_P(-1, 2), ("p", "q"), (("j", "k"),), -2)],
        "e": [T(_P(1, -1, -2), X4, (), -4),
              T(_P(half, -1), ("p", "q"), (("j", "k"),), -2),
              T(_P(-half, 1), ("k", "p"), (("j", "q"),), -2),
              T(_P(-half, 1), ("j", "p"), (("k", "q"),), -2)],
        "f": [T(_P(0, 1, 1), X4, (), -4),
              T(_P(-half, half), ("p", "q"), (("j", "k"),), -2),
              T(_P(-half, half), ("j", "k"), (("p", "q"),), -2),
              T(_P(0, -half), ("k", "q"), (("j", "p"),), -2),
              T(_P(0, -half), ("j", "p"), (("k", "q"),), -2),
              T(_P(0, -half), ("k", "p"), (("j", "q"),), -2),
              T(_P(0, -half), ("j", "q"), (("k", "p"),), -2),
              T(_P(Fraction(1, 4)), (), (("j", "k"), ("p", "q")), 0),
              T(_P(Fraction(1, 4)), (), (("j", "p"), ("k", "q")), 0),
              T(_P(Fraction(1, 4)), (), (("j", "q"), ("k", "p")), 0)],
    }
    return {k: canonicalize(TensorExpr(tuple(v))) for k, v in ref.items()}


def check_theorem2() -> dict:
    """Compare generated and hand-encoded patterns; label -> bool."""
    from .expr import expr_equal
    gen, ref = theorem2_table(), theorem2_reference()
    return {k: expr_equal(gen[k], ref[k]) for k in sorted(PATTERNS)}
