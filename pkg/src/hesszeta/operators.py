"""Linearized Laplace-type operators and assembly of u_s(x, xi).

An :class:`OperatorSpec` stores the coefficient tables of::

    F' = sum_{i,j} sum_{alpha,beta} A^{ij}_{alpha beta} (d^alpha h_ij) d^beta

at a point where the background metric is flat and the coordinates are
orthonormal.  Sums run over ordered pairs ``(i, j)``; tables are kept
symmetric in ``(i, j)``.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import product
from typing import Mapping, Optional

import mpmath
import numpy as np

from .expr import MultiIndex, instantiate
from .gamma_rational import C_of_s, PoleError, in_pole_lattice
from .heat_symbol import us_term
from .rational import as_fraction

__all__ = [
    "OperatorSpec",
    "PerturbationDirection",
    "SpecParseError",
    "mu_of_n",
    "linearize_scalar_family",
    "assemble_us",
    "load_operator_spec",
    "save_operator_spec",
    "multi_indices",
    "laplacian_at_origin",
    "scalar_curvature_at_origin",
    "fd_linearization_check",
]


class SpecParseError(ValueError):
    """Malformed operator-spec file."""


def multi_indices(n: int, max_order: int):
    """All multi-indices of length ``n`` with order ``<= max_order``."""
    out = []
    for ent in product(range(max_order + 1), repeat=n):
        if sum(ent) <= max_order:
            out.append(tuple(ent))
    out.sort(key=lambda e: (sum(e), tuple(-x for x in e)))
    return out


def _mat(x, N: int) -> tuple:
    """Coerce a scalar or nested list to an N x N tuple of Fractions."""
    if isinstance(x, (int, Fraction, str)):
        v = as_fraction(x)
        return tuple(tuple(v if a == b else Fraction(0) for b in range(N)) for a in range(N))
    rows = tuple(tuple(as_fraction(y) for y in row) for row in x)
    if len(rows) != N or any(len(r) != N for r in rows):
        raise ValueError(f"matrix is not {N}x{N}")
    return rows


def _madd(a, b):
    return tuple(tuple(x + y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def _mscale(a, c):
    return tuple(tuple(x * c for x in r) for r in a)


def _is_zero(a):
    return all(x == 0 for r in a for x in r)


@dataclass
class OperatorSpec:
    """Coefficient tables of a linearized Laplace-type operator.

    Attributes
    ----------
    n : int
        Dimension.
    N : int
        Bundle rank.
    V : Fraction
        Volume entering the ``V^{(2s-n)/n}`` prefactor.
    v_factor : bool
        Whether the scale-invariance factor is applied.
    entries : dict
        ``(i, j, alpha, beta) -> N x N`` tuple-matrix of Fractions, with
        1-based ``i, j`` and multi-indices as tuples.
    """

    n: int
    N: int = 1
    V: Fraction = Fraction(1)
    v_factor: bool = True
    entries: dict = field(default_factory=dict)

    def add(self, i: int, j: int, alpha, beta, value):
        alpha, beta = tuple(alpha), tuple(beta)
        if sum(alpha) + sum(beta) > 2:
            raise ValueError("|alpha|+|beta| must be <= 2")
        if len(alpha) != self.n or len(beta) != self.n:
            raise ValueError("multi-index length differs from n")
        if not (1 <= i <= self.n and 1 <= j <= self.n):
            raise ValueError(f"index pair ({i},{j}) outside 1..{self.n}")
        key = (i, j, alpha, beta)
        m = _mat(value, self.N)
        self.entries[key] = _madd(self.entries[key], m) if key in self.entries else m
        if _is_zero(self.entries[key]):
            del self.entries[key]

    def symmetrized(self) -> "OperatorSpec":
        out = OperatorSpec(self.n, self.N, self.V, self.v_factor)
        for (i, j, a, b), m in self.entries.items():
            out.add(i, j, a, b, _mscale(m, Fraction(1, 2)))
            out.add(j, i, a, b, _mscale(m, Fraction(1, 2)))
        return out

    def is_symmetric(self) -> bool:
        for (i, j, a, b), m in self.entries.items():
            if self.entries.get((j, i, a, b)) != m:
                return False
        return True

    def principal(self) -> dict:
        """Entries with ``|alpha| + |beta| = 2``."""
        return {k: v for k, v in self.entries.items() if sum(k[2]) + sum(k[3]) == 2}

    def negated(self) -> "OperatorSpec":
        out = OperatorSpec(self.n, self.N, self.V, self.v_factor)
        out.entries = {k: _mscale(v, -1) for k, v in self.entries.items()}
        return out

    def __eq__(self, other):
        return (isinstance(other, OperatorSpec) and self.n == other.n and self.N == other.N
                and self.V == other.V and self.v_factor == other.v_factor
                and self.entries == other.entries)

    def entry(self, i, j, alpha, beta) -> Fraction:
        """Scalar entry (N = 1) or the (1,1) component."""
        m = self.entries.get((i, j, tuple(alpha), tuple(beta)))
        return m[0][0] if m else Fraction(0)

    # serialization
    def to_json(self) -> dict:
        def frac(x):
            return [x.numerator, x.denominator]
        ents = []
        for (i, j, a, b) in sorted(self.entries):
            m = self.entries[(i, j, a, b)]
            ents.append({"i": i, "j": j, "alpha": list(a), "beta": list(b),
                         "matrix": [[frac(x) for x in row] for row in m]})
        return {"n": self.n, "N": self.N, "V": frac(as_fraction(self.V)),
                "v_factor_flag": self.v_factor, "entries": ents}


@dataclass(frozen=True)
class PerturbationDirection:
    """Symmetric polarization ``e`` of a metric perturbation."""

    e: tuple
    trace_free: bool = False

    def __post_init__(self):
        m = tuple(tuple(as_fraction(x) for x in row) for row in self.e)
        n = len(m)
        if any(len(r) != n for r in m):
            raise ValueError("polarization must be square")
        for a in range(n):
            for b in range(n):
                if m[a][b] != m[b][a]:
                    raise ValueError("polarization must be symmetric")
        if self.trace_free and sum(m[a][a] for a in range(n)) != 0:
            raise ValueError("polarization flagged trace-free has nonzero trace")
        object.__setattr__(self, "e", m)

    @property
    def n(self):
        return len(self.e)

    def array(self) -> np.ndarray:
        return np.array([[float(x) for x in r] for r in self.e])


def mu_of_n(n: int) -> Fraction:
    """``mu = (n-2)/(4(n-1))``; set to 0 for n = 1 where R vanishes."""
    if n == 1:
        return Fraction(0)
    return Fraction(n - 2, 4 * (n - 1))


def _unit(n, *idx):
    e = [0] * n
    for i in idx:
        e[i - 1] += 1
    return tuple(e)


def linearize_scalar_family(n: int, c1=0, c2=0, V=1, v_factor: bool = True) -> OperatorSpec:
    """Coefficient tables of ``F'`` for ``F = V^{2/n}(Delta + c1 mu R) + c2``.

    Linearized at the flat metric in orthonormal coordinates, with
    ``Delta`` the positive Laplace-Beltrami operator.  The ``V^{2/n}``
    factor is excluded from the tables (it enters through the prefactor
    of :func:`assemble_us`); ``c2`` is constant and contributes nothing.
    """
    c1 = as_fraction(c1)
    spec = OperatorSpec(n, 1, as_fraction(V), v_factor)
    z = (0,) * n
    half = Fraction(1, 2)
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            # h_ij d_i d_j
            spec.add(i, j, z, _unit(n, i, j), 1)
            # (d_i h_ij) d_j, symmetrized over (i, j)
            spec.add(i, j, _unit(n, i), _unit(n, j), half)
            spec.add(j, i, _unit(n, i), _unit(n, j), half)
    for k in range(1, n + 1):
        for j in range(1, n + 1):
            spec.add(k, k, _unit(n, j), _unit(n, j), -half)
    if c1 != 0 and n > 1:
        m = c1 * mu_of_n(n)
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                spec.add(i, j, _unit(n, i, j), z, m)
        for k in range(1, n + 1):
            for j in range(1, n + 1):
                spec.add(k, k, _unit(n, j, j), z, -m)
    return spec


# --------------------------------------------------------------------------
# assembly

_SLOT = ("a", "b", "c", "d")


@lru_cache(maxsize=None)
def _shape_term(shape: tuple):
    labels = [tuple(f"{_SLOT[k]}{m}" for m in range(shape[k])) for k in range(4)]
    return us_term(*labels), labels


def us_value(alpha, beta, gamma, delta, xi, S, mode: str = "auto"):
    """``u_s(d^alpha, d^beta, d^gamma, d^delta, x, xi)`` at concrete multi-indices."""
    mis = [MultiIndex(tuple(x)) for x in (alpha, beta, gamma, delta)]
    shape = tuple(m.order for m in mis)
    expr, labels = _shape_term(shape)
    asg = {}
    for lab, mi in zip(labels, mis):
        asg.update(dict(zip(lab, mi.indices())))
    return instantiate(expr, len(xi), asg, xi, S, mode=mode)


def _to_S(s, n):
    if isinstance(s, (int, Fraction, str)):
        return as_fraction(s) - Fraction(n, 2)
    return s - n / 2


def assemble_us(spec: OperatorSpec, s, xi, h) -> np.ndarray:
    """The matrix ``(u_s(x, xi) h)_{ij}``.

    Parameters
    ----------
    spec : OperatorSpec
    s : rational, float or complex
    xi : sequence
        Nonzero covector.
    h : PerturbationDirection or array-like
        Symmetric polarization ``h_{kl}``.

    Returns
    -------
    numpy.ndarray
        ``n x n``, real when ``s`` is real.

    Raises
    ------
    PoleError
        If ``s`` lies in ``n/2 + {1, 2, ...}``.
    ValueError
        If ``xi = 0``.
    """
    n = spec.n
    if isinstance(h, PerturbationDirection):
        H = h.e
    else:
        H = tuple(tuple(as_fraction(x) if not isinstance(x, float) else x for x in r) for r in h)
    if len(xi) != n or all(float(x) == 0 for x in xi):
        raise ValueError("xi must be a nonzero vector of length n")
    if spec.N > 1:
        warnings.warn("N > 1: trace contraction order is not pinned down; result is experimental")
    S = _to_S(s, n)
    if isinstance(s, (int, Fraction, str)) and in_pole_lattice(s, n):
        raise PoleError(f"s={s} lies in the pole set n/2 + N+")
    if not isinstance(s, (int, Fraction, str)):
        sr = complex(s)
        if abs(sr.imag) < 1e-14 and abs(sr.real - n / 2 - round(sr.real - n / 2)) < 1e-14 \
                and round(sr.real - n / 2) >= 1:
            raise PoleError(f"s={s} lies in the pole set n/2 + N+")
    C = C_of_s(n, s)
    pref = complex(C)
    if spec.v_factor:
        Vm = mpmath.mpf(as_fraction(spec.V).numerator) / as_fraction(spec.V).denominator
        sc = mpmath.mpmathify(complex(s) if isinstance(s, complex) else
                              (float(as_fraction(s)) if isinstance(s, (int, Fraction, str)) else s))
        pref *= complex(mpmath.power(Vm, (2 * sc - n) / n))
    P = spec.principal()
    # group by (i, j)
    out = np.zeros((n, n), dtype=complex)
    items = list(P.items())
    cache: dict = {}
    for (i, j, a, b), A1 in items:
        acc = 0j
        for (k, l, c, d), A2 in items:
            hk = H[k - 1][l - 1]
            if hk == 0:
                continue
            tr = sum(A1[x][y] * A2[y][x] for x in range(spec.N) for y in range(spec.N))
            if tr == 0:
                continue
            key = (a, b, c, d)
            if key not in cache:
                cache[key] = us_value(a, b, c, d, xi, S)
            acc += complex(cache[key]) * float(tr) * complex(hk)
        out[i - 1, j - 1] += acc
    out *= pref
    if isinstance(s, complex) and abs(complex(s).imag) > 0:
        return out
    return out.real


# --------------------------------------------------------------------------
# file io

def _pair_frac(x, where: str) -> Fraction:
    if isinstance(x, list) and len(x) == 2 and all(isinstance(y, int) for y in x):
        if x[1] == 0:
            raise SpecParseError(f"{where}: zero denominator")
        return Fraction(x[0], x[1])
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        try:
            return Fraction(x)
        except ValueError:
            pass
    raise SpecParseError(f"{where}: expected [numerator, denominator], got {x!r}")


def load_operator_spec(path_or_dict) -> OperatorSpec:
    """Read and validate an operator-spec JSON file.

    Asymmetric tables are symmetrized with a warning.

    Raises
    ------
    SpecParseError
        With a field path (and line number for JSON syntax errors).
    """
    if isinstance(path_or_dict, dict):
        d = path_or_dict
    else:
        text = open(path_or_dict).read()
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecParseError(f"line {exc.lineno}: {exc.msg}") from exc
    for key in ("n", "N", "V", "v_factor_flag", "entries"):
        if key not in d:
            raise SpecParseError(f"missing field '{key}'")
    n, N = d["n"], d["N"]
    if not isinstance(n, int) or n < 1:
        raise SpecParseError("n: expected a positive integer")
    if not isinstance(N, int) or N < 1:
        raise SpecParseError("N: expected a positive integer")
    if not isinstance(d["v_factor_flag"], bool):
        raise SpecParseError("v_factor_flag: expected a boolean")
    spec = OperatorSpec(n, N, _pair_frac(d["V"], "V"), d["v_factor_flag"])
    for k, ent in enumerate(d["entries"]):
        where = f"entries[{k}]"
        for key in ("i", "j", "alpha", "beta", "matrix"):
            if key not in ent:
                raise SpecParseError(f"{where}: missing field '{key}'")
        a, b = ent["alpha"], ent["beta"]
        if len(a) != n or len(b) != n or any((not isinstance(x, int)) or x < 0 for x in a + b):
            raise SpecParseError(f"{where}.alpha/beta: expected {n} non-negative integers")
        if sum(a) + sum(b) > 2:
            raise SpecParseError(f"{where}: |alpha|+|beta| = {sum(a) + sum(b)} exceeds 2")
        m = ent["matrix"]
        if len(m) != N or any(len(r) != N for r in m):
            raise SpecParseError(f"{where}.matrix: expected {N}x{N}")
        mat = [[_pair_frac(x, f"{where}.matrix[{r}][{c}]") for c, x in enumerate(row)]
               for r, row in enumerate(m)]
        try:
            spec.add(ent["i"], ent["j"], a, b, mat)
        except ValueError as exc:
            raise SpecParseError(f"{where}: {exc}") from exc
    if not spec.is_symmetric():
        warnings.warn("operator tables are not symmetric in (i, j); symmetrizing")
        spec = spec.symmetrized()
    return spec


def save_operator_spec(spec: OperatorSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(spec.to_json(), fh, indent=1)


# --------------------------------------------------------------------------
# finite-difference linearization oracle (numeric jets at the origin)

def _christoffel(g0, g1):
    """Gamma^k_ij at 0 from g(0) and first derivatives g1[m,a,b] = d_m g_ab."""
    gi = np.linalg.inv(g0)
    # lower: Gamma_{l,ij} = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    low = 0.5 * (np.einsum("ijl->lij", g1) + np.einsum("jil->lij", g1) - np.einsum("lij->lij", g1))
    return np.einsum("kl,lij->kij", gi, low), gi


def laplacian_at_origin(g0, g1, f1, f2) -> float:
    """Positive Laplace-Beltrami operator at 0 from metric and function jets."""
    Gam, gi = _christoffel(g0, g1)
    return float(-np.einsum("ij,ij->", gi, f2 - np.einsum("kij,k->ij", Gam, f1)))


def scalar_curvature_at_origin(g0, g1, g2) -> float:
    """Scalar curvature at 0 from jets ``g2[m,p,a,b] = d_m d_p g_ab``."""
    Gam, gi = _christoffel(g0, g1)
    # d_m g^{kl}
    dgi = -np.einsum("ka,mab,bl->mkl", gi, g1, gi)
    low = 0.5 * (np.einsum("ijl->lij", g1) + np.einsum("jil->lij", g1) - np.einsum("lij->lij", g1))
    dlow = 0.5 * (np.einsum("mijl->mlij", g2) + np.einsum("mjil->mlij", g2)
                  - np.einsum("mlij->mlij", g2))
    dGam = np.einsum("mkl,lij->mkij", dgi, low) + np.einsum("kl,mlij->mkij", gi, dlow)
    ric = (np.einsum("kkij->ij", dGam) - np.einsum("jkik->ij", dGam)
           + np.einsum("kkl,lij->ij", Gam, Gam) - np.einsum("kjl,lik->ij", Gam, Gam))
    return float(np.einsum("ij,ij->", gi, ric))


def _apply_F(n, c1, g0, g1, g2, f0, f1, f2):
    val = laplacian_at_origin(g0, g1, f1, f2)
    if c1:
        val += float(c1 * mu_of_n(n)) * scalar_curvature_at_origin(g0, g1, g2) * f0
    return val


def _spec_action(spec: OperatorSpec, h0, h1, h2, f0, f1, f2) -> float:
    """``F' f (0) = sum A (d^alpha h_ij)(0) (d^beta f)(0)`` from jets."""
    def jet(arr0, arr1, arr2, mi, *idx):
        order = sum(mi)
        pos = [k for k, e in enumerate(mi) for _ in range(e)]
        if order == 0:
            return arr0[idx] if idx else arr0
        if order == 1:
            return arr1[(pos[0],) + idx]
        return arr2[(pos[0], pos[1]) + idx]
    total = 0.0
    for (i, j, a, b), m in spec.entries.items():
        dh = jet(h0, h1, h2, a, i - 1, j - 1)
        df = jet(f0, f1, f2, b)
        total += float(m[0][0]) * dh * df
    return total


def fd_linearization_check(n: int, c1=0, n_probes: int = 20, sigma: float = 1e-5,
                           seed: int = 0) -> dict:
    """Compare ``linearize_scalar_family`` against finite differences.

    Two probe families are used:

    * monomial probes ``h = sym(E_ij) x^alpha / alpha!``, ``f = x^beta / beta!``
      isolating each table entry;
    * ``n_probes`` random quadratic jets for ``h`` and ``f``.

    Returns
    -------
    dict
        ``entry_max_err``, ``probe_max_err`` and the list of entry errors.
    """
    spec = linearize_scalar_family(n, c1, 0)
    eye = np.eye(n)

    def F_at(sig, h0, h1, h2, f0, f1, f2):
        return _apply_F(n, c1, eye + sig * h0, sig * h1, sig * h2, f0, f1, f2)

    def fd(h0, h1, h2, f0, f1, f2):
        return (F_at(sigma, h0, h1, h2, f0, f1, f2)
                - F_at(-sigma, h0, h1, h2, f0, f1, f2)) / (2 * sigma)

    def mono_jets(mi):
        a0, a1, a2 = 0.0, np.zeros(n), np.zeros((n, n))
        pos = [k for k, e in enumerate(mi) for _ in range(e)]
        if len(pos) == 0:
            a0 = 1.0
        elif len(pos) == 1:
            a1[pos[0]] = 1.0
        else:
            a2[pos[0], pos[1]] = 1.0
            a2[pos[1], pos[0]] = 1.0
            if pos[0] == pos[1]:
                a2[pos[0], pos[0]] = 1.0
        return a0, a1, a2

    entry_errs = []
    mis = multi_indices(n, 2)
    for i in range(1, n + 1):
        for j in range(i, n + 1):
            E = np.zeros((n, n))
            E[i - 1, j - 1] = E[j - 1, i - 1] = 1.0
            mult = 1.0 if i == j else 2.0
            for a in mis:
                for b in mis:
                    if sum(a) + sum(b) > 2:
                        continue
                    s0, s1, s2 = mono_jets(a)
                    h0 = s0 * E
                    h1 = np.einsum("m,ab->mab", s1, E)
                    h2 = np.einsum("mp,ab->mpab", s2, E)
                    f0, f1, f2 = mono_jets(b)
                    got = fd(h0, h1, h2, f0, f1, f2) / mult
                    want = float(spec.entry(i, j, a, b))
                    entry_errs.append(((i, j, a, b), want, got, abs(got - want)))
    rng = np.random.default_rng(seed)
    probe_errs = []
    for _ in range(n_probes):
        h0 = rng.normal(size=(n, n)); h0 = h0 + h0.T
        h1 = rng.normal(size=(n, n, n)); h1 = h1 + h1.transpose(0, 2, 1)
        h2 = rng.normal(size=(n, n, n, n))
        h2 = h2 + h2.transpose(1, 0, 2, 3); h2 = h2 + h2.transpose(0, 1, 3, 2)
        f0 = rng.normal(); f1 = rng.normal(size=n)
        f2 = rng.normal(size=(n, n)); f2 = f2 + f2.T
        got = fd(h0, h1, h2, f0, f1, f2)
        want = _spec_action(spec, h0, h1, h2, f0, f1, f2)
        probe_errs.append(abs(got - want))
    return {"entry_max_err": max(e[-1] for e in entry_errs),
            "probe_max_err": max(probe_errs),
            "entries": entry_errs}
