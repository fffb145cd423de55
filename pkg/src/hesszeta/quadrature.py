"""High-precision checks of the scalar integral identities.

All integrals are computed with mpmath (tanh-sinh / Gauss-Legendre
panels).  Mellin-type integrals ``int_0^inf T^a f(T) dT`` outside their
strip of absolute convergence are continued by subtracting the known
Taylor terms at ``T = 0`` and asymptotic terms at ``T = inf``.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import mpmath

from .gamma_rational import uv_coefficient
from .rational import eval_rational

__all__ = [
    "DivergenceError",
    "tau_integral",
    "tau_integral_closed",
    "tau_expansion",
    "tau_expansion_fit",
    "mellin_continued",
    "check_eq_1_20",
    "eq_1_20_grid",
    "SplitInput",
    "lemma65_split",
    "uv_truncated_vs_full",
    "uv_full_quadrature",
    "remainder_exponent_fit",
    "pattern_quadrature_check",
    "convergence_table",
]


class DivergenceError(ValueError):
    """Parameters outside the region where the integral is defined."""


def _mp(x):
    return mpmath.mpmathify(x)


# --------------------------------------------------------------------------
# the tau integral

def tau_integral(T, dps: int = 30):
    """``int_0^1 exp(-T tau (1 - tau)) dtau`` by adaptive quadrature.

    The integrand is symmetric about 1/2 and has boundary layers of width
    ``1/T`` at both ends, so the half interval is split at ``4^j / T``.
    """
    with mpmath.workdps(dps + 5):
        T = _mp(T)
        if T < 0:
            raise ValueError("T must be non-negative")
        if T == 0:
            return mpmath.mpf(1)
        pts = [mpmath.mpf(0)]
        b = 1 / T
        while b < mpmath.mpf(1) / 2:
            pts.append(b)
            b *= 4
        pts.append(mpmath.mpf(1) / 2)
        val = 2 * mpmath.quad(lambda t: mpmath.exp(-T * t * (1 - t)), pts)
        return +val


def tau_integral_closed(T, dps: int = 30):
    """Closed form ``2 D(sqrt(T)/2) / sqrt(T)`` with D the Dawson function."""
    with mpmath.workdps(dps + 10):
        T = _mp(T)
        if abs(T) < mpmath.mpf("1e-3"):
            # Taylor series sum_j (-T)^j j! / (2j+1)!
            return mpmath.fsum((-T) ** j * mpmath.factorial(j) / mpmath.factorial(2 * j + 1)
                               for j in range(30))
        x = mpmath.sqrt(T) / 2
        D = mpmath.sqrt(mpmath.pi) / 2 * mpmath.exp(-x * x) * mpmath.erfi(x)
        return +(2 * D / mpmath.sqrt(T))


def tau_taylor(order: int) -> list:
    """Taylor coefficients at ``T = 0``: ``(-1)^j j! / (2j+1)!``."""
    return [mpmath.mpf((-1) ** j * math.factorial(j)) / math.factorial(2 * j + 1)
            for j in range(order)]


def tau_expansion(order: int) -> list:
    """Exact large-T coefficients ``C_1, ..., C_order`` of the tau integral.

    With ``kappa = tau (1 - tau)`` the integral becomes
    ``2 int_0^{1/4} exp(-T kappa) (1 - 4 kappa)^{-1/2} dkappa``; Watson's
    lemma gives ``C_k = 2 binom(2k-2, k-1) (k-1)!``.
    """
    return [2 * math.comb(2 * k - 2, k - 1) * math.factorial(k - 1) for k in range(1, order + 1)]


def tau_expansion_fit(order: int = 5, Ts: Optional[Sequence] = None, dps: int = 40) -> dict:
    """Fit ``sum_k c_k T^{-k}`` to quadrature values of the tau integral.

    Returns
    -------
    dict
        ``coeffs`` (c_1..c_order), ``cond`` (condition number of the
        scaled design matrix) and ``residual``.
    """
    with mpmath.workdps(dps):
        if Ts is None:
            Ts = [mpmath.mpf(10) ** (3 + mpmath.mpf(j) / 4) for j in range(13)]
        ys = [tau_integral(T, dps) for T in Ts]
        return _linear_fit([[mpmath.mpf(T) ** (-k) for k in range(1, order + 1)] for T in Ts], ys)


def _linear_fit(rows, ys) -> dict:
    A = mpmath.matrix(rows)
    y = mpmath.matrix(list(ys))
    scl = [mpmath.sqrt(mpmath.fsum(A[i, c] ** 2 for i in range(A.rows))) or 1 for c in range(A.cols)]
    As = mpmath.matrix(A.rows, A.cols)
    for i in range(A.rows):
        for c in range(A.cols):
            As[i, c] = A[i, c] / scl[c]
    x, res = mpmath.qr_solve(As, y)
    sv = mpmath.svd_r(As, compute_uv=False)
    cond = max(sv) / min(sv)
    return {"coeffs": [x[c] / scl[c] for c in range(A.cols)], "cond": cond, "residual": res}


# --------------------------------------------------------------------------
# Mellin continuation

def mellin_continued(f: Callable, a, small: Sequence = (), large: Sequence = (),
                     T1=None, dps: int = 30):
    """Continued ``int_0^inf T^a f(T) dT``.

    Parameters
    ----------
    f : callable
        mpmath-compatible function.
    small : sequence
        Taylor coefficients ``f(T) = sum_j small[j] T^j`` at 0; terms with
        ``Re(a) + j + 1 <= 0`` are subtracted on ``[0, 1]``.
    large : sequence
        Asymptotic coefficients ``f(T) ~ sum_l large[l-1] T^{-l}``.
    T1 : number, optional
        Beyond ``T1`` the asymptotic series replaces ``f`` (use when it
        is exponentially accurate there).  Otherwise terms with
        ``Re(a) - l + 1 >= 0`` are subtracted on ``[1, inf)``.

    Raises
    ------
    DivergenceError
        If the integral diverges and the needed Taylor or asymptotic data
        are not supplied.
    """
    with mpmath.workdps(dps + 10):
        a = _mp(a)
        ar = mpmath.re(a)
        J = 0
        while ar + J + 1 <= 0:
            J += 1
        if J > len(small):
            raise DivergenceError(f"need {J} Taylor terms at T = 0, got {len(small)}")
        for j in range(J):
            if abs(a + j + 1) < mpmath.mpf(10) ** (-dps):
                raise DivergenceError("Mellin integral has a pole here")
        # extra subtractions smooth the endpoint behaviour
        J = min(len(small), J + 3)
        sub0 = lambda T: mpmath.fsum(small[j] * T ** j for j in range(J))
        # near 0 the cancellation in f - sub0 is amplified by T^a, so the
        # remaining Taylor terms are integrated in closed form on [0, eps]
        eps = mpmath.mpf("1e-3") if len(small) > J else mpmath.mpf(0)
        lo = mpmath.quad(lambda T: T ** a * (f(T) - sub0(T)),
                         [eps, mpmath.mpf(1) / 16, mpmath.mpf(1) / 4, 1])
        lo += mpmath.fsum(small[j] * eps ** (a + j + 1) / (a + j + 1) for j in range(J, len(small)))
        lo += mpmath.fsum(small[j] / (a + j + 1) for j in range(J))
        if T1 is not None:
            T1 = _mp(T1)
            pts = [1]
            while pts[-1] * 4 < T1:
                pts.append(pts[-1] * 4)
            pts.append(T1)
            mid = mpmath.quad(lambda T: T ** a * f(T), pts)
            tail = mpmath.fsum(c * T1 ** (a - l + 1) / (l - a - 1) for l, c in enumerate(large, 1))
            return +(lo + mid + tail)
        L = 0
        while L < len(large) and ar - (L + 1) + 1 >= 0:
            L += 1
        if ar - (L + 1) + 1 >= 0:
            raise DivergenceError("need more asymptotic terms at T = inf")
        sub1 = lambda T: mpmath.fsum(large[l - 1] * T ** (-l) for l in range(1, L + 1))
        hi = mpmath.quad(lambda T: T ** a * (f(T) - sub1(T)), [1, 4, 16, 64, 256, mpmath.inf])
        hi += mpmath.fsum(large[l - 1] / (l - a - 1) for l in range(1, L + 1))
        return +(lo + hi)


def _mellin_tau(a, dps: int = 30):
    """Continued ``int_0^inf T^a Q(T) dT`` for the tau integral ``Q``."""
    return mellin_continued(lambda T: tau_integral_closed(T, dps), a,
                            small=tau_taylor(16), large=tau_expansion(20), T1=200, dps=dps)


# --------------------------------------------------------------------------
# the Gamma-integral identity

def check_eq_1_20(n: int, s, continuation: bool = False, dps: int = 30) -> dict:
    """Quadrature vs closed form for the normalized tau/T double integral.

    ``lhs = (1/Gamma(S)) int_0^inf T^{S+1} int_0^1 exp(-T tau(1-tau)) dtau dT``
    and ``rhs = Gamma(-S-1) Gamma(-S+1) / Gamma(-2S-2)`` with ``S = s - n/2``.

    Parameters
    ----------
    continuation : bool
        Allow parameters with ``n/2 - Re s - 1 <= 0`` (evaluated by
        analytic continuation of the T integral).

    Raises
    ------
    DivergenceError
        Outside the strip ``n/2 - Re s - 1 > 0`` unless ``continuation``.
    """
    t = time.perf_counter()
    with mpmath.workdps(dps + 10):
        s = _mp(s)
        S = s - mpmath.mpf(n) / 2
        if mpmath.re(-S - 1) <= 0 and not continuation:
            raise DivergenceError(f"n/2 - Re s - 1 = {mpmath.nstr(mpmath.re(-S - 1), 6)} is not positive")
        lhs = _mellin_tau(S + 1, dps) * mpmath.rgamma(S)
        rhs = mpmath.gamma(-S - 1) * mpmath.gamma(-S + 1) * mpmath.rgamma(-2 * S - 2)
        err = abs(lhs - rhs) / abs(rhs)
    return {"n": n, "s": s, "lhs": lhs, "rhs": rhs, "rel_error": err,
            "runtime": time.perf_counter() - t}


def eq_1_20_grid(ns=(1, 2, 3, 4, 5), offsets=None, dps: int = 30) -> list:
    """The 5 x 5 grid with ``n/2 - s - 1`` spread over ``[0.2, 1.9]``."""
    if offsets is None:
        offsets = [mpmath.mpf("0.2") + j * (mpmath.mpf("1.7") / 4) for j in range(5)]
    out = []
    for n in ns:
        for d in offsets:
            s = mpmath.mpf(n) / 2 - 1 - d
            out.append(check_eq_1_20(n, s, dps=dps))
    return out


# --------------------------------------------------------------------------
# U / V split

@dataclass
class SplitInput:
    """A kernel ``Q(t, T)``, smooth on ``[0, 1] x [0, inf)`` and decaying in T.

    ``Q`` must accept mpmath arguments and be defined for small negative
    ``t`` (one-sided differences are used, but mpmath may probe slightly
    outside).
    """

    Q: Callable
    n: int
    s: object

    def check_decay(self, C: float = 10.0, samples: int = 20) -> bool:
        """Sample ``|Q(t, T)| (1 + T) <= C``."""
        for i in range(samples):
            t = mpmath.mpf(i) / (samples - 1)
            for T in (0, 1, 10, 100, 1000, 10000):
                if abs(self.Q(t, mpmath.mpf(T))) * (1 + T) > C:
                    return False
        return True


def _t_taylor(Q, T, k_max):
    return mpmath.taylor(lambda t: Q(t, T), 0, k_max, direction=1)


def _large_fit(f, L, Ts):
    fit = _linear_fit([[T ** (-l) for l in range(1, L + 1)] for T in Ts], [f(T) for T in Ts])
    return fit["coeffs"], fit["residual"]


def lemma65_split(inp: SplitInput, k_max: int = 2, l_max: int = 2, L: int = 8,
                  dps: int = 30) -> dict:
    """Estimate the coefficients of the U- and V-type expansions.

    ``sigma(xi) = int_0^1 t^S Q(t, |xi|^2 t) dt`` has the expansion
    ``sum_k u_k |xi|^{n-2s-2-2k} + sum_l v_l |xi|^{-2-2l}`` with
    ``u_k = int_0^inf T^{S+k} q_k(T) dT`` (``q_k`` the t-Taylor
    coefficients of Q) and ``v_l = int_0^1 t^{S-l-1} q^l(t) dt``
    (``q^l`` the coefficient of ``T^{-l-1}`` as ``T -> inf``).  Both are
    continued by subtraction where they diverge.

    Returns
    -------
    dict
        ``u``, ``v`` (lists), ``u_err``, ``v_err`` (fit residual based
        error bars).
    """
    with mpmath.workdps(dps + 10):
        s = _mp(inp.s)
        S = s - mpmath.mpf(inp.n) / 2
        Q = inp.Q
        Ts = [mpmath.mpf(10) ** (mpmath.mpf(5) / 2 + mpmath.mpf(j) / 4) for j in range(12)]
        # q_k(T) and their large-T coefficients c[k][l]
        qk = lambda k: (lambda T: _t_taylor(Q, T, k)[k])
        c, res_k = [], []
        for k in range(k_max + 1):
            co, r = _large_fit(qk(k), L, Ts)
            c.append(co)
            res_k.append(r)
        u, u_err = [], []
        for k in range(k_max + 1):
            f = qk(k)
            J = max(0, int(mpmath.ceil(-mpmath.re(S + k) - 1)) + 1)
            small = mpmath.taylor(f, 0, J, direction=1) if J else []
            large = [x if abs(x) > res_k[k] * 10 else mpmath.mpf(0) for x in c[k]]
            u.append(mellin_continued(f, S + k, small=small, large=large, T1=Ts[-1], dps=dps))
            u_err.append(res_k[k] * Ts[-1] ** (mpmath.re(S) + k))
        v, v_err = [], []
        for l in range(l_max + 1):
            def ql(t, l=l):
                co, _ = _large_fit(lambda T: Q(t, T), L, Ts)
                return co[l] if l < L else mpmath.mpf(0)
            K0 = 0
            while mpmath.re(S) - l + K0 <= 0 and K0 <= k_max:
                K0 += 1
            sub = lambda t: mpmath.fsum(c[k][l] * t ** k for k in range(K0))
            val = mpmath.quad(lambda t: t ** (S - l - 1) * (ql(t) - sub(t)), [0, mpmath.mpf(1) / 4, 1],
                              method="gauss-legendre")
            val += mpmath.fsum(c[k][l] / (S - l + k) for k in range(K0))
            v.append(val)
            v_err.append(max(res_k) * 10)
        if max(res_k) > mpmath.mpf("1e-6"):
            warnings.warn("large-T fit of the Taylor coefficients is unstable")
        return {"S": S, "u": u, "v": v, "u_err": u_err, "v_err": v_err}


def split_sigma(inp: SplitInput, xi_norm, dps: int = 30):
    """Direct quadrature of ``int_0^1 t^S Q(t, |xi|^2 t) dt``."""
    with mpmath.workdps(dps + 10):
        S = _mp(inp.s) - mpmath.mpf(inp.n) / 2
        x = _mp(xi_norm) ** 2
        pts = [mpmath.mpf(0)]
        b = 1 / x
        while b < 1:
            pts.append(b)
            b *= 4
        pts.append(mpmath.mpf(1))
        return mpmath.quad(lambda t: t ** S * inp.Q(t, x * t), pts)


def split_reconstruct(coeffs: dict, xi_norm, k_max: int, l_max: int):
    S = coeffs["S"]
    xn = _mp(xi_norm)
    val = mpmath.fsum(coeffs["u"][k] * xn ** (-2 * S - 2 - 2 * k) for k in range(k_max + 1))
    val += mpmath.fsum(coeffs["v"][l] * xn ** (-2 - 2 * l) for l in range(l_max + 1))
    return val


# --------------------------------------------------------------------------
# truncated region vs full quadrant

def _uv_strip(p, q, r):
    return r - p - q - 2, r - max(p, q) - 1


def _quadrant(g: Callable, x):
    """``int int g(u, v) exp(-x u v / (u+v)) du dv`` over the quadrant.

    Uses ``u = rho tau``, ``v = rho (1-tau)``, ``rho = y / (x tau (1-tau))``
    and then ``y = w^4``, ``tau = t^4`` (mirrored near 1) so that the
    algebraic endpoint singularities become mild.
    """
    def f(t, w, mirror):
        tau, y = t ** 4, w ** 4
        k = tau * (1 - tau)
        rho = y / (x * k)
        u, v = rho * tau, rho * (1 - tau)
        if mirror:
            u, v = v, u
        return g(u, v) * rho * mpmath.exp(-y) / (x * k) * 16 * t ** 3 * w ** 3

    tb = (mpmath.mpf(1) / 2) ** (mpmath.mpf(1) / 4)
    wpts = [0, 1, mpmath.mpf(8) ** (mpmath.mpf(1) / 4), 2, mpmath.inf]
    return (mpmath.quad(lambda t, w: f(t, w, False), [0, tb], wpts)
            + mpmath.quad(lambda t, w: f(t, w, True), [0, tb], wpts))


def uv_full_quadrature(p: int, q: int, r: int, n: int, s, xi_norm=1, dps: int = 4):
    """2-D quadrature of ``(1/Gamma(S)) int int (u+v)^{S-r} u^p v^q G du dv``.

    Polar coordinates ``u = rho tau``, ``v = rho (1-tau)`` and the scaling
    ``rho = y / (|xi|^2 tau (1-tau))`` put the exponential in a fixed
    position.

    Raises
    ------
    DivergenceError
        Outside ``r-p-q-2 < S < r-max(p,q)-1``.
    """
    with mpmath.workdps(dps + 10):
        S = _mp(s) - mpmath.mpf(n) / 2
        lo, hi = _uv_strip(p, q, r)
        if not (lo < mpmath.re(S) < hi):
            raise DivergenceError(f"S = {S} outside the strip ({lo}, {hi})")
        x = _mp(xi_norm) ** 2
        val = _quadrant(lambda u, v: (u + v) ** (S - r) * u ** p * v ** q, x)
        return +(val * (4 * mpmath.pi) ** (-mpmath.mpf(n) / 2) * mpmath.rgamma(S))


def _uv_closed(p, q, r, n, S, xi_norm):
    coeff, e = uv_coefficient(p, q, r)
    Ct = mpmath.gamma(-S + 1) ** 2 * mpmath.rgamma(-2 * S + 2)
    val = eval_rational(coeff.with_c_power(0), S) * Ct * (4 * mpmath.pi) ** (-mpmath.mpf(n) / 2)
    return val * _mp(xi_norm) ** (-2 * S + e)


def uv_truncated_vs_full(p: int, q: int, r: int, n: int, s, xi_norm=1, dps: int = 20) -> dict:
    """Truncated-region quadrature, full-quadrant closed form and their difference.

    The truncated integral over ``u + v < 1`` converges for
    ``S > r - p - q - 2``; the full-quadrant value is the continued
    closed form, so the remainder is defined wherever both are.
    """
    with mpmath.workdps(dps + 10):
        S = _mp(s) - mpmath.mpf(n) / 2
        lo, _ = _uv_strip(p, q, r)
        if mpmath.re(S) <= lo:
            raise DivergenceError(f"truncated integral diverges for S <= {lo}")
        x = _mp(xi_norm) ** 2
        a = S - r + p + q + 2

        def inner(tau):
            z = x * tau * (1 - tau)
            return tau ** p * (1 - tau) ** q * mpmath.gammainc(a, 0, z) * z ** (-a)

        pts = [mpmath.mpf(0)]
        b = 1 / x
        while b < mpmath.mpf(1) / 2:
            pts.append(b)
            b *= 4
        pts.append(mpmath.mpf(1) / 2)
        left = mpmath.quad(inner, pts)
        right = mpmath.quad(inner, [1 - t for t in reversed(pts)]) if p != q else left
        trunc = (left + right) * (4 * mpmath.pi) ** (-mpmath.mpf(n) / 2) * mpmath.rgamma(S)
        full = _uv_closed(p, q, r, n, S, xi_norm)
        return {"truncated": +trunc, "full": +full, "remainder": +(full - trunc)}


def remainder_exponent_fit(p: int, q: int, r: int, n: int, s, xis=None, dps: int = 20) -> dict:
    """Slope of ``log|remainder|`` against ``log|xi|`` over ``[10, 100]``."""
    with mpmath.workdps(dps + 10):
        if xis is None:
            xis = [mpmath.mpf(10) ** (1 + mpmath.mpf(j) / 6) for j in range(7)]
        rows = [[mpmath.mpf(1), mpmath.log(xn)] for xn in xis]
        ys = [mpmath.log(abs(uv_truncated_vs_full(p, q, r, n, s, xn, dps)["remainder"])) for xn in xis]
        fit = _linear_fit(rows, ys)
        return {"exponent": fit["coeffs"][1], "cond": fit["cond"]}


def remainder_leading(p: int, q: int, r: int, n: int, s, xi_norm, terms: int = 6):
    """Asymptotic remainder for ``(p, q, r) = (0, 0, 0)``.

    ``(4 pi)^{-n/2} / Gamma(S) * sum_k C_k |xi|^{-2k} / (k - S - 2)``.
    """
    if (p, q, r) != (0, 0, 0):
        raise NotImplementedError("closed asymptotics only for the base integral")
    S = _mp(s) - mpmath.mpf(n) / 2
    x = _mp(xi_norm) ** 2
    C = tau_expansion(terms)
    return (4 * mpmath.pi) ** (-mpmath.mpf(n) / 2) * mpmath.rgamma(S) * mpmath.fsum(
        C[k - 1] * x ** (-k) / (k - S - 2) for k in range(1, terms + 1))


# --------------------------------------------------------------------------
# pattern cross-check

def _term_groups(e):
    """Split UV terms into groups whose convergence strips overlap."""
    groups: dict = {}
    for t in e.terms:
        groups.setdefault(_uv_strip(t.p, t.q, t.r), []).append(t)
    keys = sorted(groups)
    merged = []
    for k in keys:
        for m in merged:
            lo, hi = max(m[0][0], k[0]), min(m[0][1], k[1])
            if lo < hi:
                m[0] = (lo, hi)
                m[1].extend(groups[k])
                break
        else:
            merged.append([k, list(groups[k])])
    return [(tuple(k), ts) for k, ts in merged]


def pattern_quadrature_check(label: str, n: int = 1, xi=(1.3,), dps: int = 4) -> list:
    """Quadrature of the sigma term against instantiated ``uv_integrate``.

    Terms are integrated in groups whose strips of absolute convergence
    overlap, each at a fixed interior point of its common strip.

    Returns
    -------
    list of dict
        One entry per group with ``S``, ``quad``, ``exact``, ``rel_error``.
    """
    from .expr import instantiate
    from .heat_symbol import PATTERNS, UVExpr, sigma_term, uv_integrate
    pat = PATTERNS[label]
    e = sigma_term(*pat)
    x = mpmath.fsum(mpmath.mpf(c) ** 2 for c in xi)
    assign = {i: 1 for t in e.terms for i in set(t.xi) | {a for d in t.deltas for a in d}
              if isinstance(i, str)}
    out = []
    with mpmath.workdps(dps + 10):
        for (lo, hi), ts in _term_groups(e):
            # the midpoint is a zero of some n = 1 patterns, so sit off-centre
            S = lo + (hi - lo) * mpmath.mpf("0.3")
            s = S + mpmath.mpf(n) / 2
            grp = UVExpr(tuple(ts))

            quad = _quadrant(lambda u, v: (u + v) ** s * grp.evaluate(u, v, xi, n, assign)
                             / mpmath.exp(-x * u * v / (u + v)), x) * mpmath.rgamma(S)
            exact = instantiate(uv_integrate(grp), n, assign, list(xi), S, mode="float")
            exact = exact * (4 * mpmath.pi) ** (-mpmath.mpf(n) / 2)
            out.append({"S": S, "quad": quad, "exact": exact,
                        "rel_error": abs(quad - exact) / abs(exact)})
    return out


# --------------------------------------------------------------------------
# mesh refinement

def convergence_table(f: Callable, a, b, exact, degree: int = 4, panels=(1, 2, 4, 8)) -> list:
    """Composite Gauss-Legendre errors and observed orders under refinement."""
    import numpy as np
    xg, wg = np.polynomial.legendre.leggauss(degree)
    rows, prev = [], None
    for m in panels:
        edges = np.linspace(a, b, m + 1)
        tot = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            mid, half = (lo + hi) / 2, (hi - lo) / 2
            tot += half * sum(w * f(mid + half * t) for t, w in zip(xg, wg))
        err = abs(tot - float(exact))
        order = math.log2(prev / err) if prev and err > 0 else None
        rows.append({"panels": m, "value": tot, "error": err, "observed_order": order})
        prev = err
    return rows
