"""Brute-force spectral oracle on flat tori ``R^n / 2 pi Z^n``.

The Laplacian of a constant metric ``g`` has eigenfunctions ``e^{ik.x}``
with eigenvalues ``k^T g^{-1} k`` (times ``V^{2/n}`` when the scale
factor is on).  Perturbations ``h = e cos(m.x)`` couple modes ``k`` and
``k + j m``.  The operator is represented in the flat L^2 Fourier basis
through the unitarily equivalent symmetric family::

    F_hat = rho^{1/2} Delta_g rho^{-1/2},   rho = sqrt(det g)

which has the same spectrum as ``Delta_g``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import product
from typing import Optional, Sequence, Union

import mpmath
import numpy as np

from .operators import mu_of_n, scalar_curvature_at_origin
from .rational import PoleError

__all__ = [
    "TorusProblem",
    "Constant",
    "CosMode",
    "SpectralMatrices",
    "epstein_zeta",
    "zcal",
    "zcal_uncorrected",
    "zcal_perturbed",
    "build_matrices",
    "psi_s",
    "hessian_spectral",
    "first_variation",
    "intrinsic_correction",
    "intrinsic_w",
    "fd_hessian",
    "fd_first_variation",
    "heat_trace",
    "heat_trace_second_variation",
    "heat_trace_leading_prediction",
    "nonlocal_exponent_fit",
    "weyl_ratio",
]


# --------------------------------------------------------------------------
# problems and perturbations

@dataclass
class TorusProblem:
    """Flat torus with constant metric ``g``.

    Attributes
    ----------
    n : int
    g : ndarray
        Symmetric positive-definite ``n x n`` matrix.
    K : int
        Mode cutoff ``|k|_inf <= K`` for matrix computations.
    v_factor : bool
        Multiply eigenvalues by ``V^{2/n}``.
    c1 : float
        Coefficient of ``mu * R`` in ``F`` (flat background so R = 0 at
        sigma = 0; only matters for perturbed matrices).
    """

    n: int
    g: np.ndarray = None
    K: int = 16
    v_factor: bool = False
    c1: float = 0.0

    def __post_init__(self):
        if self.g is None:
            self.g = np.eye(self.n)
        self.g = np.atleast_2d(np.asarray(self.g, dtype=float))
        if self.g.shape != (self.n, self.n):
            raise ValueError("metric shape does not match n")
        if not np.allclose(self.g, self.g.T):
            raise ValueError("metric must be symmetric")
        if np.linalg.eigvalsh(self.g).min() <= 0:
            raise ValueError("metric must be positive definite")

    @property
    def ginv(self) -> np.ndarray:
        return np.linalg.inv(self.g)

    @property
    def volume(self) -> float:
        return (2 * math.pi) ** self.n * math.sqrt(np.linalg.det(self.g))

    def volume_mp(self):
        d = mpmath.matrix(self.g.tolist())
        return (2 * mpmath.pi) ** self.n * mpmath.sqrt(mpmath.det(d))

    @property
    def scale(self) -> float:
        return self.volume ** (2 / self.n) if self.v_factor else 1.0

    def modes(self, K: Optional[int] = None) -> np.ndarray:
        K = self.K if K is None else K
        rng = range(-K, K + 1)
        return np.array(list(product(rng, repeat=self.n)), dtype=int)

    def eigenvalues(self, K: Optional[int] = None) -> np.ndarray:
        ks = self.modes(K)
        lam = np.einsum("ka,ab,kb->k", ks, self.ginv, ks) * self.scale
        return np.sort(lam)

    def with_metric(self, g) -> "TorusProblem":
        return TorusProblem(self.n, np.asarray(g, dtype=float), self.K, self.v_factor, self.c1)


@dataclass(frozen=True)
class Constant:
    """Constant perturbation ``h = e``."""

    e: tuple

    @property
    def E(self) -> np.ndarray:
        return np.atleast_2d(np.asarray(self.e, dtype=float))

    def scaled(self, c) -> "Constant":
        return Constant(tuple(map(tuple, (c * self.E).tolist())))


@dataclass(frozen=True)
class CosMode:
    """Perturbation ``h = e cos(m.x)``."""

    e: tuple
    m: tuple

    def __post_init__(self):
        if all(x == 0 for x in self.m):
            raise ValueError("CosMode needs m != 0")

    @property
    def E(self) -> np.ndarray:
        return np.atleast_2d(np.asarray(self.e, dtype=float))

    @property
    def M(self) -> np.ndarray:
        return np.asarray(self.m, dtype=int)

    def scaled(self, c) -> "CosMode":
        return CosMode(tuple(map(tuple, (c * self.E).tolist())), self.m)


Perturbation = Union[Constant, CosMode]


def _check_sym(E):
    if not np.allclose(E, E.T):
        raise ValueError("perturbation polarization must be symmetric")


# --------------------------------------------------------------------------
# Epstein zeta

def _mp_matrix_inv_det(A: np.ndarray):
    M = mpmath.matrix(A.tolist())
    return M, M ** -1, mpmath.det(M)


def _lattice(n: int, R: int):
    rng = range(-R, R + 1)
    for k in product(rng, repeat=n):
        if any(k):
            yield k


def _quad(M, k):
    n = len(k)
    return mpmath.fsum(M[a, b] * k[a] * k[b] for a in range(n) for b in range(n))


def _epstein_parts(p: TorusProblem, s, dps: int):
    """Pieces of the theta splitting for ``Q(k) = c k^T g^{-1} k``."""
    n = p.n
    c = p.volume_mp() ** (mpmath.mpf(2) / n) if p.v_factor else mpmath.mpf(1)
    G, Ginv, detg = _mp_matrix_inv_det(p.g)
    A = Ginv * c
    Ainv = G / c
    detA = mpmath.det(A)
    t0 = mpmath.pi / detA ** (mpmath.mpf(1) / n)
    amin = min(np.linalg.eigvalsh(np.asarray(A.tolist(), dtype=float)))
    aimin = min(np.linalg.eigvalsh(np.asarray(Ainv.tolist(), dtype=float)))
    D = dps * math.log(10) + 15
    Rk = int(math.ceil(math.sqrt(D / (float(t0) * amin)))) + 1
    Rm = int(math.ceil(math.sqrt(D * float(t0) / (math.pi ** 2 * aimin)))) + 1
    P = mpmath.pi ** (mpmath.mpf(n) / 2) / mpmath.sqrt(detA)
    S = s - mpmath.mpf(n) / 2
    ksum = mpmath.fsum(_quad(A, k) ** (-s) * mpmath.gammainc(s, t0 * _quad(A, k))
                       for k in _lattice(n, Rk))
    msum = mpmath.fsum((mpmath.pi ** 2 * _quad(Ainv, m)) ** S
                       * mpmath.gammainc(-S, mpmath.pi ** 2 * _quad(Ainv, m) / t0)
                       for m in _lattice(n, Rm))
    return ksum, msum, P, t0, S


def epstein_zeta(p: TorusProblem, s, dps: int = 30):
    """Analytically continued ``Z(s) = sum_{k != 0} lambda_k^{-s}``.

    Uses the incomplete-gamma (theta function) splitting.  Returns an
    mpmath number.

    Raises
    ------
    PoleError
        At ``s = n/2``.
    """
    with mpmath.workdps(dps + 10):
        s = mpmath.mpmathify(s)
        if abs(s - mpmath.mpf(p.n) / 2) < mpmath.mpf(10) ** (-dps):
            raise PoleError("Z(s) has a pole at s = n/2")
        ksum, msum, P, t0, S = _epstein_parts(p, s, dps)
        val = mpmath.rgamma(s) * (ksum + P * (t0 ** S / S + msum)) - t0 ** s * mpmath.rgamma(s + 1)
        return +val


def zcal(p: TorusProblem, s, dps: int = 30, kernel_dim: int = 1):
    """``Gamma(s) Z(s) / Gamma(S) + d / (Gamma(S) s)``, an entire function.

    Evaluated from a form with no removable singularities, so it may be
    called at ``s = 0`` and ``s = n/2``.
    """
    with mpmath.workdps(dps + 10):
        s = mpmath.mpmathify(s)
        ksum, msum, P, t0, S = _epstein_parts(p, s, dps)
        lt = mpmath.log(t0)
        if s == 0:
            tail = -lt
        else:
            tail = -mpmath.expm1(s * lt) / s
        val = mpmath.rgamma(S) * (ksum + P * msum + tail) + P * t0 ** S * mpmath.rgamma(S + 1)
        if kernel_dim != 1:
            # the entire form above already absorbs d = 1
            val += (kernel_dim - 1) * _corr(s, S)
        return +val


def _corr(s, S):
    return mpmath.rgamma(S) / s


def zcal_uncorrected(p: TorusProblem, s, dps: int = 30):
    """``Gamma(s) Z(s) / Gamma(S)`` without the kernel correction."""
    with mpmath.workdps(dps + 10):
        s = mpmath.mpmathify(s)
        return +(zcal(p, s, dps) - _corr(s, s - mpmath.mpf(p.n) / 2))


# --------------------------------------------------------------------------
# operator matrices

@dataclass
class SpectralMatrices:
    """Dense matrices in the truncated Fourier basis."""

    modes: np.ndarray
    F: np.ndarray
    Fp: np.ndarray
    Fpp: np.ndarray
    sigma: float = 0.0

    @property
    def zero_index(self) -> int:
        return int(np.flatnonzero(~self.modes.any(axis=1))[0])


def _scale0(p: TorusProblem) -> float:
    return p.scale


def _traces(p: TorusProblem, E: np.ndarray):
    gi = p.ginv
    P = gi @ E @ gi
    Q = P @ E @ gi
    t1 = float(np.trace(gi @ E))
    t2 = float(np.trace(gi @ E @ gi @ E))
    return gi, P, Q, t1, t2


def _scale_derivs(p: TorusProblem, h: Perturbation):
    """``c(0), c'(0), c''(0)`` for ``c(sigma) = V(sigma)^{2/n}``."""
    if not p.v_factor:
        return 1.0, 0.0, 0.0
    n = p.n
    _, _, _, t1, t2 = _traces(p, h.E)
    c0 = p.scale
    if isinstance(h, Constant):
        return c0, c0 * t1 / n, c0 * (t1 ** 2 / n ** 2 - t2 / n)
    Vpp = t1 ** 2 / 8 - t2 / 4   # V''/V0
    return c0, 0.0, c0 * (2 / n) * Vpp


def _index(modes: np.ndarray) -> dict:
    return {tuple(k): i for i, k in enumerate(modes)}


def _curv_coeffs(p: TorusProblem, h: CosMode, sigma: float, M: int) -> np.ndarray:
    """Fourier coefficients of ``mu c1 R(theta)`` at finite sigma."""
    if p.c1 == 0 or p.n == 1:
        return np.zeros(M, dtype=complex)
    E, m = h.E, h.M.astype(float)
    th = 2 * np.pi * np.arange(M) / M
    vals = np.empty(M)
    for l, t in enumerate(th):
        g0 = p.g + sigma * E * np.cos(t)
        g1 = -sigma * np.sin(t) * np.einsum("a,bc->abc", m, E)
        g2 = -sigma * np.cos(t) * np.einsum("a,b,cd->abcd", m, m, E)
        vals[l] = scalar_curvature_at_origin(g0, g1, g2)
    return np.fft.fft(p.c1 * float(mu_of_n(p.n)) * vals) / M


def _F_sigma(p: TorusProblem, h: Perturbation, sigma: float, modes: np.ndarray) -> np.ndarray:
    """``F_hat(sigma)`` assembled from Fourier coefficients of its coefficient functions."""
    n = p.n
    idx = _index(modes)
    N = len(modes)
    F = np.zeros((N, N), dtype=complex)
    if isinstance(h, Constant):
        gt = p.g + sigma * h.E
        c = ((2 * math.pi) ** n * math.sqrt(np.linalg.det(gt))) ** (2 / n) if p.v_factor else 1.0
        lam = np.einsum("ka,ab,kb->k", modes, np.linalg.inv(gt), modes) * c
        np.fill_diagonal(F, lam)
        return F
    E, m = h.E, h.M
    Mgrid = 256
    th = 2 * np.pi * np.arange(Mgrid) / Mgrid
    gts = p.g[None] + sigma * np.cos(th)[:, None, None] * E[None]
    A = np.linalg.inv(gts)
    Lf = 0.5 * np.einsum("tab,tba->t", A, -sigma * np.sin(th)[:, None, None] * E[None])
    mAm = np.einsum("a,tab,b->t", m, A, m)
    Bf = mAm * Lf
    Cf = mAm * Lf ** 2
    rho = np.sqrt(np.linalg.det(gts))
    V = (2 * math.pi) ** n * rho.mean()
    c = V ** (2 / n) if p.v_factor else 1.0
    Ah = np.fft.fft(A, axis=0) / Mgrid
    Bh = np.fft.fft(Bf) / Mgrid
    Ch = np.fft.fft(Cf) / Mgrid
    Rh = _curv_coeffs(p, h, sigma, Mgrid)
    J = min(Mgrid // 4, 2 * p.K // max(1, int(np.abs(m).max())) + 1)
    for col, k in enumerate(modes):
        for j in range(-J, J + 1):
            kp = tuple(k + j * m)
            row = idx.get(kp)
            if row is None:
                continue
            val = np.asarray(kp) @ Ah[j % Mgrid] @ k + 0.5j * j * Bh[j % Mgrid] \
                + 0.25 * Ch[j % Mgrid] + Rh[j % Mgrid]
            F[row, col] = c * val
    return F


def _fprime_cos(p: TorusProblem, h: CosMode, k, j):
    """Analytic ``F'_{k + j m, k}`` at sigma = 0 for a cosine mode."""
    if abs(j) != 1:
        return 0.0
    gi, P, Q, t1, t2 = _traces(p, h.E)
    m = h.M
    kp = np.asarray(k) + j * m
    Mm = float(m @ gi @ m)
    c0 = p.scale
    return c0 * (-0.5 * float(kp @ P @ np.asarray(k)) - t1 * Mm / 8)


def _fsecond_cos(p: TorusProblem, h: CosMode, k, j):
    gi, P, Q, t1, t2 = _traces(p, h.E)
    m = h.M
    k = np.asarray(k)
    kp = k + j * m
    Mm = float(m @ gi @ m)
    K2 = t2 * Mm + t1 * float(m @ P @ m)
    c0, _, cpp = _scale_derivs(p, h)
    if j == 0:
        val = c0 * (float(k @ Q @ k) + Mm * t1 ** 2 / 16) + cpp * float(k @ gi @ k)
    elif abs(j) == 2:
        val = c0 * (0.5 * float(kp @ Q @ k) + K2 / 4 - Mm * t1 ** 2 / 32)
    else:
        val = 0.0
    return val


def _curv_derivs(p: TorusProblem, h: CosMode, M: int = 64, d: float = 1e-3):
    """Fourier coefficients of the first and second sigma-derivatives of mu c1 R."""
    if p.c1 == 0 or p.n == 1:
        z = np.zeros(M, dtype=complex)
        return z, z
    f = {k: _curv_coeffs(p, h, k * d, M) for k in (-2, -1, 0, 1, 2)}
    d1 = (f[-2] - 8 * f[-1] + 8 * f[1] - f[2]) / (12 * d)
    d2 = (-f[-2] + 16 * f[-1] - 30 * f[0] + 16 * f[1] - f[2]) / (12 * d * d)
    return d1, d2


def build_matrices(p: TorusProblem, h: Perturbation, sigma: float = 0.0) -> SpectralMatrices:
    """``F(sigma)`` and the analytic ``F'``, ``F''`` at sigma = 0.

    Raises
    ------
    ValueError
        If the cutoff ``K < 2 |m|_inf`` for a cosine mode.
    """
    _check_sym(h.E)
    modes = p.modes()
    N = len(modes)
    F = _F_sigma(p, h, sigma, modes) if sigma else np.diag(
        np.einsum("ka,ab,kb->k", modes, p.ginv, modes) * p.scale).astype(complex)
    Fp = np.zeros((N, N), dtype=complex)
    Fpp = np.zeros((N, N), dtype=complex)
    if isinstance(h, Constant):
        gi, P, Q, t1, t2 = _traces(p, h.E)
        c0, cp, cpp = _scale_derivs(p, h)
        kgk = np.einsum("ka,ab,kb->k", modes, gi, modes)
        kPk = np.einsum("ka,ab,kb->k", modes, P, modes)
        kQk = np.einsum("ka,ab,kb->k", modes, Q, modes)
        np.fill_diagonal(Fp, cp * kgk - c0 * kPk)
        np.fill_diagonal(Fpp, cpp * kgk - 2 * cp * kPk + 2 * c0 * kQk)
        return SpectralMatrices(modes, F, Fp, Fpp, sigma)
    m = h.M
    if p.K < 2 * int(np.abs(m).max()):
        raise ValueError(f"cutoff K={p.K} is smaller than 2|m|_inf={2 * int(np.abs(m).max())}")
    idx = _index(modes)
    R1, R2 = _curv_derivs(p, h)
    c0 = p.scale
    for col, k in enumerate(modes):
        for j in (-2, -1, 0, 1, 2):
            row = idx.get(tuple(k + j * m))
            if row is None:
                continue
            Fp[row, col] = _fprime_cos(p, h, k, j) + c0 * R1[j % len(R1)]
            Fpp[row, col] = _fsecond_cos(p, h, k, j) + c0 * R2[j % len(R2)]
    return SpectralMatrices(modes, F, Fp, Fpp, sigma)


# --------------------------------------------------------------------------
# four-term spectral assembly

def psi_s(mu, s):
    """``Psi_s(mu) = (1 - mu^{-s-1}) / (mu - 1)``, with ``Psi_s(1) = s+1`` and ``Psi_s(0) = 0``."""
    if mu == 0:
        return 0 * mpmath.mpmathify(s)
    mu = mpmath.mpmathify(mu)
    s = mpmath.mpmathify(s)
    x = mu - 1
    a = s + 1
    if abs(x) < mpmath.mpf("1e-4"):
        # series in x = mu - 1
        tot, term = mpmath.mpf(0), a
        for k in range(12):
            tot += term
            term = -term * (a + k + 1) / (k + 2) * x
        return tot
    return -mpmath.expm1(-a * mpmath.log(mu)) / x


def _phi(lam, s):
    """``int_0^1 t^s exp(-t lam) dt``."""
    if lam == 0:
        return 1 / (s + 1)
    return mpmath.gammainc(s + 1, 0, lam) * lam ** (-s - 1)


def _D(lam, mu, s, phis):
    """``iint_{u+v<1} (u+v)^s exp(-u lam - v mu) du dv``."""
    if lam == mu or abs(lam - mu) <= 1e-12 * max(abs(lam), abs(mu), 1):
        l = (lam + mu) / 2
        if l == 0:
            return 1 / (s + 2)
        return mpmath.gammainc(s + 2, 0, l) * l ** (-s - 2)
    return (phis(mu) - phis(lam)) / (lam - mu)


def _eig(SM: SpectralMatrices):
    F = SM.F
    if np.count_nonzero(F - np.diag(np.diagonal(F))) == 0:
        # unperturbed flat torus: already diagonal in the Fourier basis
        lam, Fp, Fpp = np.diagonal(F).real.copy(), SM.Fp, SM.Fpp
    else:
        lam, U = np.linalg.eigh(F)
        Fp = U.conj().T @ SM.Fp @ U
        Fpp = U.conj().T @ SM.Fpp @ U
    z = int(np.argmin(np.abs(lam)))
    lam = lam.copy()
    lam[z] = 0.0
    return lam, Fp, Fpp, z


def hessian_spectral(p: TorusProblem, h: Perturbation, s, return_terms: bool = False,
                     check_convergence: bool = False, tol: float = 1e-8, dps: int = 20):
    """Second variation of the corrected zeta function by the four-term formula.

    Parameters
    ----------
    p : TorusProblem
    h : Constant or CosMode
    s : number
        Needs ``Re s > n/2 + 1`` for the truncated sums to converge.
    return_terms : bool
        Also return the four terms separately.
    check_convergence : bool
        Recompute with ``K + 4`` and warn if the value moves by more than
        ``tol`` (relative).

    Returns
    -------
    mpmath number, or (value, [t1, t2, t3, t4])
    """
    with mpmath.workdps(dps):
        s = mpmath.mpmathify(s)
        S = s - mpmath.mpf(p.n) / 2
        rg = mpmath.rgamma(S)
        SM = build_matrices(p, h)
        lam, Fp, Fpp, z = _eig(SM)
        lam_mp = [mpmath.mpf(float(x)) for x in lam]
        nz = [i for i in range(len(lam)) if i != z]
        g1 = mpmath.gamma(s + 1)
        # term 1: trace F'' L(s)
        t1 = -rg * (g1 * mpmath.fsum(mpmath.mpf(Fpp[i, i].real) * lam_mp[i] ** (-s - 1) for i in nz)
                    + mpmath.mpf(Fpp[z, z].real) / (s + 1))
        # term 2: kernel correction
        t2 = -2 * rg * mpmath.fsum(
            mpmath.mpf(abs(Fp[z, i]) ** 2) * lam_mp[i] ** (-s - 2) * mpmath.gammainc(s + 1, lam_mp[i])
            for i in nz if abs(Fp[z, i]) > 0)
        # pair sums over the sparsity pattern of F'
        rows, cols = np.nonzero(np.abs(Fp) > 1e-300)
        phi_cache: dict = {}

        def phis(x):
            if x not in phi_cache:
                phi_cache[x] = _phi(x, s)
            return phi_cache[x]

        t3_terms, t4_terms = [], []
        for a, b in zip(rows, cols):
            w = mpmath.mpf(abs(Fp[a, b]) ** 2)
            la, lb = lam_mp[a], lam_mp[b]
            Dab = _D(la, lb, s, phis)
            t4_terms.append(w * Dab)
            if a != z and b != z:
                full = la ** (-s - 2) * g1 * psi_s(lb / la, s)
                t3_terms.append(w * (full - Dab))
        t3 = rg * mpmath.fsum(t3_terms)
        t4 = rg * mpmath.fsum(t4_terms)
        val = t1 + t2 + t3 + t4
        if check_convergence:
            p2 = TorusProblem(p.n, p.g, p.K + 4, p.v_factor, p.c1)
            v2 = hessian_spectral(p2, h, s, dps=dps)
            if abs(v2 - val) > tol * max(abs(val), mpmath.mpf("1e-300")):
                warnings.warn(f"spectral sum not converged at K={p.K}: change {abs(v2 - val)}")
        if return_terms:
            return val, [t1, t2, t3, t4]
        return val


def first_variation(p: TorusProblem, h: Perturbation, s, dps: int = 20):
    """``D Zcal(s)(h) = trace F' L(s)``."""
    with mpmath.workdps(dps):
        s = mpmath.mpmathify(s)
        S = s - mpmath.mpf(p.n) / 2
        SM = build_matrices(p, h)
        lam, Fp, _, z = _eig(SM)
        g1 = mpmath.gamma(s + 1)
        tot = mpmath.fsum(mpmath.mpf(Fp[i, i].real) * mpmath.mpf(float(lam[i])) ** (-s - 1)
                          for i in range(len(lam)) if i != z)
        return -mpmath.rgamma(S) * (g1 * tot + mpmath.mpf(Fp[z, z].real) / (s + 1))


def intrinsic_w(p: TorusProblem, h: Perturbation) -> np.ndarray:
    """Polarization ``W`` of ``w = nabla(h, h)``: ``-h g^{-1} h + 1/2 <h,g> h - 1/4 <h,h> g``."""
    E, g = h.E, p.g
    gi, P, Q, t1, t2 = _traces(p, E)
    return -E @ gi @ E + 0.5 * t1 * E - 0.25 * t2 * g


def intrinsic_correction(p: TorusProblem, h: Perturbation, s, dps: int = 20):
    """``D Zcal(s)(w)`` with ``w`` the intrinsic-connection term.

    For ``h = e cos(m.x)`` one has ``w = W (1 + cos(2 m.x)) / 2``; the
    oscillating half has vanishing first variation, so only ``W / 2``
    contributes.
    """
    W = intrinsic_w(p, h)
    if isinstance(h, CosMode):
        W = W / 2
    return first_variation(p, Constant(tuple(map(tuple, W.tolist()))), s, dps)


# --------------------------------------------------------------------------
# finite-difference oracles on exact or truncated spectra

def _circle_length(g: float, e: float, m: int, sigma):
    # the substitution y = m x shows the length does not depend on m != 0
    f = lambda y: mpmath.sqrt(g + sigma * e * mpmath.cos(y))
    return mpmath.quad(f, mpmath.linspace(0, 2 * mpmath.pi, 5))


def zcal_perturbed(p: TorusProblem, h: Perturbation, sigma, s, dps: int = 30):
    """Corrected zeta function of ``g + sigma h``.

    Exact continuation for constant perturbations (Epstein) and for
    n = 1 cosine modes (a perturbed circle is isometric to a round circle
    of length ``L(sigma)``).  Otherwise uses the truncated spectrum and
    needs ``Re s > n/2``.
    """
    with mpmath.workdps(dps + 10):
        sigma = mpmath.mpmathify(sigma)
        s = mpmath.mpmathify(s)
        if isinstance(h, Constant):
            gt = mpmath.matrix(p.g.tolist()) + sigma * mpmath.matrix(h.E.tolist())
            return _zcal_mpmetric(p, gt, s, dps)
        if p.n == 1:
            L = _circle_length(p.g[0, 0], h.E[0, 0], int(h.m[0]), sigma)
            S = s - mpmath.mpf(1) / 2
            # eigenvalues (2 pi k / L)^2, scaled by L^2 when the V factor is on
            base = (L / (2 * mpmath.pi)) ** (2 * s) if not p.v_factor else (2 * mpmath.pi) ** (-2 * s)
            Z = 2 * base * mpmath.zeta(2 * s)
            return +(mpmath.gamma(s) * Z * mpmath.rgamma(S) + mpmath.rgamma(S) / s)
        if mpmath.re(s) <= p.n / 2:
            raise ValueError("truncated spectral sum needs Re s > n/2")
        F = _F_sigma(p, h, float(sigma), p.modes())
        lam = np.sort(np.linalg.eigvalsh(F))[1:]
        S = s - mpmath.mpf(p.n) / 2
        Z = mpmath.fsum(mpmath.mpf(float(x)) ** (-s) for x in lam)
        return +(mpmath.gamma(s) * Z * mpmath.rgamma(S) + mpmath.rgamma(S) / s)


def _zcal_mpmetric(p: TorusProblem, gt, s, dps):
    """zcal for an mpmath metric matrix (keeps full precision in sigma)."""
    q = TorusProblem.__new__(TorusProblem)
    q.n, q.K, q.v_factor, q.c1 = p.n, p.K, p.v_factor, p.c1
    q.g = _MPArray(gt)
    return zcal(q, s, dps)


class _MPArray:
    """Minimal stand-in exposing ``tolist`` for an mpmath matrix."""

    def __init__(self, M):
        self.M = M

    def tolist(self):
        return [[self.M[i, j] for j in range(self.M.cols)] for i in range(self.M.rows)]

    def __array__(self, dtype=None, copy=None):
        return np.array([[float(x) for x in r] for r in self.tolist()], dtype=dtype or float)

    @property
    def shape(self):
        return (self.M.rows, self.M.cols)


def fd_hessian(p: TorusProblem, h: Perturbation, s, delta=1e-3, dps: int = 30):
    """Five-point central second difference of ``zcal_perturbed`` in sigma."""
    with mpmath.workdps(dps + 10):
        d = mpmath.mpmathify(delta)
        f = {k: zcal_perturbed(p, h, k * d, s, dps) for k in (-2, -1, 0, 1, 2)}
        return (-f[-2] + 16 * f[-1] - 30 * f[0] + 16 * f[1] - f[2]) / (12 * d * d)


def fd_first_variation(p: TorusProblem, h: Perturbation, s, delta=1e-3, dps: int = 30):
    with mpmath.workdps(dps + 10):
        d = mpmath.mpmathify(delta)
        f = {k: zcal_perturbed(p, h, k * d, s, dps) for k in (-2, -1, 1, 2)}
        return (f[-2] - 8 * f[-1] + 8 * f[1] - f[2]) / (12 * d)


def fd_mixed_conformal(p: TorusProblem, h: Constant, s, delta=1e-5, dps: int = 30):
    """Mixed derivative ``d_sigma d_tau Zcal(g + sigma h + tau g)`` at 0."""
    with mpmath.workdps(dps + 10):
        d = mpmath.mpmathify(delta)
        G = mpmath.matrix(p.g.tolist())
        H = mpmath.matrix(h.E.tolist())
        f = lambda a, b: _zcal_mpmetric(p, G + a * d * H + b * d * G, s, dps)
        return (f(1, 1) - f(1, -1) - f(-1, 1) + f(-1, -1)) / (4 * d * d)


# --------------------------------------------------------------------------
# heat traces

def heat_trace(p: TorusProblem, t: float, K: Optional[int] = None) -> float:
    """``sum_k exp(-t lambda_k)`` including the zero mode."""
    if K is None:
        amin = np.linalg.eigvalsh(p.ginv).min() * p.scale
        K = int(math.ceil(math.sqrt(45 / (t * amin)))) + 1
    lam = p.eigenvalues(K)
    return math.fsum(np.exp(-t * lam))


def weyl_ratio(p: TorusProblem, lam_max: float) -> float:
    """``N(lam) / (omega_n V lam^{n/2} / (2 pi)^n)`` for the counting function."""
    lam = p.eigenvalues()
    count = int(np.sum((lam <= lam_max) & (lam > 0)))
    n = p.n
    omega = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    V = p.volume
    c = p.scale
    weyl = omega * V * (lam_max / c) ** (n / 2) / (2 * math.pi) ** n
    return count / weyl


def heat_trace_second_variation(p: TorusProblem, h: Perturbation, u: float, v: float,
                                K: Optional[int] = None) -> float:
    """``Tr F' exp(-u F) F' exp(-v F)`` as a mode-pair sum."""
    if K is None:
        amin = np.linalg.eigvalsh(p.ginv).min() * p.scale
        K = int(math.ceil(math.sqrt(50 / (min(u, v) * amin)))) + 1
        if isinstance(h, CosMode):
            K += 2 * int(np.abs(h.M).max())
    q = TorusProblem(p.n, p.g, K, p.v_factor, p.c1)
    modes = q.modes()
    lam = np.einsum("ka,ab,kb->k", modes, q.ginv, modes) * q.scale
    if isinstance(h, Constant):
        gi, P, Q, t1, t2 = _traces(q, h.E)
        c0, cp, _ = _scale_derivs(q, h)
        fp = cp * np.einsum("ka,ab,kb->k", modes, gi, modes) - c0 * np.einsum("ka,ab,kb->k", modes, P, modes)
        return math.fsum(fp ** 2 * np.exp(-(u + v) * lam))
    gi, P, Q, t1, t2 = _traces(q, h.E)
    m = h.M
    Mm = float(m @ gi @ m)
    total = []
    for j in (-1, 1):
        kp = modes + j * m
        lamp = np.einsum("ka,ab,kb->k", kp, q.ginv, kp) * q.scale
        fp = q.scale * (-0.5 * np.einsum("ka,ab,kb->k", kp, P, modes) - t1 * Mm / 8)
        inside = np.all(np.abs(kp) <= K, axis=1)
        total.append(np.where(inside, fp ** 2 * np.exp(-u * lam - v * lamp), 0.0))
    return math.fsum(np.concatenate(total))


def heat_trace_leading_prediction(p: TorusProblem, h: Perturbation, tau: float = 0.5) -> float:
    """Small-time limit of ``t^{n/2+2} Tr F' e^{-uF} F' e^{-vF}`` from the Gaussian symbol.

    Uses the sigma terms with no derivatives on ``h`` evaluated at
    ``xi = 0``, ``u = tau``, ``v = 1 - tau``, contracted with the
    coefficient tables of the Laplacian and integrated over the torus
    (``int cos^2 = V_flat / 2``).
    """
    from .heat_symbol import sigma_term
    from .operators import linearize_scalar_family
    n = p.n
    if not np.allclose(p.g, np.eye(n)):
        raise ValueError("prediction implemented for the identity metric")
    spec = linearize_scalar_family(n, 0, 0)
    E = h.E
    zero = (0,) * n
    ents = [(i, j, b, m[0][0]) for (i, j, a, b), m in spec.principal().items() if a == zero]
    total = 0.0
    for (i, j, b, A1) in ents:
        for (k, l, d, A2) in ents:
            w = float(A1 * A2) * E[i - 1, j - 1] * E[k - 1, l - 1]
            if w == 0:
                continue
            beta = [x + 1 for x, c in enumerate(b) for _ in range(c)]
            delta = [x + 1 for x, c in enumerate(d) for _ in range(c)]
            sig = sigma_term((), beta, (), delta)
            total += w * sig.evaluate(tau, 1 - tau, [0.0] * n, n)
    vol = (2 * math.pi) ** n
    integral = vol / 2 if isinstance(h, CosMode) else vol
    return total * integral * p.scale ** 2 / p.scale ** (n / 2 + 2) if p.v_factor else total * integral


# --------------------------------------------------------------------------
# non-integer exponent fit

def nonlocal_exponent_fit(ms: Sequence, values: Sequence, n: int, s, include_nonlocal: bool = True,
                          dps: int = 40) -> dict:
    """Least-squares fit of ``sum_j c_j |m|^{2-j} + u |m|^{n-2s}`` (j = 0, 1, 2).

    Parameters
    ----------
    ms : sequence of positive numbers
        Mode magnitudes ``|m|``.
    values : sequence
        Hessian values at each ``|m|``.
    include_nonlocal : bool
        Drop the ``|m|^{n-2s}`` column (detectability self-test).

    Returns
    -------
    dict
        ``u`` (None without the nonlocal column), ``coeffs``,
        ``residual`` (relative l2 norm) and ``cond``.
    """
    with mpmath.workdps(dps):
        s = mpmath.mpmathify(s)
        expo = n - 2 * s
        if abs(expo - mpmath.nint(expo)) < mpmath.mpf("1e-12"):
            warnings.warn("n - 2s is an integer: the nonlocal power is not identifiable")
        rows = []
        for m in ms:
            m = mpmath.mpf(m)
            r = [m ** 2, m, mpmath.mpf(1)]
            if include_nonlocal:
                r.append(m ** expo)
            rows.append(r)
        A = mpmath.matrix(rows)
        y = mpmath.matrix([mpmath.mpf(v) for v in values])
        # column scaling for conditioning
        ncol = A.cols
        scl = [mpmath.sqrt(mpmath.fsum(A[i, c] ** 2 for i in range(A.rows))) for c in range(ncol)]
        As = mpmath.matrix(A.rows, ncol)
        for i in range(A.rows):
            for c in range(ncol):
                As[i, c] = A[i, c] / scl[c]
        x, res = mpmath.qr_solve(As, y)
        coeffs = [x[c] / scl[c] for c in range(ncol)]
        sv = mpmath.svd_r(As, compute_uv=False)
        cond = max(sv) / min(sv)
        if cond > mpmath.mpf(10) ** (dps - 8):
            warnings.warn(f"ill-conditioned fit (cond = {mpmath.nstr(cond, 5)})")
        ynorm = mpmath.norm(y)
        return {"u": coeffs[3] if include_nonlocal else None,
                "coeffs": coeffs,
                "residual": res / ynorm if ynorm else res,
                "cond": cond}
