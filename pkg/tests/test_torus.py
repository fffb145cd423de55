import math

import mpmath
import numpy as np
import pytest

from hesszeta.rational import PoleError
from hesszeta.torus import (Constant, CosMode, TorusProblem, build_matrices, epstein_zeta,
                            fd_first_variation, fd_hessian, fd_mixed_conformal, first_variation,
                            heat_trace, heat_trace_leading_prediction,
                            heat_trace_second_variation, hessian_spectral, intrinsic_correction,
                            intrinsic_w, nonlocal_exponent_fit, psi_s, weyl_ratio, zcal,
                            zcal_uncorrected)

G2 = np.array([[1.0, 0.2], [0.2, 1.3]])


def test_problem_validation():
    with pytest.raises(ValueError):
        TorusProblem(2, np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ValueError):
        TorusProblem(2, np.eye(3))
    with pytest.raises(ValueError):
        CosMode(((1.0,),), (0,))


# -- Epstein zeta against closed forms ------------------------------------

@mpmath.workdps(30)
def test_circle_zeta_closed_form():
    p = TorusProblem(1)
    for s in ("0.75", "1", "2.5", "-0.3"):
        s = mpmath.mpf(s)
        assert abs(epstein_zeta(p, s) - 2 * mpmath.zeta(2 * s)) < 1e-20


@mpmath.workdps(30)
def test_circle_zeta_with_volume_factor():
    p = TorusProblem(1, v_factor=True)
    assert abs(epstein_zeta(p, 1) - mpmath.mpf(1) / 12) < 1e-20
    assert abs(epstein_zeta(p, -1)) < 1e-20


@mpmath.workdps(30)
def test_square_torus_zeta_is_zeta_times_beta():
    p = TorusProblem(2)
    for s in ("2", "0.5", "-0.5", "1.7"):
        s = mpmath.mpf(s)
        beta = mpmath.dirichlet(s, [0, 1, 0, -1])
        assert abs(epstein_zeta(p, s) - 4 * mpmath.zeta(s) * beta) < 1e-18


@mpmath.workdps(30)
def test_epstein_value_at_zero_and_pole():
    p = TorusProblem(2, G2)
    assert abs(epstein_zeta(p, 0) + 1) < 1e-20
    with pytest.raises(PoleError):
        epstein_zeta(p, 1)


def test_zcal_regression_and_correction():
    p = TorusProblem(1)
    assert abs(zcal(p, 0) - mpmath.mpf("0.874081563910442")) < 1e-12
    # without the kernel correction the value blows up near s = 0
    assert abs(zcal_uncorrected(p, mpmath.mpf("1e-8"))) > 1e6
    assert abs(zcal(p, mpmath.mpf("1e-8")) - zcal(p, 0)) < 1e-6


def test_zcal_smooth_near_half():
    p = TorusProblem(1)
    h = mpmath.mpf("1e-4")
    a, b, c = (zcal(p, mpmath.mpf("0.5") + k * h) for k in (-1, 0, 1))
    assert abs(a - 2 * b + c) < 1e-6


# -- spectral matrices ----------------------------------------------------

def test_build_matrices_requires_enough_modes():
    p = TorusProblem(1, K=4)
    with pytest.raises(ValueError):
        build_matrices(p, CosMode(((1.0,),), (3,)))


def test_unperturbed_matrix_is_diagonal_spectrum():
    p = TorusProblem(2, G2, K=4)
    SM = build_matrices(p, Constant(((1.0, 0.0), (0.0, 0.0))))
    assert np.allclose(np.sort(np.diag(SM.F).real), p.eigenvalues(4))


@pytest.mark.parametrize("h", [Constant(((1.0, 0.3), (0.3, -0.5))), CosMode(((1.0, 0.3), (0.3, -0.5)), (1, 0))])
def test_fprime_matches_fd(h):
    p = TorusProblem(2, G2, K=6)
    SM = build_matrices(p, h)
    d = 1e-5
    Fp = build_matrices(p, h, d).F
    Fm = build_matrices(p, h, -d).F
    assert np.max(np.abs((Fp - Fm) / (2 * d) - SM.Fp)) < 1e-7
    assert np.max(np.abs((Fp - 2 * SM.F + Fm) / d ** 2 - SM.Fpp)) < 1e-3


def test_psi_continuity():
    s = mpmath.mpf("1.3")
    assert abs(psi_s(1, s) - (s + 1)) < 1e-25
    assert abs(psi_s(1 + mpmath.mpf("1e-5"), s) - psi_s(1 + mpmath.mpf("2e-4"), s)) < 1e-3
    assert psi_s(0, s) == 0


# -- Hessians --------------------------------------------------------------

def test_spectral_vs_fd_circle_cos_mode():
    p = TorusProblem(1, K=32)
    h = CosMode(((1.0,),), (3,))
    a, terms = hessian_spectral(p, h, 3, return_terms=True)
    assert abs(a - sum(terms)) < 1e-12 * abs(a)
    assert abs(terms[1]) > 0
    assert abs(a / fd_hessian(p, h, 3) - 1) < 1e-6


def test_spectral_vs_fd_circle_constant():
    p = TorusProblem(1, K=32)
    h = Constant(((1.0,),))
    assert abs(hessian_spectral(p, h, 3) / fd_hessian(p, h, 3) - 1) < 1e-6


def test_circle_hessian_independent_of_mode():
    p = TorusProblem(1)
    vals = [fd_hessian(p, CosMode(((1.0,),), (m,)), mpmath.mpf("0.8"), delta=1e-6, dps=40)
            for m in (2, 5, 11)]
    assert abs(vals[0] - vals[1]) < 1e-12 and abs(vals[0] - vals[2]) < 1e-12
    assert abs(vals[0] - mpmath.mpf("-0.355820817444014721")) < 1e-10


def test_spectral_vs_fd_torus_constant():
    p = TorusProblem(2, G2, K=10)
    h = Constant(((1.0, 0.3), (0.3, -0.5)))
    a = hessian_spectral(p, h, 4)
    b = fd_hessian(p, h, 4)
    assert abs(a / b - 1) < 1e-6


def test_spectral_vs_fd_torus_cos_mode():
    # float eigen-decompositions limit this route to about 1e-5
    p = TorusProblem(2, G2, K=10)
    h = CosMode(((1.0, 0.0), (0.0, 0.0)), (1, 0))
    a = hessian_spectral(p, h, 3)
    b = fd_hessian(p, h, 3, delta=1e-3)
    assert abs(a / b - 1) < 5e-5


def test_first_variation():
    # truncated spectral sum against the exact lattice sum
    p = TorusProblem(2, G2, K=10)
    h = Constant(((1.0, 0.3), (0.3, -0.5)))
    assert abs(first_variation(p, h, 6) / fd_first_variation(p, h, 6) - 1) < 1e-8


def test_mixed_conformal_scaling():
    # Zcal(lambda g) = lambda^s Zcal(g), so d_sigma d_tau = (s - 1) d_sigma
    p = TorusProblem(2, G2, K=6)
    h = Constant(((1.0, 0.3), (0.3, -0.5)))
    s = mpmath.mpf(3)
    mixed = fd_mixed_conformal(p, h, s)
    assert abs(mixed / ((s - 1) * fd_first_variation(p, h, s)) - 1) < 1e-7


def test_intrinsic_w_circle():
    p = TorusProblem(1)
    assert np.allclose(intrinsic_w(p, Constant(((1.0,),))), [[-0.75]])


def test_intrinsic_correction_cos_mode_is_half_constant():
    p = TorusProblem(1, K=16)
    c = intrinsic_correction(p, CosMode(((1.0,),), (3,)), 3)
    w = first_variation(p, Constant(((-0.75,),)), 3)
    assert abs(c - w / 2) < 1e-12 * abs(w)


# -- heat traces -------------------------------------------------------------

def test_heat_trace_weyl_leading():
    p = TorusProblem(2, G2)
    t = 1e-3
    assert abs(heat_trace(p, t) * (4 * math.pi * t) / p.volume - 1) < 1e-6
    assert abs(weyl_ratio(TorusProblem(2, G2, K=60), 1500.0) - 1) < 0.02


def test_heat_second_variation_small_time():
    p = TorusProblem(1)
    h = CosMode(((1.0,),), (3,))
    pred = heat_trace_leading_prediction(p, h)
    assert abs(pred - 3 * math.sqrt(math.pi) / 8) < 1e-10
    devs = [abs(t ** 2.5 * heat_trace_second_variation(p, h, t / 2, t / 2) / pred - 1)
            for t in (1e-2, 1e-3, 1e-4)]
    assert devs[0] > devs[1] > devs[2] and devs[2] < 1e-3


def test_heat_second_variation_torus():
    p = TorusProblem(2)
    h = CosMode(((1.0, 0.0), (0.0, 0.0)), (2, 0))
    pred = heat_trace_leading_prediction(p, h)
    t = 1e-3
    val = t ** 3 * heat_trace_second_variation(p, h, t / 2, t / 2)
    assert abs(val / pred - 1) < 5e-3


# -- exponent fit -------------------------------------------------------------

def test_nonlocal_fit_recovers_synthetic():
    s = mpmath.mpf("0.8")
    ms = list(range(8, 65, 4))
    vals = [3 * m ** 2 - 2 * m + 5 + mpmath.mpf("0.7") * mpmath.mpf(m) ** (1 - 2 * s) for m in ms]
    res = nonlocal_exponent_fit(ms, vals, 1, s)
    assert abs(res["u"] - mpmath.mpf("0.7")) < 1e-9
    # n - 2s = 0 duplicates the constant column
    with pytest.warns(UserWarning), pytest.raises(ValueError):
        nonlocal_exponent_fit(ms, vals, 1, mpmath.mpf("0.5"))
