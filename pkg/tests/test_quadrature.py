import math

import mpmath
import pytest

from hesszeta.quadrature import (DivergenceError, SplitInput, check_eq_1_20, convergence_table,
                                 lemma65_split, mellin_continued, pattern_quadrature_check,
                                 remainder_exponent_fit, remainder_leading, split_reconstruct,
                                 split_sigma, tau_expansion, tau_expansion_fit, tau_integral,
                                 tau_integral_closed, tau_taylor, uv_full_quadrature,
                                 uv_truncated_vs_full)


@pytest.mark.parametrize("T", ["1e-4", "0.5", "7", "300", "1e5"])
def test_tau_integral_routes_agree(T):
    T = mpmath.mpf(T)
    with mpmath.workdps(30):
        assert abs(tau_integral(T) / tau_integral_closed(T) - 1) < 1e-20


def test_tau_taylor_and_expansion_coefficients():
    assert tau_taylor(3) == [1, mpmath.mpf(-1) / 6, mpmath.mpf(2) / 120]
    assert tau_expansion(4) == [2, 4, 24, 240]


def test_tau_expansion_fit():
    fit = tau_expansion_fit(5)
    assert abs(fit["coeffs"][0] - 2) < 1e-6
    assert abs(fit["coeffs"][1] / 4 - 1) < 1e-4
    assert fit["cond"] < 1e5


def test_mellin_continued_gamma():
    # int T^a e^{-T} dT = Gamma(a+1), continued below a = -1
    small = [mpmath.mpf((-1) ** j) / math.factorial(j) for j in range(12)]
    for a in ("0.3", "-1.4", "-2.7"):
        a = mpmath.mpf(a)
        got = mellin_continued(lambda T: mpmath.exp(-T), a, small=small, T1=120, dps=30)
        assert abs(got / mpmath.gamma(a + 1) - 1) < 1e-15


@pytest.mark.parametrize("n", [1, 3, 5])
def test_eq_gamma_integral_in_strip(n):
    s = mpmath.mpf(n) / 2 - 1 - mpmath.mpf("0.8")
    r = check_eq_1_20(n, s, dps=20)
    assert r["rel_error"] < 1e-12


def test_eq_gamma_integral_outside_strip():
    with pytest.raises(DivergenceError):
        check_eq_1_20(3, mpmath.mpf("0.7"))
    r = check_eq_1_20(3, mpmath.mpf("0.7"), continuation=True, dps=20)
    assert r["rel_error"] < 1e-12


def test_split_exponential_kernel():
    # Q = exp(-T): u_0 = Gamma(S+1), no V part
    n, s = 3, mpmath.mpf("1.2")
    r = lemma65_split(SplitInput(lambda t, T: mpmath.exp(-T), n, s), k_max=0, l_max=1, dps=20)
    S = s - mpmath.mpf(n) / 2
    assert abs(r["u"][0] / mpmath.gamma(S + 1) - 1) < 1e-12
    assert all(abs(v) < 1e-20 for v in r["v"])


def test_split_tau_kernel_and_reconstruction():
    n, s = 3, mpmath.mpf("1.2")
    inp = SplitInput(lambda t, T: tau_integral_closed(T, 20), n, s)
    assert inp.check_decay()
    r = lemma65_split(inp, k_max=0, l_max=2, dps=20)
    S = r["S"]
    # v_l = C_{l+1} / (S - l)
    C = tau_expansion(3)
    for l in range(3):
        assert abs(r["v"][l] / (C[l] / (S - l)) - 1) < 1e-3
    for xn in (30, 100):
        direct = split_sigma(inp, xn, dps=20)
        approx = split_reconstruct(r, xn, 0, 2)
        assert abs(direct - approx) < 1e-6 * abs(direct)


@pytest.mark.parametrize("pqr", [(0, 0, 0), (0, 1, 1), (2, 1, 3), (1, 1, 2)])
def test_full_quadrant_matches_closed_form(pqr):
    p, q, r = pqr
    lo, hi = r - p - q - 2, r - max(p, q) - 1
    S = lo + (hi - lo) * mpmath.mpf("0.4")
    s = S + mpmath.mpf(3) / 2
    a = uv_full_quadrature(p, q, r, 3, s)
    b = uv_truncated_vs_full(p, q, r, 3, s)["full"]
    assert abs(a / b - 1) < 1e-10


def test_full_quadrant_divergence():
    with pytest.raises(DivergenceError):
        uv_full_quadrature(0, 0, 0, 3, mpmath.mpf(3))


def test_remainder_decay_and_leading_term():
    fit = remainder_exponent_fit(0, 0, 0, 3, mpmath.mpf("0.7"))
    assert abs(fit["exponent"] + 2) < 0.05
    s = mpmath.mpf("0.7")
    rem = uv_truncated_vs_full(0, 0, 0, 3, s, 40)["remainder"]
    assert abs(rem / remainder_leading(0, 0, 0, 3, s, 40) - 1) < 1e-6


@mpmath.workdps(30)
def test_remainder_residue_at_pole():
    # near S = 1 the remainder behaves like -24 (4 pi)^{-n/2} |xi|^{-6} / (S - 1)
    # the large-|xi| series is asymptotic, so probe at |xi| = 10
    n, xn = 3, mpmath.mpf(10)
    eps = mpmath.mpf("1e-12")
    s = 1 + eps + mpmath.mpf(n) / 2
    val = remainder_leading(0, 0, 0, n, s, xn, terms=6) * eps
    expect = -24 * (4 * mpmath.pi) ** (-mpmath.mpf(n) / 2) * xn ** -6
    assert abs(val / expect - 1) < 1e-6


@pytest.mark.parametrize("label", list("abcdef"))
def test_pattern_quadrature(label):
    for row in pattern_quadrature_check(label):
        assert row["rel_error"] < 1e-10


def test_convergence_table_orders():
    rows = convergence_table(math.exp, 0.0, 1.0, math.e - 1, degree=2)
    assert rows[-1]["observed_order"] == pytest.approx(4, abs=0.2)
