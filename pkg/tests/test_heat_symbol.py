import math
from fractions import Fraction

import mpmath
import pytest

from hesszeta.expr import expr_equal
from hesszeta.gamma_rational import ConstraintError
from hesszeta.heat_symbol import (PATTERNS, ImaginaryResidueError, TaylorDatum, U_s_ell,
                                  check_theorem2, e_part, gaussian_xi_derivative, hermite_P,
                                  sigma_term, taylor_data_from_uv, theorem2_reference,
                                  theorem2_table, us_term, uv_integrate)


def _gauss_w(t, w):
    return mpmath.exp(-sum(x * x for x in w) / (4 * t))


@pytest.mark.parametrize("labels", [(1,), (1, 1), (1, 2), (1, 1, 2), (1, 2, 2, 1)])
def test_hermite_P_matches_numeric_derivative(labels):
    t = mpmath.mpf("0.7")
    w = [mpmath.mpf("0.3"), mpmath.mpf("-0.45")]
    order = [labels.count(1), labels.count(2)]
    d = mpmath.diff(lambda a, b: _gauss_w(t, [a, b]), w, order)
    expect = d * mpmath.exp(sum(x * x for x in w) / (4 * t))
    got = hermite_P(labels).evaluate(t, w)
    assert abs(got - expect) < 1e-10


def test_hermite_P_second_order_closed_form():
    # P(d_j d_k) = w_j w_k / 4t^2 - delta_jk / 2t
    P = hermite_P(("j", "k"))
    t = Fraction(1, 3)
    w = [Fraction(2), Fraction(5)]
    assert P.evaluate(t, w, {"j": 1, "k": 2}) == Fraction(10) / (4 * t * t)
    assert P.evaluate(t, w, {"j": 1, "k": 1}) == Fraction(4) / (4 * t * t) - 1 / (2 * t)


@pytest.mark.parametrize("mu", [(1,), (1, 2), (2, 2), (1, 1, 2)])
def test_gaussian_derivative_numeric(mu):
    n, u, v = 2, 0.6, 1.1
    xi = [0.4, -0.9]
    lam = u * v / (u + v)

    def G(a, b):
        return (4 * mpmath.pi) ** (-n / 2) * (u + v) ** (-n / 2) * mpmath.exp(-(a * a + b * b) * lam)

    order = [mu.count(1), mu.count(2)]
    expect = mpmath.diff(G, xi, order)
    assert abs(gaussian_xi_derivative(mu).evaluate(u, v, xi, n) - float(expect)) < 1e-9


def test_e_part_imaginary_residue():
    _, res = e_part(("j",), ())
    assert res == 1
    _, res = e_part(("j",), ("k",))
    assert res == 0


def test_sigma_term_rejects_odd_total():
    with pytest.raises(ImaginaryResidueError):
        sigma_term(("j",), (), (), ())


def test_sigma_swap_symmetry():
    # exchanging the two operator slots swaps u and v
    a = sigma_term(("j",), ("k",), ("p",), ("q",))
    b = sigma_term(("p",), ("q",), ("j",), ("k",)).relabel({})
    assert a.swap_uv() == b


def test_uv_integrate_of_G():
    # integral of (u+v)^{s} G / Gamma(S) = (16S^2 - 4) C |xi|^{n-2s-4}
    from hesszeta.heat_symbol import UVExpr, UVTerm
    e = uv_integrate(UVExpr((UVTerm(Fraction(1), 0, 0, 0),)))
    (t,) = e.terms
    assert t.e == -4 and t.coeff.num.c == (-4, 0, 16)


def test_theorem2_all_patterns():
    res = check_theorem2()
    assert res == {k: True for k in "abcdef"}


def test_theorem2_parallel_matches_serial():
    a = theorem2_table(parallel=False)
    b = theorem2_table(parallel=True)
    assert all(expr_equal(a[k], b[k]) for k in a)


def test_pattern_a_leading_coefficient():
    ref = theorem2_reference()["a"]
    assert expr_equal(us_term(*PATTERNS["a"]), ref)


def test_taylor_datum_route_matches_direct():
    from hesszeta.heat_symbol import UVExpr, UVTerm
    # ell = 0 datum set: 2(a + b - r) = |nu|
    data = [TaylorDatum(1, 1, ("j", "k"), Fraction(3), r=1), TaylorDatum(0, 1, (), Fraction(-1), r=1),
            TaylorDatum(1, 1, (), Fraction(1, 2), (("j", "k"),), r=2)]
    # ell = 1 datum set: 2(a + b - r) = 1 + |nu|
    data1 = [TaylorDatum(1, 1, ("j",), Fraction(2)), TaylorDatum(2, 1, ("j", "k", "p"), Fraction(1), r=1)]
    direct = uv_integrate(UVExpr((UVTerm(Fraction(2), 1, 1, 1, ("j",)),
                                  UVTerm(Fraction(1), 2, 1, 1, ("j", "k", "p")))))
    assert expr_equal(U_s_ell(data1, 1), direct)
    direct0 = uv_integrate(UVExpr((UVTerm(Fraction(3), 1, 1, 1, ("j", "k")),
                                   UVTerm(Fraction(-1), 0, 1, 1),
                                   UVTerm(Fraction(1, 2), 1, 1, 2, (), (("j", "k"),)))))
    assert expr_equal(U_s_ell(data, 0), direct0)


def test_taylor_data_round_trip_on_sigma():
    sig = sigma_term(*PATTERNS["c"])
    data = taylor_data_from_uv(sig)
    assert len(data) == len(sig)


def test_taylor_datum_constraints():
    with pytest.raises(ConstraintError):
        U_s_ell([TaylorDatum(-1, 0)], 0)
    with pytest.raises(ConstraintError):
        U_s_ell([TaylorDatum(1, 1, ("j",))], 0)   # inhomogeneous
    with pytest.raises(ConstraintError):
        U_s_ell([TaylorDatum(3, 3, ("j", "k", "p", "q"), r=1)], 0)
