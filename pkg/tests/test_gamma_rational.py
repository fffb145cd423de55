from fractions import Fraction

import mpmath
import pytest

from hesszeta.gamma_rational import (C_of_s, ConstraintError, Ctilde_exact, GammaRatio,
                                     IrreducibleRatioError, check_substitution_table,
                                     in_pole_lattice, pochhammer_reduce, pole_locations,
                                     pole_orders, uv_coefficient, uv_gamma_ratio)
from hesszeta.rational import PoleError, RationalInS, eval_rational


def _ctilde(S):
    return mpmath.gamma(1 - S) ** 2 / mpmath.gamma(2 - 2 * S)


@pytest.mark.parametrize("pqr", [(0, 0, 0), (1, 2, 3), (2, 2, 4), (3, 1, 2), (4, 4, 1)])
@pytest.mark.parametrize("S", ["-0.37", "0.41", "-2.2"])
def test_pochhammer_reduction_matches_gamma_ratio(pqr, S):
    S = mpmath.mpf(S)
    g = uv_gamma_ratio(*pqr)
    coeff, k = pochhammer_reduce(g)
    assert k == 1
    reduced = eval_rational(coeff, float(S)) * _ctilde(S)
    assert abs(reduced / g.evaluate(S) - 1) < 1e-12


def test_irreducible_ratio_raises():
    with pytest.raises(IrreducibleRatioError):
        pochhammer_reduce(GammaRatio.of(num=[(1, Fraction(1, 2))]))
    with pytest.raises(IrreducibleRatioError):
        pochhammer_reduce(GammaRatio.of(num=[(1, 0)]))


def test_uv_constraint():
    with pytest.raises(ConstraintError):
        uv_coefficient(0, 1, 4)
    with pytest.raises(ConstraintError):
        uv_coefficient(-1, 0, 0)


def test_substitution_table():
    assert all(check_substitution_table().values())
    assert len(check_substitution_table()) == 9


def test_offset_rule():
    for p, q, r in [(0, 0, 0), (2, 1, 3), (0, 0, 2)]:
        assert uv_coefficient(p, q, r)[1] == 2 * r - 2 * p - 2 * q - 4


def test_C_values():
    # C~ at S = 0 is 1; n = 2 gives C = 1/(4 pi)
    assert abs(C_of_s(2, 1) - 1 / (4 * mpmath.pi)) < 1e-15
    assert Ctilde_exact(-2) == Fraction(4, 120)
    with pytest.raises(PoleError):
        C_of_s(3, Fraction(5, 2))
    assert C_of_s(1, 2) == 0   # S = 3/2: zero of C


def test_pole_lattice():
    assert in_pole_lattice(Fraction(5, 2), 3)
    assert not in_pole_lattice(Fraction(3, 2), 3)
    assert not in_pole_lattice(Fraction(7, 4), 3)


def test_pole_orders_of_C():
    # C~ alone: double poles of Gamma(1-S)^2 partly cancelled by Gamma(2-2S)
    c = RationalInS.const(1, c_power=1)
    orders = pole_orders(c, window=4)
    assert orders == {1: 1, 2: 1, 3: 1, 4: 1}


def test_uv_coefficient_poles_in_lattice():
    for n in (1, 2, 3):
        for p in range(4):
            for q in range(4):
                for r in range(min(p, q) + 3):
                    for s in pole_locations(uv_coefficient(p, q, r)[0], n):
                        assert in_pole_lattice(s, n)
