from fractions import Fraction

import pytest

from hesszeta.rational import Poly, PoleError, RationalInS, as_fraction, eval_rational


def test_as_fraction_accepts_strings_and_ints():
    assert as_fraction("3/4") == Fraction(3, 4)
    assert as_fraction(2) == Fraction(2)


def test_poly_arithmetic_and_division():
    a = Poly([1, 1])          # 1 + S
    b = Poly([-1, 0, 1])      # S^2 - 1
    q, r = b.divmod(a)
    assert q == Poly([-1, 1]) and r.is_zero()
    assert (a * a) == Poly([1, 2, 1])
    assert a.gcd(b) == Poly([1, 1])
    assert Poly.from_roots([Fraction(1, 2), 3]).rational_roots() == [Fraction(1, 2), 3]


def test_root_multiplicity():
    p = Poly.from_roots([2, 2, Fraction(-1, 3)])
    assert p.root_multiplicity(2) == 2
    assert p.root_multiplicity(Fraction(-1, 3)) == 1
    assert p.root_multiplicity(0) == 0


def test_rational_reduces_and_keeps_pole_candidates():
    r = RationalInS(Poly([-1, 0, 1]), Poly([1, 1]))
    assert r.den == Poly.const(1)
    assert r.num == Poly([-1, 1])
    assert Fraction(-1) in r.pole_set
    assert r.poles() == []


def test_rational_field_operations():
    x = RationalInS(Poly([0, 1]), Poly([1, 1]))   # S/(S+1)
    y = RationalInS.const(Fraction(1, 2))
    z = (x + y) * x / x - y
    assert z == x
    assert eval_rational(x, "1/2") == Fraction(1, 3)


def test_c_power_tracks_through_products():
    a = RationalInS.const(2, c_power=1)
    b = RationalInS.const(3, c_power=1)
    assert (a * b).c_power == 2
    assert (a + b).c_power == 1
    with pytest.raises(ValueError):
        _ = a + RationalInS.const(1, c_power=2)


def test_eval_at_pole_raises():
    x = RationalInS(Poly([1]), Poly([-2, 1]))
    with pytest.raises(PoleError):
        eval_rational(x, 2)


def test_json_round_trip():
    x = RationalInS(Poly([Fraction(1, 3), 2]), Poly([5, 0, 1]), c_power=1)
    assert RationalInS.from_json(x.to_json()) == x


def test_pretty():
    assert "S" in RationalInS.poly(Poly([0, 4, 16])).pretty()
