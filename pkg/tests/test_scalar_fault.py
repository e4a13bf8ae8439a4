import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from flipbound import float_anatomy as fa
from flipbound import scalar_fault as sf
from flipbound.scalar_fault import Outcome

normal = st.builds(lambda s, e, m: fa.from_bits((s << 63) | (e << 52) | m),
                   st.integers(0, 1), st.integers(1, 2046), st.integers(0, 2**52 - 1))


def test_enumerate_gives_64_records_in_bit_order():
    recs = sf.enumerate_perturbations(3.25)
    assert [r.bit for r in recs] == list(range(64))
    assert all(fa.to_bits(r.perturbed) == fa.to_bits(3.25) ^ (1 << r.bit) for r in recs)


def test_enumerate_rejects_non_finite():
    for x in (math.inf, math.nan):
        with pytest.raises(ValueError):
            sf.enumerate_perturbations(x)


def test_markers():
    recs = sf.enumerate_perturbations(1.0)
    assert recs[62].outcome is Outcome.NON_NUMERIC and recs[62].abs_error is None
    recs = sf.enumerate_perturbations(2.0)
    assert recs[62].outcome is Outcome.ZERO_OR_SUBNORMAL and recs[62].abs_error == 2
    # 3.0 lands on a subnormal; its error is taken as |x|
    recs = sf.enumerate_perturbations(3.0)
    assert recs[62].outcome is Outcome.ZERO_OR_SUBNORMAL and recs[62].abs_error == 3


def test_closed_form_examples():
    assert sf.scalar_abs_error(0.25, 63) == Fraction(1, 2)
    # bit 52 of 1.0 is set, so the 1->0 row applies: 1.0 -> 0.5
    assert sf.scalar_abs_error(1.0, 52) == Fraction(1, 2)
    # 0->1 row with j = 0: 0.5 -> 1.0 and 2.0 -> 4.0
    assert sf.scalar_abs_error(0.5, 52) == Fraction(1, 2)
    assert sf.scalar_abs_error(2.0, 52) == 2
    assert sf.scalar_abs_error(0.5, 53) == Fraction(3, 8)
    assert sf.scalar_abs_error(1.0, 62) is Outcome.NON_NUMERIC


def test_closed_form_rejects_zero():
    with pytest.raises(ValueError):
        sf.scalar_abs_error(0.0, 52)


def test_delta_order():
    # 0.5 has biased exponent 01111111110
    assert sf.delta_order(0.5, 52) == 1
    assert sf.delta_order(0.5, 53) == -2
    assert sf.delta_order(0.5, 62) == 1024
    assert sf.delta_order(0.5, 10) == 0
    assert sf.delta_order(0.5, 63) == 1


def test_huge_error_is_exact():
    # a float subtraction would round this to 2**1022
    rec = sf.perturb(0.25, 62)
    assert rec.perturbed == 2.0**1022
    assert rec.abs_error == Fraction(2) ** 1022 - Fraction(1, 4)
    assert rec.abs_error_float == 2.0**1022


def test_table1_mantissa_form_bounds_exact():
    for x in (1.0, 1.75, 0.3, 1e300):
        for k in (0, 20, 51):
            assert sf.scalar_abs_error(x, k) < sf.loose_mantissa_bound(x, k)


@given(normal, st.integers(52, 63))
def test_closed_form_equals_literal_flip(x, bit):
    rec = sf.perturb(x, bit)
    closed = sf.scalar_abs_error(x, bit)
    if rec.outcome is Outcome.NON_NUMERIC:
        assert closed is Outcome.NON_NUMERIC
    elif rec.outcome is Outcome.NUMERIC:
        assert closed == rec.abs_error


@given(normal, st.integers(0, 51))
def test_mantissa_closed_form_is_exact(x, bit):
    assert sf.scalar_abs_error(x, bit) == sf.perturb(x, bit).abs_error


@given(normal)
def test_sign_flip_law(x):
    assert sf.perturb(x, 63).abs_error == 2 * abs(Fraction(x))


@given(normal.filter(lambda x: abs(x) < 1), st.integers(0, 51))
def test_small_values_small_mantissa_and_sign_errors(x, bit):
    assert sf.perturb(x, bit).abs_error < 1
    assert sf.perturb(x, 63).abs_error < 2


@given(st.integers(1, 2046), st.integers(0, 2**52 - 1), st.integers(0, 2**52 - 1), st.integers(52, 62))
def test_delta_order_ignores_mantissa(e, m1, m2, bit):
    x1 = fa.from_bits((e << 52) | m1)
    x2 = fa.from_bits((e << 52) | m2)
    assert sf.delta_order(x1, bit) == sf.delta_order(x2, bit)


@given(normal, st.integers(52, 62))
def test_delta_order_matches_exponent_change(x, bit):
    y = fa.flip_bit(x, bit)
    assert fa.decompose(y).biased_exponent - fa.decompose(x).biased_exponent == sf.delta_order(x, bit)


@pytest.mark.parametrize("x, expected", [
    (2.0, [2, 3, 5, 9, 17, 33, 65, 129, 257, 513, None]),
    (4.0, [1, 4, 6, 10, 18, 34, 66, 130, 258, 514, -1022]),
    (8.0, [4, 1, 7, 11, 19, 35, 67, 131, 259, 515, -1021]),
    (0.5, [0, -3, -5, -9, -17, -33, -65, -129, -257, -513, 1023]),
    (0.25, [-3, 0, -6, -10, -18, -34, -66, -130, -258, -514, 1022]),
    (0.125, [-2, -1, -7, -11, -19, -35, -67, -131, -259, -515, 1021]),
])
def test_exponent_flip_sets_of_powers_of_two(x, expected):
    got = [r.perturbed for r in sf.enumerate_perturbations(x)[52:63]]
    want = [0.0 if e is None else math.ldexp(1.0, e) for e in expected]
    assert got == want
    assert got == [fa.flip_bit(x, k) for k in range(52, 63)]
