import math
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from flipbound import float_anatomy as fa
from flipbound.float_anatomy import Region, ValueKind

patterns = st.integers(min_value=0, max_value=2**64 - 1)
finite_nonzero = st.floats(allow_nan=False, allow_infinity=False).filter(lambda x: x != 0)


@pytest.mark.parametrize("x, sign, exp, mant, kind", [
    (0.5, 0, 1022, 0, ValueKind.NORMAL),
    (1.0, 0, 1023, 0, ValueKind.NORMAL),
    (0.0, 0, 0, 0, ValueKind.ZERO),
    (-0.0, 1, 0, 0, ValueKind.ZERO),
    (5e-324, 0, 0, 1, ValueKind.SUBNORMAL),
    (math.inf, 0, 2047, 0, ValueKind.INFINITY),
    (-2.0, 1, 1024, 0, ValueKind.NORMAL),
    (1.5, 0, 1023, 1 << 51, ValueKind.NORMAL),
])
def test_decompose_examples(x, sign, exp, mant, kind):
    an = fa.decompose(x)
    assert (an.sign, an.biased_exponent, an.mantissa, an.kind) == (sign, exp, mant, kind)


def test_exponent_pattern_of_half():
    assert fa.decompose(0.5).exponent_pattern == "01111111110"


def test_nan_kind_and_payload_survive():
    bits = 0x7FF0_0000_0000_0BAD
    an = fa.decompose_bits(bits)
    assert an.kind is ValueKind.NAN
    assert an.bits == bits
    assert fa.to_bits(fa.flip_bit(fa.flip_bit(fa.from_bits(bits), 3), 3)) == bits


@pytest.mark.parametrize("k, region", [(0, Region.MANTISSA), (51, Region.MANTISSA), (52, Region.EXPONENT),
                                       (62, Region.EXPONENT), (63, Region.SIGN)])
def test_bit_region(k, region):
    assert fa.bit_region(k) is region


@pytest.mark.parametrize("k", [-1, 64])
def test_bit_region_rejects_out_of_range(k):
    with pytest.raises(ValueError):
        fa.bit_region(k)


def test_flip_examples():
    z = fa.flip_bit(2.0, 62)
    assert fa.decompose(z).biased_exponent == 0 and z == 0.0
    assert fa.flip_bit(0.5, 52) == 1.0
    assert fa.flip_bit(fa.flip_bit(math.pi, 17), 17) == math.pi


@pytest.mark.parametrize("x, bound", [(2.12332, 4.0), (1.24568, 2.0), (1.0, 2.0), (0.75, 1.0), (-3.0, 4.0)])
def test_order_of_magnitude_bound(x, bound):
    assert fa.order_of_magnitude_bound(x) == bound


@pytest.mark.parametrize("x", [0.0, math.inf, math.nan])
def test_order_of_magnitude_bound_rejects(x):
    with pytest.raises(ValueError):
        fa.order_of_magnitude_bound(x)


def test_order_of_magnitude_bound_overflow():
    with pytest.raises(OverflowError):
        fa.order_of_magnitude_bound(1.5 * 2.0**1023)


@given(patterns)
def test_roundtrip_any_pattern(bits):
    an = fa.decompose_bits(bits)
    assert an.bits == bits
    assert fa.to_bits(an.reconstruct()) == bits


@given(patterns, st.integers(0, 63))
def test_flip_is_involution_and_single_bit(bits, k):
    x = fa.from_bits(bits)
    y = fa.flip_bit(x, k)
    assert fa.to_bits(y) ^ bits == 1 << k
    assert fa.to_bits(fa.flip_bit(y, k)) == bits


@given(patterns, st.integers(0, 63))
def test_region_correctness(bits, k):
    before = fa.decompose_bits(bits)
    after = fa.decompose_bits(bits ^ (1 << k))
    if k < 52:
        assert (after.sign, after.biased_exponent) == (before.sign, before.biased_exponent)
    elif k == 63:
        assert (after.biased_exponent, after.mantissa) == (before.biased_exponent, before.mantissa)
        assert after.sign != before.sign
    else:
        assert (after.sign, after.mantissa) == (before.sign, before.mantissa)


@given(patterns)
def test_kind_rules(bits):
    an = fa.decompose_bits(bits)
    if an.biased_exponent == 0:
        assert an.kind is (ValueKind.ZERO if an.mantissa == 0 else ValueKind.SUBNORMAL)
    elif an.biased_exponent == 2047:
        assert an.kind in (ValueKind.INFINITY, ValueKind.NAN)
    else:
        x = an.reconstruct()
        assert abs(x) == (1 + an.mantissa * 2.0**-52) * 2.0 ** (an.biased_exponent - 1023)


@given(finite_nonzero)
def test_bound_brackets_value(x):
    try:
        b = fa.order_of_magnitude_bound(x)
    except OverflowError:
        assert abs(x) >= 2.0**1023
        return
    assert abs(x) < b <= 2 * abs(x) or (b == 2.0**-1021 and abs(x) < 2.0**-1022)
    assert math.frexp(b)[0] == 0.5


def test_vectorised_helpers_match_scalar(rng):
    bits = rng.integers(0, 2**63, size=1000, dtype=np.uint64) * np.uint64(2) + rng.integers(0, 2, 1000, dtype=np.uint64)
    vals = fa.as_floats(bits)
    s, e, m = fa.decompose_array(vals)
    for b, si, ei, mi in zip(bits.tolist(), s, e, m):
        an = fa.decompose_bits(b)
        assert (an.sign, an.biased_exponent, an.mantissa) == (si, ei, mi)
    assert np.array_equal(fa.as_bits(fa.compose_array(s, e, m)), bits)
    for k in (0, 30, 52, 62, 63):
        flipped = fa.as_bits(fa.flip_bit_array(vals, k))
        assert np.array_equal(flipped ^ bits, np.full(1000, 1 << k, dtype=np.uint64))


def test_to_bits_matches_struct():
    assert fa.to_bits(1.0) == struct.unpack("<Q", struct.pack("<d", 1.0))[0] == 0x3FF0_0000_0000_0000
