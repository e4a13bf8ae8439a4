"""
Anatomy of a binary64 value
===========================

Pull apart a few doubles into sign, biased exponent and mantissa, then
flip single bits and watch what happens to the value.
"""
from flipbound import float_anatomy as fa

# 0.5 is 2**-1: biased exponent 1022, empty mantissa
half = fa.decompose(0.5)
print("0.5 ->", half.exponent_pattern, "biased", half.biased_exponent, "mantissa", hex(half.mantissa))

# the top exponent bit separates [2, inf) from (0, 2)
for x in (2.0, 1.0, 0.5, 1e-300, 5e-324, float("inf")):
    d = fa.decompose(x)
    print(f"{x!r:>10}  {d.exponent_pattern}  {d.kind.value}")

# a flip is an involution: doing it twice gets the original bits back
x = 3.141592653589793
for k in (0, 51, 52, 61, 62, 63):
    y = fa.flip_bit(x, k)
    assert fa.flip_bit(y, k) == x
    print(f"flip bit {k:2d} of pi -> {y!r}")

# order of magnitude of a value, as a power of two
print("order of 1000:", fa.order_of_magnitude_exponent(1000.0), "bound", fa.order_of_magnitude_bound(1000.0))
