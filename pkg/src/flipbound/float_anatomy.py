"""Bit-level anatomy of IEEE-754 binary64 values.

A double is stored as one sign bit (63), an 11-bit biased exponent (62..52)
and a 52-bit mantissa (51..0).  For normal numbers

    |x| = (1 + mantissa * 2**-52) * 2**(biased_exponent - 1023)

Everything here works on the raw 64-bit pattern, so NaN payloads and signed
zeros survive a round trip.  The ``*_array`` helpers are the vectorised
equivalents used by the Monte Carlo driver and the property tests.
"""
from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass

import numpy as np

MANTISSA_BITS = 52
EXPONENT_BITS = 11
BIAS = 1023
SIGN_BIT = 63
TOP_EXPONENT_BIT = 62
EXPONENT_ALL_ONES = 2047
MANTISSA_MASK = (1 << MANTISSA_BITS) - 1
EXPONENT_MASK = EXPONENT_ALL_ONES << MANTISSA_BITS


class ValueKind(enum.Enum):
    ZERO = "zero"
    SUBNORMAL = "subnormal"
    NORMAL = "normal"
    INFINITY = "infinity"
    NAN = "nan"


class Region(enum.Enum):
    MANTISSA = "mantissa"
    EXPONENT = "exponent"
    SIGN = "sign"


def bit_region(k: int) -> Region:
    """Storage region of bit index ``k`` (0 = least significant mantissa bit)."""
    if not 0 <= k <= 63:
        raise ValueError(f"bit index {k} outside [0, 63]")
    if k < MANTISSA_BITS:
        return Region.MANTISSA
    if k < SIGN_BIT:
        return Region.EXPONENT
    return Region.SIGN


def to_bits(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", x))[0]


def from_bits(bits: int) -> float:
    return struct.unpack("<d", struct.pack("<Q", bits & 0xFFFF_FFFF_FFFF_FFFF))[0]


def _kind(biased_exponent: int, mantissa: int) -> ValueKind:
    if biased_exponent == 0:
        return ValueKind.ZERO if mantissa == 0 else ValueKind.SUBNORMAL
    if biased_exponent == EXPONENT_ALL_ONES:
        return ValueKind.INFINITY if mantissa == 0 else ValueKind.NAN
    return ValueKind.NORMAL


@dataclass(frozen=True)
class FloatAnatomy:
    sign: int
    biased_exponent: int
    mantissa: int
    kind: ValueKind

    @property
    def bits(self) -> int:
        return (self.sign << SIGN_BIT) | (self.biased_exponent << MANTISSA_BITS) | self.mantissa

    @property
    def unbiased_exponent(self) -> int:
        # subnormals share the exponent of the smallest normal
        return max(self.biased_exponent, 1) - BIAS

    @property
    def exponent_pattern(self) -> str:
        return format(self.biased_exponent, "011b")

    def reconstruct(self) -> float:
        return from_bits(self.bits)


def decompose_bits(bits: int) -> FloatAnatomy:
    sign = (bits >> SIGN_BIT) & 1
    biased = (bits >> MANTISSA_BITS) & EXPONENT_ALL_ONES
    mantissa = bits & MANTISSA_MASK
    return FloatAnatomy(sign, biased, mantissa, _kind(biased, mantissa))


def decompose(x: float) -> FloatAnatomy:
    """Split ``x`` into sign, biased exponent, mantissa and value kind."""
    return decompose_bits(to_bits(x))


def reconstruct(anatomy: FloatAnatomy) -> float:
    return anatomy.reconstruct()


def flip_bits_pattern(bits: int, k: int) -> int:
    bit_region(k)
    return bits ^ (1 << k)


def flip_bit(x: float, k: int) -> float:
    """Return ``x`` with bit ``k`` of its storage inverted.

    Inf, NaN and subnormal results are returned as they are; callers decide
    how to classify them.
    """
    return from_bits(flip_bits_pattern(to_bits(x), k))


def order_of_magnitude_exponent(x: float) -> int:
    """Integer ``E`` with ``2**(E-1) <= |x| < 2**E`` for finite nonzero ``x``."""
    if x == 0 or not math.isfinite(x):
        raise ValueError(f"order of magnitude undefined for {x!r}")
    return math.frexp(x)[1]


def order_of_magnitude_bound(x: float) -> float:
    """Next power of two strictly above ``|x|``.

    For a normal number this is ``2**(unbiased_exponent + 1)``.  Raises
    ``OverflowError`` when the bound is ``2**1024``.
    """
    return math.ldexp(1.0, order_of_magnitude_exponent(x))


# -- vectorised helpers --------------------------------------------------------

def as_bits(values) -> np.ndarray:
    return np.ascontiguousarray(values, dtype=np.float64).view(np.uint64)


def as_floats(bits) -> np.ndarray:
    return np.ascontiguousarray(bits, dtype=np.uint64).view(np.float64)


def flip_bit_array(values, k: int) -> np.ndarray:
    bit_region(k)
    return as_floats(as_bits(values) ^ np.uint64(1 << k))


def decompose_array(values) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (sign, biased_exponent, mantissa) arrays for float64 input."""
    bits = as_bits(values)
    sign = (bits >> np.uint64(SIGN_BIT)).astype(np.int64)
    biased = ((bits >> np.uint64(MANTISSA_BITS)) & np.uint64(EXPONENT_ALL_ONES)).astype(np.int64)
    mantissa = bits & np.uint64(MANTISSA_MASK)
    return sign, biased, mantissa


def compose_array(sign, biased_exponent, mantissa) -> np.ndarray:
    bits = (
        (np.asarray(sign, dtype=np.uint64) << np.uint64(SIGN_BIT))
        | (np.asarray(biased_exponent, dtype=np.uint64) << np.uint64(MANTISSA_BITS))
        | (np.asarray(mantissa, dtype=np.uint64) & np.uint64(MANTISSA_MASK))
    )
    return as_floats(bits)


def biased_exponents(values) -> np.ndarray:
    return decompose_array(values)[1]
