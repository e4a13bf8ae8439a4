"""All 64 single-bit perturbations of one binary64 scalar.

Errors are carried as exact :class:`fractions.Fraction` values.  An error
such as ``|0.25 - 2**1021|`` is finite but would lose every low-order bit
in a float subtraction, so nothing here subtracts in floating point.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

from . import float_anatomy as fa
from .float_anatomy import Region, ValueKind


class Outcome(enum.Enum):
    NUMERIC = "numeric"
    NON_NUMERIC = "non-numeric"
    ZERO_OR_SUBNORMAL = "zero-or-subnormal"


def exact_value(x: float) -> Fraction:
    if not math.isfinite(x):
        raise ValueError(f"no exact value for {x!r}")
    return Fraction(x)


def fraction_to_float(q: Fraction) -> float:
    """Round an exact value to binary64, giving inf instead of raising."""
    try:
        return float(q)
    except OverflowError:
        return math.inf if q > 0 else -math.inf


@dataclass(frozen=True)
class PerturbationRecord:
    bit: int
    original: float
    perturbed: float
    outcome: Outcome
    abs_error: Fraction | None  # None only for NON_NUMERIC
    delta_order: int

    @property
    def region(self) -> Region:
        return fa.bit_region(self.bit)

    @property
    def abs_error_float(self) -> float:
        if self.abs_error is None:
            return math.inf
        return fraction_to_float(self.abs_error)


def delta_order(x: float, bit: int) -> int:
    """Change in order of magnitude caused by flipping ``bit`` of ``x``.

    Zero for mantissa bits, +1 for the sign bit, and +/-2**j for exponent
    bit ``j`` depending on whether that bit was clear or set.
    """
    region = fa.bit_region(bit)
    if region is Region.MANTISSA:
        return 0
    if region is Region.SIGN:
        return 1
    j = bit - fa.MANTISSA_BITS
    was_set = (fa.to_bits(x) >> bit) & 1
    return -(1 << j) if was_set else (1 << j)


def perturb(x: float, bit: int) -> PerturbationRecord:
    if not math.isfinite(x):
        raise ValueError(f"cannot enumerate perturbations of non-finite {x!r}")
    y = fa.flip_bit(x, bit)
    kind = fa.decompose(y).kind
    if kind in (ValueKind.INFINITY, ValueKind.NAN):
        outcome, err = Outcome.NON_NUMERIC, None
    elif kind in (ValueKind.ZERO, ValueKind.SUBNORMAL) and fa.bit_region(bit) is Region.EXPONENT:
        # the residue below 2**-1022 is ignored
        outcome, err = Outcome.ZERO_OR_SUBNORMAL, abs(exact_value(x))
    else:
        outcome, err = Outcome.NUMERIC, abs(exact_value(x) - exact_value(y))
    return PerturbationRecord(bit, x, y, outcome, err, delta_order(x, bit))


def enumerate_perturbations(x: float) -> list[PerturbationRecord]:
    """One record per bit, least significant first."""
    return [perturb(x, k) for k in range(64)]


def _pow2(e: int) -> Fraction:
    return Fraction(2) ** e


def lambda_exp(x: float) -> Fraction:
    """Power-of-two part of a normal ``x``: ``2**(biased_exponent - 1023)``."""
    return _pow2(fa.decompose(x).unbiased_exponent)


def scalar_abs_error(x: float, bit: int) -> Fraction | Outcome:
    """Closed-form absolute error of flipping ``bit`` in ``x``.

    Exponent bit j set:    |x (1 - 2**-(2**j))|
    Exponent bit j clear:  |x (1 - 2**(2**j))|
    Sign:                  |2x|
    Mantissa bit k:        lambda_exp * 2**(k - 52), the exact change.
    :func:`loose_mantissa_bound` gives a looser closed form.

    Returns ``Outcome.NON_NUMERIC`` when the flip lands on exponent 2047.
    """
    if x == 0 or not math.isfinite(x):
        raise ValueError(f"closed form needs finite nonzero input, got {x!r}")
    an = fa.decompose(x)
    lam = abs(exact_value(x))
    region = fa.bit_region(bit)
    if region is Region.SIGN:
        return 2 * lam
    if region is Region.MANTISSA:
        if an.kind is ValueKind.SUBNORMAL:
            return _pow2(bit - 1074)
        return lambda_exp(x) * _pow2(bit - fa.MANTISSA_BITS)
    j = bit - fa.MANTISSA_BITS
    if (an.biased_exponent >> j) & 1:
        return lam * (1 - _pow2(-(1 << j)))
    if an.biased_exponent + (1 << j) == fa.EXPONENT_ALL_ONES:
        return Outcome.NON_NUMERIC
    return lam * (_pow2(1 << j) - 1)


def loose_mantissa_bound(x: float, bit: int) -> Fraction:
    """Loose mantissa-flip bound ``|lambda_exp (1 + 2**(k-52))|``."""
    if fa.bit_region(bit) is not Region.MANTISSA:
        raise ValueError("mantissa bits only")
    return lambda_exp(x) * (1 + _pow2(bit - fa.MANTISSA_BITS))


def exponent_perturbed_values(x: float) -> list[float]:
    """Values produced by flipping each of the 11 exponent bits, bit 52 first."""
    return [fa.flip_bit(x, k) for k in range(fa.MANTISSA_BITS, fa.SIGN_BIT)]


def format_pow2(y: float) -> str:
    """Render a power of two as ``2^e``; other values with ``repr``."""
    if y == 0:
        return "0"
    if not math.isfinite(y):
        return repr(y)
    m, e = math.frexp(abs(y))
    sign = "-" if y < 0 else ""
    if m == 0.5:
        return f"{sign}2^{e - 1}"
    return repr(y)
