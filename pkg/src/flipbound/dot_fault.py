"""Single-bit faults in a dot product ``c = sum(a_i * b_i)``.

Two routes are provided.  The exact route flips every bit of every
``a_i``, ``b_i`` and intermediate product ``c_i`` and measures the additive
error with rational arithmetic.  The interval route only looks at the
range of biased exponents in each vector and sums precomputed per-cell
counts from :mod:`flipbound.lookup_table`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import float_anatomy as fa
from .float_anatomy import Region
from .lookup_table import (DEFAULT_MODEL, ErrorClass, ErrorClassTally, ErrorLookupTable,
                           ErrorModel, classify_value, get_table)
from .scalar_fault import Outcome, exact_value, fraction_to_float


def dot_product(a: Sequence[float], b: Sequence[float]) -> float:
    """Left-to-right sequential sum of products."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise ValueError("empty vectors")
    acc = 0.0
    for x, y in zip(a, b):
        acc += float(x) * float(y)
    return acc


@dataclass(frozen=True)
class DotPerturbation:
    index: int
    site: str  # "a", "b" or "c"
    bit: int
    original: float
    perturbed: float
    outcome: Outcome
    abs_error: Fraction | None  # additive error in the dot product; None if non-numeric

    @property
    def region(self) -> Region:
        return fa.bit_region(self.bit)

    @property
    def abs_error_float(self) -> float:
        return math.inf if self.abs_error is None else fraction_to_float(self.abs_error)

    def error_class(self, threshold: float) -> ErrorClass:
        if self.abs_error is None:
            return ErrorClass.NON_NUMERIC
        return classify_value(self.abs_error, threshold)


def _outcome(y: float, bit: int) -> Outcome:
    kind = fa.decompose(y).kind
    if kind in (fa.ValueKind.INFINITY, fa.ValueKind.NAN):
        return Outcome.NON_NUMERIC
    if kind in (fa.ValueKind.ZERO, fa.ValueKind.SUBNORMAL) and fa.bit_region(bit) is Region.EXPONENT:
        return Outcome.ZERO_OR_SUBNORMAL
    return Outcome.NUMERIC


def enumerate_dot_errors(a: Sequence[float], b: Sequence[float],
                         arithmetic: str = "exact") -> list[DotPerturbation]:
    """Every single-bit flip of every ``a_i``, ``b_i`` and ``c_i = fl(a_i b_i)``.

    The error of an operand flip is ``|a_i b_i - a~_i b_i|`` evaluated
    exactly; a product flip gives ``|c_i - c~_i|``.  A flip that produces
    Inf or NaN is non-numeric.  With ``arithmetic="binary64"`` a flip whose
    perturbed product overflows in double precision is non-numeric too.
    """
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    a = [float(x) for x in a]
    b = [float(y) for y in b]
    if not all(math.isfinite(x) for x in a + b):
        raise ValueError("dot fault enumeration needs finite inputs")
    out = []
    for idx, (x, y) in enumerate(zip(a, b)):
        c = x * y
        for site, orig, partner in (("a", x, y), ("b", y, x), ("c", c, None)):
            if not math.isfinite(orig):
                # the un-faulted product already overflowed
                for k in range(64):
                    out.append(DotPerturbation(idx, site, k, orig, orig, Outcome.NON_NUMERIC, None))
                continue
            for k in range(64):
                z = fa.flip_bit(orig, k)
                outcome = _outcome(z, k)
                err = None
                if outcome is not Outcome.NON_NUMERIC:
                    diff = abs(exact_value(orig) - exact_value(z))
                    if partner is None:
                        err = diff
                    else:
                        err = diff * abs(exact_value(partner))
                        if arithmetic == "binary64" and not math.isfinite(z * partner):
                            outcome, err = Outcome.NON_NUMERIC, None
                out.append(DotPerturbation(idx, site, k, orig, z, outcome, err))
    return out


def tally_dot_errors(records: Sequence[DotPerturbation], threshold: float,
                     region: str = "all") -> ErrorClassTally:
    """Tally exact records; ``region="exponent"`` keeps only exponent bits."""
    t = ErrorClassTally(threshold=float(threshold))
    counts = [0, 0, 0, 0]
    for r in records:
        if region == "exponent" and r.region is not Region.EXPONENT:
            continue
        counts[r.error_class(threshold) - 1] += 1
    t.add_counts(counts)
    return t


# -- exponent intervals --------------------------------------------------------------

@dataclass(frozen=True)
class ExponentInterval:
    """Closed range ``[lo, hi]`` of biased exponents, ``hi`` already widened by one.

    ``lo``/``hi`` are None when the vector held nothing but zeros.
    """
    lo: int | None
    hi: int | None
    contains_zero: bool = False

    def __post_init__(self):
        if (self.lo is None) != (self.hi is None):
            raise ValueError("lo and hi must both be set or both be None")
        if self.lo is not None and not (1 <= self.lo <= self.hi <= 2046):
            raise ValueError(f"bad interval [{self.lo}, {self.hi}]")

    @property
    def degenerate(self) -> bool:
        return self.lo is None

    def __len__(self) -> int:
        return 0 if self.lo is None else self.hi - self.lo + 1

    def as_tuple(self):
        return (self.lo, self.hi)


UNIT_INTERVAL = ExponentInterval(1, 1023)  # everything in (0, 1] of a normalised vector


def extract_interval(v) -> ExponentInterval:
    """Biased-exponent range of the nonzero normal entries of ``v``.

    ``hi`` is the largest exponent plus one: the table treats each exponent
    as the power of two below the value, so the extra binade covers the
    mantissa.  Zeros and subnormals only set ``contains_zero``.
    """
    arr = np.asarray(v, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError("empty vector")
    if not np.isfinite(arr).all():
        raise ValueError("non-finite entries")
    e = fa.biased_exponents(arr)
    nz = e > 0
    has_zero = bool((~nz).any())
    if not nz.any():
        return ExponentInterval(None, None, True)
    lo = int(e[nz].min())
    hi = min(int(e[nz].max()) + 1, 2046)
    return ExponentInterval(lo, hi, has_zero)


def product_interval(ia: ExponentInterval, ib: ExponentInterval) -> ExponentInterval:
    """Range of product exponents ``[lo_a + lo_b - 1023, hi_a + hi_b - 1022]``, clamped."""
    if ia.degenerate or ib.degenerate:
        return ExponentInterval(None, None, True)
    lo = min(max(ia.lo + ib.lo - fa.BIAS, 1), 2046)
    hi = min(max(ia.hi + ib.hi - fa.BIAS + 1, 1), 2046)
    return ExponentInterval(lo, hi, ia.contains_zero or ib.contains_zero)


# -- bounds ----------------------------------------------------------------------------

def bound_mantissa_and_sign(alpha_exp: float, beta_exp: float) -> Fraction:
    """``4 * alpha_exp * beta_exp`` for power-of-two magnitudes, as an exact rational.

    Strictly larger than ``alpha * beta`` and than any mantissa-flip error.
    A sign flip costs ``2 alpha beta``, which this covers only when the
    operands have zero mantissas; the table uses twice this for sign flips.
    """
    for x in (alpha_exp, beta_exp):
        if x <= 0 or math.frexp(x)[0] != 0.5:
            raise ValueError(f"{x!r} is not a positive power of two")
    return Fraction(2) ** (math.frexp(alpha_exp)[1] + math.frexp(beta_exp)[1])


def upper_bound_vector(u) -> list[float]:
    """Elementwise next power of two above ``|u_i|``."""
    return [fa.order_of_magnitude_bound(float(x)) for x in u]


# -- interval classification ----------------------------------------------------------

def classify_errors(ia: ExponentInterval, ib: ExponentInterval,
                    table: ErrorLookupTable | None = None,
                    threshold: float | None = None,
                    model: ErrorModel = DEFAULT_MODEL) -> ErrorClassTally:
    """Sum the cell counts over every exponent pair in ``ia x ib``."""
    if table is None:
        if threshold is None:
            raise ValueError("need a table or a threshold")
        table = get_table(model, threshold)
    elif threshold is not None and float(threshold) != table.threshold:
        raise ValueError(f"table was built for threshold {table.threshold}, not {threshold}")
    tally = ErrorClassTally(threshold=table.threshold)
    if ia.degenerate or ib.degenerate:
        return tally
    tally.add_counts(table.rect(ia.lo, ia.hi, ib.lo, ib.hi))
    return tally


# -- analytic per-bit failure model ------------------------------------------------
# Operands are u = X 2**mu, v = Y 2**mv with X, Y independent U[1, 2).

def _cdf_x(s: float) -> float:
    return min(max(s - 1.0, 0.0), 1.0)


def _cdf_xy(s: float) -> float:
    """P(XY <= s) for X, Y independent U[1, 2)."""
    if s <= 1.0:
        return 0.0
    if s <= 2.0:
        return s * math.log(s) - s + 1.0
    if s < 4.0:
        return s - 3.0 + s * math.log(4.0 / s)
    return 1.0


def _p_exceeds(cdf, scale: float, t: float) -> float:
    # P(scale * Z > t)
    if scale == 0:
        return 0.0
    if math.isinf(scale):
        return 1.0
    return 1.0 - cdf(t / scale)


def operand_bit_failure(mag_self: int, mag_other: int, bit: int, threshold: float = 1.0) -> float:
    """P(|error| > threshold) when ``bit`` of the first operand is flipped."""
    e = mag_self + fa.BIAS
    scale = 2.0 ** (mag_self + mag_other) if abs(mag_self + mag_other) < 1000 else math.ldexp(1.0, mag_self + mag_other)
    region = fa.bit_region(bit)
    if region is Region.SIGN:
        return _p_exceeds(_cdf_xy, 2.0 * scale, threshold)
    if region is Region.MANTISSA:
        return _p_exceeds(_cdf_x, math.ldexp(1.0, mag_self + mag_other + bit - fa.MANTISSA_BITS), threshold)
    k = bit - fa.MANTISSA_BITS
    if (e >> k) & 1:
        factor = 1.0 - math.ldexp(1.0, -(1 << k))
    else:
        if e + (1 << k) == fa.EXPONENT_ALL_ONES:
            return 1.0
        # |2**(2**k) - 1| as a log2 to stay finite
        log_f = (1 << k) + math.log2(1.0 - math.ldexp(1.0, -(1 << k)))
        lt = math.log2(threshold) - (mag_self + mag_other) - log_f
        if lt > 4:
            return 0.0
        if lt < 0:
            return 1.0
        return 1.0 - _cdf_xy(2.0 ** lt)
    return _p_exceeds(_cdf_xy, scale * factor, threshold)


def predicted_bit_failure(mag_u: int, mag_v: int, bit: int, threshold: float = 1.0) -> float:
    """Model failure probability for one bit index, averaged over both vectors."""
    return 0.5 * (operand_bit_failure(mag_u, mag_v, bit, threshold)
                  + operand_bit_failure(mag_v, mag_u, bit, threshold))


def predicted_cell_failure(mag_u: int, mag_v: int, threshold: float = 1.0) -> float:
    return sum(predicted_bit_failure(mag_u, mag_v, k, threshold) for k in range(64)) / 64.0
