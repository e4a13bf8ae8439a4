"""Per-exponent-pair error classification and the 2047 x 2047 lookup table.

A cell ``(i, j)`` stands for a product ``a * b`` whose operands have biased
exponents ``i`` and ``j``.  Operands are represented by ``2**(i - 1023)``
(0 when the exponent field is 0).  Three flip sites are considered:
``a``, ``b`` and the product ``c`` (biased exponent ``i + j - 1023``).

Every outcome is put in one of four classes relative to a threshold ``T``:

    1  error < 1
    2  1 <= error <= T      ("grey area", too small to notice)
    3  error > T
    4  non-numeric result

Exponent-bit outcomes are exact for power-of-two operands.  Sign and
mantissa flips are covered by a strict upper bound and assigned the
worst class that bound allows.
"""
from __future__ import annotations

import enum
import hashlib
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import float_anatomy as fa
from .scalar_fault import Outcome, perturb

N_EXP = 2047  # biased exponents 0..2046 (2047 is Inf/NaN)
EXP_BITS = tuple(range(fa.EXPONENT_BITS))
WEIGHTINGS = ("exponent", "category", "bits")
ARITHMETICS = ("binary64", "exact")
OPERANDS = ("representative", "bound")
SITES = ("ab", "abc")

MAGIC = b"SDCT"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sHBBd")  # 16 bytes
CACHE_ENV = "FLIPBOUND_TABLE_CACHE"


class ErrorClass(enum.IntEnum):
    LT_ONE = 1
    GREY = 2
    DETECTABLE = 3
    NON_NUMERIC = 4


@dataclass(frozen=True)
class ErrorModel:
    """Accounting choices for a table.

    weighting
        ``exponent``: only the 11 exponent bits per site are counted.
        ``category``: plus one sign and one mantissa outcome (13 per site).
        ``bits``: sign once and mantissa 52 times (64 per site).
    arithmetic
        ``exact``: errors are compared exactly.
        ``binary64``: the closed-form factor ``2**(2**j)`` is evaluated as a
        double, so the top exponent bit flipping 0->1 (factor ``2**1024``)
        and any error beyond the double range count as non-numeric.
    operands
        ``representative``: operands are exact powers of two.
        ``bound``: operands anywhere in their binade; exponent-flip errors
        are bounded by 4x the representative error (never optimistic).
    sites
        ``ab`` or ``abc``: whether flips in the product are counted.
    """

    weighting: str = "exponent"
    arithmetic: str = "binary64"
    operands: str = "representative"
    sites: str = "abc"

    def __post_init__(self):
        for name, allowed in (("weighting", WEIGHTINGS), ("arithmetic", ARITHMETICS),
                              ("operands", OPERANDS), ("sites", SITES)):
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")

    @property
    def mantissa_weight(self) -> int:
        return {"exponent": 0, "category": 1, "bits": 52}[self.weighting]

    @property
    def sign_weight(self) -> int:
        return 0 if self.weighting == "exponent" else 1

    @property
    def per_site(self) -> int:
        return fa.EXPONENT_BITS + self.mantissa_weight + self.sign_weight

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def per_cell(self) -> int:
        return self.per_site * self.n_sites

    @property
    def flags(self) -> int:
        return ((self.arithmetic == "binary64")
                | (self.operands == "bound") << 1
                | (self.sites == "abc") << 2)

    @classmethod
    def from_header(cls, weighting: int, flags: int) -> "ErrorModel":
        return cls(WEIGHTINGS[weighting],
                   "binary64" if flags & 1 else "exact",
                   "bound" if flags & 2 else "representative",
                   "abc" if flags & 4 else "ab")

    def key(self) -> str:
        return f"{self.weighting}-{self.arithmetic}-{self.operands}-{self.sites}"


DEFAULT_MODEL = ErrorModel()


@dataclass
class ErrorClassTally:
    class1_lt_one: int = 0
    class2_grey: int = 0
    class3_detectable: int = 0
    class4_nonnumeric: int = 0
    threshold: float = math.nan

    @classmethod
    def from_counts(cls, counts, threshold: float) -> "ErrorClassTally":
        c = [int(v) for v in counts]
        return cls(c[0], c[1], c[2], c[3], float(threshold))

    @property
    def counts(self) -> tuple[int, int, int, int]:
        return (self.class1_lt_one, self.class2_grey, self.class3_detectable, self.class4_nonnumeric)

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def shares(self) -> tuple[float, ...]:
        t = self.total
        return tuple(c / t if t else 0.0 for c in self.counts)

    def __add__(self, other: "ErrorClassTally") -> "ErrorClassTally":
        return ErrorClassTally(*(a + b for a, b in zip(self.counts, other.counts)),
                               threshold=self.threshold)

    def add_counts(self, counts) -> None:
        self.class1_lt_one += int(counts[0])
        self.class2_grey += int(counts[1])
        self.class3_detectable += int(counts[2])
        self.class4_nonnumeric += int(counts[3])

    def as_dict(self) -> dict:
        s = self.shares
        return {
            "class1": self.class1_lt_one, "class2": self.class2_grey,
            "class3": self.class3_detectable, "class4": self.class4_nonnumeric,
            "total": self.total, "threshold": self.threshold,
            "shares": {"class1": s[0], "class2": s[1], "class3": s[2], "class4": s[3]},
        }


# -- exact classification of a single error ---------------------------------------

def classify_value(err: Fraction, threshold: float, strict_bound: bool = False) -> ErrorClass:
    """Class of an exact error, or of a strict upper bound on one.

    With ``strict_bound`` the true error is only known to be ``< err``, so
    the result is the worst class that is still possible.
    """
    t = Fraction(threshold)
    if strict_bound:
        if err <= 1:
            return ErrorClass.LT_ONE
        return ErrorClass.GREY if err <= t else ErrorClass.DETECTABLE
    if err < 1:
        return ErrorClass.LT_ONE
    return ErrorClass.GREY if err <= t else ErrorClass.DETECTABLE


def _overflows(err: Fraction) -> bool:
    try:
        return math.isinf(float(err))
    except OverflowError:
        return True


# -- scalar reference path ------------------------------------------------------------

def _value(e: int) -> float:
    return 0.0 if e == 0 else math.ldexp(1.0, e - fa.BIAS)


def _pow2(e: int) -> Fraction:
    return Fraction(2) ** e


def product_exponent(i: int, j: int) -> int | None:
    """Biased exponent of the representative product; 0 for underflow, None for overflow."""
    if i == 0 or j == 0:
        return 0
    p = i + j - fa.BIAS
    if p > N_EXP - 1:
        return None
    return max(p, 0)


@dataclass(frozen=True)
class CellOutcome:
    site: str
    bit: int
    error_class: ErrorClass
    weight: int


def _site_outcomes(site: str, e: int, partner: Fraction, x_exp: int,
                   model: ErrorModel, threshold: float) -> list[CellOutcome]:
    """Outcomes for flipping each bit of the operand with exponent ``e``.

    ``partner`` multiplies the operand's change (the other factor, or 1 for
    the product site).  ``x_exp`` is the ``X`` in the ``2**X`` magnitude
    scale used for the sign and mantissa bounds.
    """
    out = []
    bound = model.operands == "bound"
    x = _value(e)
    for k in EXP_BITS:
        bit = fa.MANTISSA_BITS + k
        rec = perturb(x, bit)
        up = not (e >> k) & 1
        if rec.outcome is Outcome.NON_NUMERIC:
            cls = ErrorClass.NON_NUMERIC
        else:
            err = rec.abs_error * partner
            if model.arithmetic == "binary64" and ((k == 10 and up) or _overflows(err)):
                cls = ErrorClass.NON_NUMERIC
            elif bound:
                cls = classify_value(4 * err, threshold, strict_bound=True)
            else:
                cls = classify_value(err, threshold)
        out.append(CellOutcome(site, bit, cls, 1))
    mant = _pow2(x_exp + 2) if x_exp is not None else Fraction(0)
    sign = _pow2(x_exp + 3) if x_exp is not None and e != 0 else Fraction(0)
    if model.mantissa_weight:
        out.append(CellOutcome(site, -1, classify_value(mant, threshold, strict_bound=True),
                               model.mantissa_weight))
    if model.sign_weight:
        out.append(CellOutcome(site, fa.SIGN_BIT, classify_value(sign, threshold, strict_bound=True),
                               model.sign_weight))
    return out


def cell_outcomes(i: int, j: int, model: ErrorModel = DEFAULT_MODEL,
                  threshold: float = 2.0) -> list[CellOutcome]:
    """Per-site, per-bit outcomes of cell ``(i, j)`` computed with exact rationals.

    The mantissa category is reported with ``bit = -1``.  This is the slow
    reference against which the vectorised table builder is checked.
    """
    if not (0 <= i < N_EXP and 0 <= j < N_EXP):
        raise ValueError(f"cell ({i}, {j}) outside the table")
    p = product_exponent(i, j)
    if p is None:
        out = []
        for site in model.sites:
            out += [CellOutcome(site, fa.MANTISSA_BITS + k, ErrorClass.NON_NUMERIC, 1) for k in EXP_BITS]
            if model.mantissa_weight:
                out.append(CellOutcome(site, -1, ErrorClass.NON_NUMERIC, model.mantissa_weight))
            if model.sign_weight:
                out.append(CellOutcome(site, fa.SIGN_BIT, ErrorClass.NON_NUMERIC, model.sign_weight))
        return out
    va, vb = Fraction(_value(i)), Fraction(_value(j))
    # mantissa/sign scale 2**X with X = (exp_a - 1023) + (exp_b - 1023); None if the product is zero
    def scale(ea, eb, partner_zero):
        if partner_zero:
            return None
        return max(ea, 1) + max(eb, 1) - 2 * fa.BIAS
    out = _site_outcomes("a", i, vb, scale(i, j, j == 0), model, threshold)
    out += _site_outcomes("b", j, va, scale(j, i, i == 0), model, threshold)
    if model.sites == "abc":
        c_scale = None if p == 0 else p - fa.BIAS
        out += _site_outcomes("c", p, Fraction(1), c_scale, model, threshold)
    return out


def tally_cell(i: int, j: int, model: ErrorModel = DEFAULT_MODEL, threshold: float = 2.0) -> np.ndarray:
    counts = np.zeros(4, dtype=np.int64)
    for o in cell_outcomes(i, j, model, threshold):
        counts[o.error_class - 1] += o.weight
    return counts


# -- vectorised builder ---------------------------------------------------------------

def _log2_value(e: np.ndarray) -> np.ndarray:
    """Exponent of the representative value as float; -inf for field 0."""
    out = e.astype(np.float64) - fa.BIAS
    out[e == 0] = -np.inf
    return out


def _exact_gt(big: float, small: float, t: float) -> bool:
    # 2**big - 2**small > t, exactly (small may be -inf)
    v = _pow2(int(big)) - (0 if small == -np.inf else _pow2(int(small)))
    return v > Fraction(t)


def classify_pow2_diff(big: np.ndarray, small: np.ndarray, threshold: float,
                       strict_bound: bool) -> np.ndarray:
    """Vectorised class (1..3) of ``2**big - 2**small`` (``big >= small``).

    ``big == -inf`` encodes a zero error.  Comparison with the threshold is
    done in floating point and re-checked exactly where it ties.
    """
    zero = big == -np.inf
    b = np.where(zero, 0.0, big)
    d = np.where(zero, -np.inf, small - b)
    with np.errstate(over="ignore", invalid="ignore"):
        r = np.ldexp(1.0 - np.exp2(d), b.astype(np.int64).clip(-3000, 3000))
    if strict_bound:
        lt1 = zero | (b <= 0) | ((b == 1) & (small == 0))
    else:
        lt1 = zero | (b < 0) | ((b == 0) & (small > -np.inf))
    gt = r > threshold
    ties = np.nonzero((r == threshold) & ~lt1)
    for idx in zip(*ties):
        gt[idx] = _exact_gt(big[idx], small[idx], threshold)
    cls = np.where(gt, 3, 2).astype(np.int8)
    cls[lt1] = 1
    return cls


def _site_counts(e: np.ndarray, partner_log: np.ndarray, x_exp: np.ndarray,
                 model: ErrorModel, threshold: float, overflow_cell: np.ndarray) -> np.ndarray:
    """Class counts (shape ``e.shape + (4,)``) for flipping each bit at one site."""
    shape = np.broadcast_shapes(e.shape, partner_log.shape, x_exp.shape)
    e = np.broadcast_to(e, shape)
    counts = np.zeros(shape + (4,), dtype=np.int16)
    log_old = _log2_value(e) + partner_log
    bound = model.operands == "bound"
    for k in EXP_BITS:
        was_set = ((e >> k) & 1).astype(bool)
        e_new = np.where(was_set, e - (1 << k), e + (1 << k))
        nonnum = e_new == fa.EXPONENT_ALL_ONES
        log_new = _log2_value(np.where(nonnum, 1, e_new)) + partner_log
        big = np.fmax(log_old, log_new)
        small = np.fmin(log_old, log_new)
        # partner zero: both logs are -inf and the error is zero
        both_zero = np.isneginf(log_old) & np.isneginf(log_new)
        small = np.where(both_zero, -np.inf, small)
        if bound:
            big, small = big + 2, small + 2
        cls = classify_pow2_diff(big, small, threshold, strict_bound=bound)
        if model.arithmetic == "binary64":
            with np.errstate(over="ignore", invalid="ignore"):
                val = np.ldexp(1.0 - np.exp2(np.where(both_zero, -np.inf, small - big)),
                               np.where(both_zero, 0, big).astype(np.int64).clip(-3000, 3000))
            nonnum = nonnum | (k == 10) & ~was_set | np.isinf(val)
        cls = np.where(nonnum | overflow_cell, 4, cls)
        for c in range(4):
            counts[..., c] += cls == c + 1
    for weight, extra in ((model.mantissa_weight, 2), (model.sign_weight, 3)):
        if not weight:
            continue
        no_err = np.isneginf(x_exp)
        if extra == 3:
            no_err = no_err | (e == 0)
        big = np.where(no_err, -np.inf, x_exp + extra)
        cls = classify_pow2_diff(big, np.full(shape, -np.inf), threshold, strict_bound=True)
        cls = np.where(overflow_cell, 4, cls)
        for c in range(4):
            counts[..., c] += weight * (cls == c + 1)
    return counts


def build_rows(rows: np.ndarray, model: ErrorModel, threshold: float) -> np.ndarray:
    """Counts for table rows ``rows`` (all 2047 columns), shape ``(len(rows), 2047, 4)``."""
    i = np.asarray(rows, dtype=np.int64)[:, None]
    j = np.arange(N_EXP, dtype=np.int64)[None, :]
    i, j = np.broadcast_arrays(i, j)
    zero_prod = (i == 0) | (j == 0)
    p_raw = i + j - fa.BIAS
    overflow = (p_raw > N_EXP - 1) & ~zero_prod
    p = np.where(zero_prod | overflow, 0, np.maximum(p_raw, 0))
    x_a = np.where(j == 0, -np.inf, (np.maximum(i, 1) + np.maximum(j, 1) - 2 * fa.BIAS).astype(float))
    x_b = np.where(i == 0, -np.inf, (np.maximum(i, 1) + np.maximum(j, 1) - 2 * fa.BIAS).astype(float))
    counts = _site_counts(i, _log2_value(j), x_a, model, threshold, overflow)
    counts += _site_counts(j, _log2_value(i), x_b, model, threshold, overflow)
    if model.sites == "abc":
        x_c = np.where(p == 0, -np.inf, (p - fa.BIAS).astype(float))
        counts += _site_counts(p, np.zeros(p.shape), x_c, model, threshold, overflow)
    return counts.astype(np.uint8)


def build_counts(model: ErrorModel = DEFAULT_MODEL, threshold: float = 2.0,
                 threads: int | None = None, chunk: int = 64) -> np.ndarray:
    """Full ``(2047, 2047, 4)`` uint8 count array.

    Row chunks are independent, so the result does not depend on ``threads``.
    """
    if not threshold > 1:
        raise ValueError("threshold must exceed 1")
    out = np.empty((N_EXP, N_EXP, 4), dtype=np.uint8)
    starts = range(0, N_EXP, chunk)

    def work(s):
        rows = np.arange(s, min(s + chunk, N_EXP))
        out[rows] = build_rows(rows, model, threshold)

    threads = threads or os.cpu_count() or 1
    if threads == 1:
        for s in starts:
            work(s)
    else:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(work, starts))
    return out


# -- table object ----------------------------------------------------------------------

@dataclass
class ErrorLookupTable:
    model: ErrorModel
    threshold: float
    counts: np.ndarray  # (2047, 2047, 4) uint8
    _sat: np.ndarray | None = field(default=None, repr=False)

    def cell(self, i: int, j: int) -> ErrorClassTally:
        return ErrorClassTally.from_counts(self.counts[i, j], self.threshold)

    @property
    def sat(self) -> np.ndarray:
        """Summed-area table, shape (2048, 2048, 4), int64."""
        if self._sat is None:
            s = np.zeros((N_EXP + 1, N_EXP + 1, 4), dtype=np.int64)
            np.cumsum(self.counts, axis=0, dtype=np.int64, out=s[1:, 1:])
            np.cumsum(s[1:, 1:], axis=1, out=s[1:, 1:])
            self._sat = s
        return self._sat

    def rect(self, i_lo: int, i_hi: int, j_lo: int, j_hi: int) -> np.ndarray:
        """Class counts summed over cells with ``i_lo <= i <= i_hi`` and ``j_lo <= j <= j_hi``."""
        s = self.sat
        i_hi, j_hi = i_hi + 1, j_hi + 1
        return s[i_hi, j_hi] - s[i_lo, j_hi] - s[i_hi, j_lo] + s[i_lo, j_lo]

    def save(self, path) -> None:
        write_table(self, path)


def write_table(table: ErrorLookupTable, path) -> None:
    """Binary layout: 16-byte little-endian header then row-major uint8 cells.

    Header: magic ``b"SDCT"``, u16 version, u8 weighting index, u8 flag bits
    (1 binary64 arithmetic, 2 bound operands, 4 product site), f64 threshold.
    Body: 2047 * 2047 cells of four u8 counters (classes 1..4).
    """
    m = table.model
    header = HEADER.pack(MAGIC, FORMAT_VERSION, WEIGHTINGS.index(m.weighting), m.flags, table.threshold)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(table.counts, dtype=np.uint8).tobytes())
    os.replace(tmp, path)


def read_table(path) -> ErrorLookupTable:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, weighting, flags, threshold = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    body = np.frombuffer(raw, dtype=np.uint8, offset=HEADER.size)
    if body.size != N_EXP * N_EXP * 4:
        raise ValueError(f"{path}: body has {body.size} bytes")
    return ErrorLookupTable(ErrorModel.from_header(weighting, flags), threshold,
                            body.reshape(N_EXP, N_EXP, 4).copy())


def build_lookup_table(model: ErrorModel = DEFAULT_MODEL, threshold: float = 2.0,
                       threads: int | None = None) -> ErrorLookupTable:
    return ErrorLookupTable(model, float(threshold), build_counts(model, threshold, threads))


_MEMORY: dict[tuple, ErrorLookupTable] = {}


def _cache_name(model: ErrorModel, threshold: float) -> str:
    tag = hashlib.sha1(struct.pack("<d", threshold)).hexdigest()[:12]
    return f"table-v{FORMAT_VERSION}-{model.key()}-{tag}.bin"


def get_table(model: ErrorModel = DEFAULT_MODEL, threshold: float = 2.0,
              threads: int | None = None) -> ErrorLookupTable:
    """Build a table once per process; also cached on disk if ``$FLIPBOUND_TABLE_CACHE`` is set."""
    key = (model, float(threshold))
    if key in _MEMORY:
        return _MEMORY[key]
    cache_dir = os.environ.get(CACHE_ENV)
    path = Path(cache_dir) / _cache_name(model, threshold) if cache_dir else None
    table = None
    if path is not None and path.exists():
        try:
            table = read_table(path)
        except ValueError:
            table = None
    if table is None:
        table = build_lookup_table(model, threshold, threads)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            write_table(table, path)
    _MEMORY[key] = table
    return table
