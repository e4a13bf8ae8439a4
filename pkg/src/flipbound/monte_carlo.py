"""Monte Carlo fault campaign over a grid of vector magnitudes.

For a cell ``(mag_u, mag_v)`` we draw ``M`` pairs of length-``N`` vectors
whose entries have fixed exponents and random mantissas, then flip every
bit of every entry once (``2 * 64 * N`` flips per pair) and count flips
whose additive error ``|u~_i - u_i| * |v_i|`` exceeds the threshold.
Non-finite errors count as failures.

Each cell has its own Philox stream derived from ``(seed, mag_u, mag_v)``,
so results do not depend on the order or parallelism of cell evaluation.
"""
from __future__ import annotations

import csv
import io
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import float_anatomy as fa

SCHEMA_SURFACE = "flipbound.mc-surface/1"
SCHEMA_SLICE = "flipbound.mc-slice/1"
_CHUNK_ELEMENTS = 1 << 18


@dataclass(frozen=True)
class McConfig:
    n: int = 100
    samples: int = 1000
    grid: tuple[int, ...] = tuple(range(-10, 11))
    threshold: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.samples < 1:
            raise ValueError("n and samples must be positive")
        if not self.grid:
            raise ValueError("empty magnitude grid")
        for m in self.grid:
            if not -1022 <= m <= 1023:
                raise ValueError(f"magnitude {m} outside the normal range")
        object.__setattr__(self, "grid", tuple(int(m) for m in self.grid))

    @classmethod
    def from_range(cls, lo: int, hi: int, **kw) -> "McConfig":
        return cls(grid=tuple(range(lo, hi + 1)), **kw)

    @property
    def flips_per_sample(self) -> int:
        return 2 * 64 * self.n


def cell_rng(seed: int, mag_u: int, mag_v: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent generators for the u and v draws of one cell."""
    ss = np.random.SeedSequence([seed & 0xFFFF_FFFF_FFFF_FFFF, mag_u + 2048, mag_v + 2048])
    su, sv = ss.spawn(2)
    return np.random.Generator(np.random.Philox(su)), np.random.Generator(np.random.Philox(sv))


def generate_vector(magnitude_exp: int, n, rng: np.random.Generator) -> np.ndarray:
    """Positive entries with biased exponent ``magnitude_exp + 1023`` and random mantissas.

    ``n`` may be an int or a shape tuple.
    """
    e = magnitude_exp + fa.BIAS
    if not 1 <= e <= 2046:
        raise ValueError(f"magnitude {magnitude_exp} is not a normal exponent")
    mant = rng.integers(0, 1 << fa.MANTISSA_BITS, size=n, dtype=np.uint64)
    return fa.compose_array(0, e, mant)


def bit_failures(x: np.ndarray, partner: np.ndarray, threshold: float) -> np.ndarray:
    """Failures per bit index (length 64) from flipping each bit of every ``x``."""
    out = np.zeros(64, dtype=np.int64)
    bits = fa.as_bits(x)
    pa = np.abs(partner)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(64):
            flipped = (bits ^ np.uint64(1 << k)).view(np.float64)
            err = np.abs(flipped - x) * pa
            out[k] = np.count_nonzero(~(err <= threshold))
    return out


@dataclass
class CellResult:
    mag_u: int
    mag_v: int
    samples: int
    n: int
    per_bit: np.ndarray  # (64,) failures per bit index, both vectors combined

    @property
    def failures(self) -> int:
        return int(self.per_bit.sum())

    @property
    def flips(self) -> int:
        return 2 * 64 * self.n * self.samples

    @property
    def probability(self) -> float:
        return self.failures / self.flips

    def bit_probability(self) -> np.ndarray:
        return self.per_bit / (2 * self.n * self.samples)


def run_cell(mag_u: int, mag_v: int, cfg: McConfig) -> CellResult:
    ru, rv = cell_rng(cfg.seed, mag_u, mag_v)
    per_bit = np.zeros(64, dtype=np.int64)
    rows = max(1, _CHUNK_ELEMENTS // cfg.n)
    done = 0
    while done < cfg.samples:
        m = min(rows, cfg.samples - done)
        u = generate_vector(mag_u, (m, cfg.n), ru)
        v = generate_vector(mag_v, (m, cfg.n), rv)
        per_bit += bit_failures(u, v, cfg.threshold)
        per_bit += bit_failures(v, u, cfg.threshold)
        done += m
    return CellResult(mag_u, mag_v, cfg.samples, cfg.n, per_bit)


def run_pair(u, v, threshold: float = 1.0) -> np.ndarray:
    """Per-bit failure counts for one explicit vector pair."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return bit_failures(u, v, threshold) + bit_failures(v, u, threshold)


@dataclass
class McSurface:
    config: McConfig
    failures: np.ndarray  # (G, G) rows mag_u, columns mag_v
    per_bit: np.ndarray  # (G, G, 64)
    cells: dict = field(default_factory=dict, repr=False)

    @property
    def grid(self) -> tuple[int, ...]:
        return self.config.grid

    @property
    def probability(self) -> np.ndarray:
        return self.failures / (2 * 64 * self.config.n * self.config.samples)

    def index(self, mag: int) -> int:
        try:
            return self.grid.index(mag)
        except ValueError:
            raise ValueError(f"magnitude {mag} not in grid") from None

    def cell(self, mag_u: int, mag_v: int) -> CellResult:
        i, j = self.index(mag_u), self.index(mag_v)
        return CellResult(mag_u, mag_v, self.config.samples, self.config.n, self.per_bit[i, j])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema: {SCHEMA_SURFACE}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mag_u", "mag_v", "samples", "failures", "probability"])
        p = self.probability
        for i, mu in enumerate(self.grid):
            for j, mv in enumerate(self.grid):
                w.writerow([mu, mv, self.config.samples, int(self.failures[i, j]), format(p[i, j], ".17g")])
        return buf.getvalue()


def run_surface(cfg: McConfig, threads: int | None = None) -> McSurface:
    if len(cfg.grid) > 21 or cfg.samples > 100_000:
        warnings.warn(f"{len(cfg.grid)}^2 cells x {cfg.samples} samples: this may run for a very long time",
                      RuntimeWarning, stacklevel=2)
    g = len(cfg.grid)
    pairs = [(i, j) for i in range(g) for j in range(g)]
    threads = threads or os.cpu_count() or 1

    def work(ij):
        i, j = ij
        return run_cell(cfg.grid[i], cfg.grid[j], cfg)

    if threads == 1:
        results = [work(p) for p in pairs]
    else:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(work, pairs))
    per_bit = np.zeros((g, g, 64), dtype=np.int64)
    for (i, j), r in zip(pairs, results):
        per_bit[i, j] = r.per_bit
    return McSurface(cfg, per_bit.sum(axis=2), per_bit)


@dataclass(frozen=True)
class SliceRow:
    bit: int
    mag: int
    failures: int
    probability: float


def slice_cells(grid, mode: str, fixed_mag: int | None) -> list[tuple[int, int]]:
    if mode == "diagonal":
        return [(m, m) for m in grid]
    if mode == "fixed":
        if fixed_mag is None:
            raise ValueError("fixed mode needs fixed_mag")
        if fixed_mag not in grid:
            raise ValueError(f"magnitude {fixed_mag} not in grid")
        return [(fixed_mag, m) for m in grid]
    raise ValueError(f"unknown slice mode {mode!r}")


def run_slice(cfg: McConfig, mode: str = "diagonal", fixed_mag: int | None = None,
              threads: int | None = None) -> list["SliceRow"]:
    """Like :func:`per_bit_slice` but only runs the cells on the slice."""
    cells = slice_cells(cfg.grid, mode, fixed_mag)
    threads = threads or os.cpu_count() or 1
    if threads == 1:
        results = [run_cell(mu, mv, cfg) for mu, mv in cells]
    else:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(lambda c: run_cell(c[0], c[1], cfg), cells))
    denom = 2 * cfg.n * cfg.samples
    return [SliceRow(bit, r.mag_v, int(r.per_bit[bit]), int(r.per_bit[bit]) / denom)
            for bit in range(64) for r in results]


def per_bit_slice(surface: McSurface, mode: str = "diagonal", fixed_mag: int | None = None) -> list[SliceRow]:
    """Per-bit failure probability along a slice of the surface.

    ``diagonal`` walks cells ``(m, m)``; ``fixed`` walks ``(fixed_mag, m)``.
    The probability of a row is failures over the ``2 N M`` flips of that bit.
    """
    cells = slice_cells(surface.grid, mode, fixed_mag)
    denom = 2 * surface.config.n * surface.config.samples
    rows = []
    for bit in range(64):
        for mu, mv in cells:
            f = int(surface.per_bit[surface.index(mu), surface.index(mv), bit])
            rows.append(SliceRow(bit, mv, f, f / denom))
    return rows


def slice_to_csv(rows: list[SliceRow]) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {SCHEMA_SLICE}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bit", "mag", "failures", "probability"])
    for r in rows:
        w.writerow([r.bit, r.mag, r.failures, format(r.probability, ".17g")])
    return buf.getvalue()
