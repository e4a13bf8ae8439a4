"""Sparse matrix substrate: CSR storage, Matrix Market I/O, norms, equilibration.

Products go through :mod:`scipy.sparse`, whose CSR kernel accumulates each
row sequentially in storage order, so results are reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ro = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        ci = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        va = np.ascontiguousarray(self.values, dtype=np.float64)
        for arr in (ro, ci, va):
            arr.setflags(write=False)
        object.__setattr__(self, "row_offsets", ro)
        object.__setattr__(self, "col_indices", ci)
        object.__setattr__(self, "values", va)
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError("matrix dimensions must be positive")
        if ro.shape != (self.n_rows + 1,) or ro[0] != 0 or (np.diff(ro) < 0).any():
            raise ValueError("row offsets must be nondecreasing, start at 0 and have n_rows + 1 entries")
        if ro[-1] != ci.size or ci.size != va.size:
            raise ValueError("row offsets, column indices and values disagree on nnz")
        if ci.size and (ci.min() < 0 or ci.max() >= self.n_cols):
            raise ValueError("column index out of range")
        if not np.isfinite(va).all():
            raise ValueError("matrix values must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    @property
    def explicit_zeros(self) -> int:
        return int(np.count_nonzero(self.values == 0))

    def row_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_rows), np.diff(self.row_offsets))

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.col_indices, self.row_offsets), shape=self.shape, copy=False)

    @classmethod
    def from_scipy(cls, m) -> "CsrMatrix":
        m = sp.csr_matrix(m)
        m.sort_indices()
        return cls(m.shape[0], m.shape[1], m.indptr, m.indices, m.data)

    @classmethod
    def from_coo(cls, n_rows: int, n_cols: int, rows, cols, vals) -> "CsrMatrix":
        """Build from triplets; duplicates are summed, explicit zeros kept."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if rows.size and (rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols):
            raise ValueError("index out of bounds")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            new = np.ones(rows.size, dtype=bool)
            new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            starts = np.flatnonzero(new)
            vals = np.add.reduceat(vals, starts)
            rows, cols = rows[starts], cols[starts]
        offsets = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n_rows), out=offsets[1:])
        return cls(n_rows, n_cols, offsets, cols, vals)

    @classmethod
    def from_dense(cls, a) -> "CsrMatrix":
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        r, c = np.nonzero(a)
        return cls.from_coo(a.shape[0], a.shape[1], r, c, a[r, c])

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def with_values(self, values) -> "CsrMatrix":
        return CsrMatrix(self.n_rows, self.n_cols, self.row_offsets, self.col_indices, values)

    def same_as(self, other: "CsrMatrix") -> bool:
        """Structural and bitwise value equality."""
        return (self.shape == other.shape
                and np.array_equal(self.row_offsets, other.row_offsets)
                and np.array_equal(self.col_indices, other.col_indices)
                and np.array_equal(self.values.view(np.uint64), other.values.view(np.uint64)))


def spmv(m: CsrMatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.n_cols,):
        raise ValueError(f"vector of length {x.shape} does not match {m.n_cols} columns")
    return m.to_scipy() @ x


def spmv_t(m: CsrMatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.n_rows,):
        raise ValueError(f"vector of length {x.shape} does not match {m.n_rows} rows")
    return m.to_scipy().T @ x


def gen_poisson(grid: int) -> CsrMatrix:
    """Five-point Laplacian on a ``grid x grid`` mesh (4 on the diagonal, -1 off it)."""
    if grid < 2:
        raise ValueError("grid must be at least 2")
    t = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(grid, grid))
    eye = sp.identity(grid)
    a = (sp.kron(eye, t) + sp.kron(t, eye)).tocsr()
    a.eliminate_zeros()  # kron may materialise dense blocks on tiny grids
    return CsrMatrix.from_scipy(a)


def identity(n: int) -> CsrMatrix:
    return CsrMatrix(n, n, np.arange(n + 1), np.arange(n), np.ones(n))


# -- Matrix Market -------------------------------------------------------------------

class MatrixMarketError(ValueError):
    pass


@dataclass(frozen=True)
class MatrixMarketHeader:
    field: str
    symmetry: str
    n_rows: int
    n_cols: int
    entries: int


def _parse_header(fh, path) -> MatrixMarketHeader:
    banner = fh.readline().split()
    if len(banner) != 5 or banner[0] != "%%MatrixMarket" or banner[1].lower() != "matrix":
        raise MatrixMarketError(f"{path}: missing %%MatrixMarket matrix banner")
    fmt, field, symmetry = (s.lower() for s in banner[2:])
    if fmt != "coordinate":
        raise MatrixMarketError(f"{path}: only coordinate format is supported, got {fmt}")
    if field not in ("real", "integer"):
        raise MatrixMarketError(f"{path}: field must be real or integer, got {field}")
    if symmetry not in ("general", "symmetric", "skew-symmetric"):
        raise MatrixMarketError(f"{path}: unsupported symmetry {symmetry}")
    line = fh.readline()
    while line.startswith("%") or not line.strip():
        if not line:
            raise MatrixMarketError(f"{path}: missing size line")
        line = fh.readline()
    try:
        n_rows, n_cols, entries = (int(t) for t in line.split())
    except ValueError:
        raise MatrixMarketError(f"{path}: malformed size line {line.strip()!r}") from None
    return MatrixMarketHeader(field, symmetry, n_rows, n_cols, entries)


def read_matrix_market_header(path) -> MatrixMarketHeader:
    with open(path) as fh:
        return _parse_header(fh, path)


def read_matrix_market(path) -> CsrMatrix:
    """Read a coordinate Matrix Market file; symmetric storage is expanded."""
    with open(path) as fh:
        hdr = _parse_header(fh, path)
        tokens = fh.read().split()
    if len(tokens) != 3 * hdr.entries:
        raise MatrixMarketError(f"{path}: expected {hdr.entries} entries, found {len(tokens) / 3:g}")
    body = np.array(tokens, dtype=object).reshape(-1, 3) if tokens else np.empty((0, 3), dtype=object)
    try:
        rows = body[:, 0].astype(np.int64) - 1
        cols = body[:, 1].astype(np.int64) - 1
        vals = body[:, 2].astype(np.float64)
    except ValueError as exc:
        raise MatrixMarketError(f"{path}: unparsable entry ({exc})") from None
    if rows.size and (rows.min() < 0 or rows.max() >= hdr.n_rows or cols.min() < 0 or cols.max() >= hdr.n_cols):
        raise MatrixMarketError(f"{path}: index out of bounds")
    if hdr.symmetry != "general":
        off = rows != cols
        sign = -1.0 if hdr.symmetry == "skew-symmetric" else 1.0
        rows, cols, vals = (np.concatenate([rows, cols[off]]), np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, sign * vals[off]]))
    return CsrMatrix.from_coo(hdr.n_rows, hdr.n_cols, rows, cols, vals)


def write_matrix_market(m: CsrMatrix, path, comment: str | None = None) -> None:
    """General coordinate real format; values use the shortest round-trip decimal."""
    rows = m.row_ids() + 1
    cols = m.col_indices + 1
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        if comment:
            for line in comment.splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{m.n_rows} {m.n_cols} {m.nnz}\n")
        fh.writelines(f"{r} {c} {v!r}\n" for r, c, v in zip(rows.tolist(), cols.tolist(), m.values.tolist()))


# -- norms -------------------------------------------------------------------------------

@dataclass(frozen=True)
class Norms:
    inf_norm: float
    two_norm_estimate: float
    frobenius_norm: float
    power_iterations: int

    def as_dict(self) -> dict:
        return {"inf_norm": self.inf_norm, "two_norm_estimate": self.two_norm_estimate,
                "frobenius_norm": self.frobenius_norm, "power_iterations": self.power_iterations}


def inf_norm(m: CsrMatrix) -> float:
    sums = np.add.reduceat(np.abs(m.values), m.row_offsets[:-1]) if m.nnz else np.zeros(1)
    sums = np.where(np.diff(m.row_offsets) == 0, 0.0, sums[: m.n_rows])
    return float(sums.max())


def frobenius_norm(m: CsrMatrix) -> float:
    return float(np.linalg.norm(m.values))


def two_norm_estimate(m: CsrMatrix, rtol: float = 1e-6, max_iter: int = 10_000,
                      seed: int = 0) -> tuple[float, int]:
    """Largest singular value by power iteration on ``A^T A``.

    Stops once ``||A^T A x - mu x|| <= rtol * mu`` for the Rayleigh quotient
    ``mu``.  Each iterate lower-bounds the true value.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(m.n_cols)
    x /= np.linalg.norm(x)
    a = m.to_scipy()
    at = a.T.tocsr()
    mu = 0.0
    for it in range(1, max_iter + 1):
        y = at @ (a @ x)
        mu = float(x @ y)
        if mu == 0.0:
            return 0.0, it
        if np.linalg.norm(y - mu * x) <= rtol * mu:
            break
        x = y / np.linalg.norm(y)
    return math.sqrt(mu), it


def norms(m: CsrMatrix, rtol: float = 1e-6, max_iter: int = 10_000) -> Norms:
    if m.nnz == 0:
        raise ValueError("norms of an empty matrix")
    two, it = two_norm_estimate(m, rtol, max_iter)
    return Norms(inf_norm(m), two, frobenius_norm(m), it)


# -- equilibration -----------------------------------------------------------------------

@dataclass(frozen=True)
class EquilibrationScaling:
    row_scale: np.ndarray
    col_scale: np.ndarray

    def as_dict(self) -> dict:
        return {"row_scale": self.row_scale.tolist(), "col_scale": self.col_scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "EquilibrationScaling":
        return cls(np.asarray(d["row_scale"], dtype=float), np.asarray(d["col_scale"], dtype=float))


class EmptyLineError(ValueError):
    def __init__(self, kind: str, index: int):
        super().__init__(f"{kind} {index} has no nonzero entry")
        self.kind = kind
        self.index = index


def equilibrate(m: CsrMatrix) -> tuple[CsrMatrix, EquilibrationScaling]:
    """Row then column scaling with reciprocal maxima; the sparsity pattern is unchanged."""
    absval = np.abs(m.values)
    rows = m.row_ids()
    rmax = np.zeros(m.n_rows)
    np.maximum.at(rmax, rows, absval)
    if (rmax == 0).any():
        raise EmptyLineError("row", int(np.flatnonzero(rmax == 0)[0]))
    # Divide rather than multiply by reciprocals: every line maximum then lands on exactly 1,
    # which makes a second pass return unit scalings.
    row_scaled = m.values / rmax[rows]
    cmax = np.zeros(m.n_cols)
    np.maximum.at(cmax, m.col_indices, np.abs(row_scaled))
    if (cmax == 0).any():
        raise EmptyLineError("column", int(np.flatnonzero(cmax == 0)[0]))
    scaled = m.with_values(row_scaled / cmax[m.col_indices])
    return scaled, EquilibrationScaling(1.0 / rmax, 1.0 / cmax)


def apply_scaling_to_rhs(b, scaling: EquilibrationScaling) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    if b.shape != scaling.row_scale.shape:
        raise ValueError("right-hand side length does not match the row scaling")
    return scaling.row_scale * b


def unscale_solution(x_hat, scaling: EquilibrationScaling) -> np.ndarray:
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x_hat.shape != scaling.col_scale.shape:
        raise ValueError("solution length does not match the column scaling")
    return scaling.col_scale * x_hat


def scale_rows(m: CsrMatrix, factor: float, every: int = 1) -> CsrMatrix:
    """Multiply every ``every``-th row (starting at row 0) by ``factor``."""
    rows = m.row_ids()
    f = np.where(rows % every == 0, factor, 1.0)
    return m.with_values(m.values * f)
