"""Restarted GMRES with Modified Gram-Schmidt, instrumented to count
the errors a single bit flip could inject into each orthogonalization
dot product.

Instrumentation only reads the vectors.  Running with it on or off gives
bitwise-identical iterates.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dot_fault import UNIT_INTERVAL, ExponentInterval, extract_interval
from .lookup_table import DEFAULT_MODEL, ErrorClassTally, ErrorLookupTable, ErrorModel, get_table
from .sparse_la import CsrMatrix, frobenius_norm, norms


@dataclass(frozen=True)
class GmresConfig:
    restart: int = 25
    max_total_iterations: int = 1000
    rtol: float = 1e-8
    rhs: str = "ones"  # "ones", "random:SEED" or "file:PATH"
    instrument: bool = True
    include_norm_dot: bool = True
    log_intervals: bool = False
    check_orthogonality: bool = False
    breakdown_tol: float = 1e-12
    model: ErrorModel = DEFAULT_MODEL

    def __post_init__(self):
        if self.restart < 1:
            raise ValueError("restart must be at least 1")
        if self.max_total_iterations < 1:
            raise ValueError("max_total_iterations must be positive")
        if not 0 < self.rtol < 1:
            raise ValueError("rtol must be in (0, 1)")
        parse_rhs_mode(self.rhs)


def parse_rhs_mode(mode: str) -> tuple[str, object]:
    if mode == "ones":
        return "ones", None
    if mode.startswith("random:"):
        try:
            return "random", int(mode.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad seed in rhs mode {mode!r}") from None
    if mode.startswith("file:") and len(mode) > 5:
        return "file", mode.split(":", 1)[1]
    raise ValueError(f"rhs mode must be ones, random:SEED or file:PATH, got {mode!r}")


def make_rhs(a: CsrMatrix, mode: str) -> np.ndarray:
    kind, arg = parse_rhs_mode(mode)
    if kind == "ones":
        return a.to_scipy() @ np.ones(a.n_cols)
    if kind == "random":
        return np.random.default_rng(arg).standard_normal(a.n_rows)
    b = np.loadtxt(Path(arg), dtype=np.float64, ndmin=1)
    if b.shape != (a.n_rows,):
        raise ValueError(f"{arg}: expected {a.n_rows} values, found {b.size}")
    return b


class GivensLsq:
    """Incremental least squares for ``min ||H y - beta e1||`` with H upper Hessenberg."""

    def __init__(self, beta: float, max_cols: int):
        self.r = np.zeros((max_cols + 1, max_cols))
        self.g = np.zeros(max_cols + 1)
        self.g[0] = beta
        self.cs = np.zeros(max_cols)
        self.sn = np.zeros(max_cols)
        self.k = 0

    def add_column(self, h: np.ndarray) -> float:
        """Append column ``h`` (length ``k + 2``); return the new residual norm."""
        k = self.k
        h = np.array(h, dtype=np.float64)
        for i in range(k):
            t = self.cs[i] * h[i] + self.sn[i] * h[i + 1]
            h[i + 1] = -self.sn[i] * h[i] + self.cs[i] * h[i + 1]
            h[i] = t
        d = math.hypot(h[k], h[k + 1])
        if d == 0.0:
            c, s = 1.0, 0.0
        else:
            c, s = h[k] / d, h[k + 1] / d
        self.cs[k], self.sn[k] = c, s
        h[k], h[k + 1] = d, 0.0
        self.r[: k + 2, k] = h[: k + 2]
        self.g[k + 1] = -s * self.g[k]
        self.g[k] = c * self.g[k]
        self.k = k + 1
        return abs(self.g[k + 1])

    def solve(self) -> np.ndarray:
        k = self.k
        y = np.zeros(k)
        for i in range(k - 1, -1, -1):
            y[i] = (self.g[i] - self.r[i, i + 1:k] @ y[i + 1:k]) / self.r[i, i]
        return y

    @property
    def residual(self) -> float:
        return abs(self.g[self.k])


def hessenberg_lsq(h, beta: float) -> tuple[np.ndarray, float]:
    """Solve ``min_y ||H y - beta e1||`` for an ``(j+1) x j`` Hessenberg ``H``."""
    h = np.asarray(h, dtype=np.float64)
    rows, cols = h.shape
    if rows != cols + 1:
        raise ValueError("H must have one more row than columns")
    lsq = GivensLsq(beta, cols)
    for k in range(cols):
        lsq.add_column(h[: k + 2, k])
    return lsq.solve(), lsq.residual


@dataclass
class GmresReport:
    x: np.ndarray
    residuals: list[float]  # relative to ||b||, one per inner iteration plus the initial one
    converged: bool
    stop_reason: str
    iterations: int
    restarts: int
    tally: ErrorClassTally
    threshold: float
    dots_instrumented: int = 0
    interval_log: list = field(default_factory=list)
    max_orthogonality_error: float = 0.0
    max_q_norm_error: float = 0.0
    seconds: float = 0.0

    def as_dict(self) -> dict:
        return {
            "converged": self.converged, "stop_reason": self.stop_reason,
            "iterations": self.iterations, "restarts": self.restarts,
            "residual_history": self.residuals, "threshold": self.threshold,
            "dots_instrumented": self.dots_instrumented,
            "tally": self.tally.as_dict(),
            "max_orthogonality_error": self.max_orthogonality_error,
            "max_q_norm_error": self.max_q_norm_error,
            "timing_seconds": self.seconds,
            **({"intervals": self.interval_log} if self.interval_log else {}),
        }


def _dot(x: np.ndarray, y: np.ndarray) -> float:
    # pairwise summation inside numpy, independent of BLAS threading
    return float(np.sum(x * y))


def _check_finite(v, what: str, it: int) -> None:
    if not np.isfinite(v).all():
        raise FloatingPointError(f"non-finite value in {what} at iteration {it}")


class _Instrument:
    def __init__(self, table: ErrorLookupTable | None, log: bool):
        self.table = table
        self.counts = np.zeros(4, dtype=np.int64)
        self.dots = 0
        self.log = [] if log else None

    def dot(self, qi: ExponentInterval, v: np.ndarray, tag) -> None:
        if self.table is None:
            return
        iv = extract_interval(v)
        self.dots += 1
        if self.log is not None:
            self.log.append({"site": tag, "q": list(qi.as_tuple()), "v": list(iv.as_tuple())})
        if iv.degenerate or qi.degenerate:
            return
        self.counts += self.table.rect(qi.lo, qi.hi, iv.lo, iv.hi)

    def self_dot(self, v: np.ndarray, tag) -> None:
        if self.table is None:
            return
        iv = extract_interval(v)
        self.dot(iv, v, tag)


def gmres_solve(a: CsrMatrix, b, cfg: GmresConfig = GmresConfig(), *,
                table: ErrorLookupTable | None = None, threshold: float | None = None,
                x0=None) -> GmresReport:
    """Restarted GMRES(m) with MGS orthogonalization.

    When instrumentation is on, every ``h_ij = q_i . v`` is classified by
    pairing the fixed interval ``[1, 1023]`` for ``q_i`` with the exponent
    range of the current ``v``; the norm ``||v||`` is counted as a self-dot.
    ``threshold`` defaults to the two-norm estimate of ``a``.
    """
    start = time.perf_counter()
    if a.n_rows != a.n_cols:
        raise ValueError("matrix must be square")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (a.n_rows,):
        raise ValueError("right-hand side length does not match the matrix")
    if a.nnz == 0 or not np.any(a.values):
        raise ValueError("matrix is zero")
    n = a.n_rows
    A = a.to_scipy()
    if cfg.instrument:
        if table is None:
            if threshold is None:
                threshold = norms(a).two_norm_estimate
            table = get_table(cfg.model, threshold)
        threshold = table.threshold
    inst = _Instrument(table if cfg.instrument else None, cfg.log_intervals)
    breakdown = cfg.breakdown_tol * frobenius_norm(a)
    bnorm = float(np.linalg.norm(b))
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    if bnorm == 0.0:
        bnorm = 1.0
    residuals: list[float] = []
    total = 0
    restarts = 0
    reason = "max_iterations"
    converged = False
    max_orth = 0.0
    max_qn = 0.0
    m = cfg.restart
    while True:
        r = b - A @ x
        _check_finite(r, "residual", total)
        beta = float(np.linalg.norm(r))
        _check_finite(beta, "residual norm", total)
        if not residuals:
            residuals.append(beta / bnorm)
        if beta / bnorm <= cfg.rtol:
            converged, reason = True, "converged"
            break
        if total >= cfg.max_total_iterations:
            break
        q = np.zeros((m + 1, n))
        q[0] = r / beta
        lsq = GivensLsq(beta, m)
        j_done = 0
        happy = False
        for j in range(m):
            if total >= cfg.max_total_iterations:
                break
            v = A @ q[j]
            _check_finite(v, "matrix product", total)
            h = np.zeros(j + 2)
            for i in range(j + 1):
                inst.dot(UNIT_INTERVAL, v, [total, i])
                h[i] = _dot(q[i], v)
                v = v - h[i] * q[i]
            if cfg.include_norm_dot:
                inst.self_dot(v, [total, "norm"])
            h[j + 1] = float(np.linalg.norm(v))
            _check_finite(h, "Hessenberg column", total)
            total += 1
            j_done = j + 1
            res = lsq.add_column(h)
            _check_finite(res, "residual estimate", total)
            residuals.append(res / bnorm)
            if h[j + 1] <= breakdown:
                happy = True
                break
            q[j + 1] = v / h[j + 1]
            if cfg.check_orthogonality:
                max_qn = max(max_qn, abs(float(np.linalg.norm(q[j + 1])) - 1.0))
            if res / bnorm <= cfg.rtol:
                break
        if cfg.check_orthogonality and j_done:
            k = j_done + (0 if happy else 1)
            qq = q[:k] @ q[:k].T
            max_orth = max(max_orth, float(np.abs(qq - np.eye(k)).max()))
        if j_done:
            x = x + lsq.solve() @ q[:j_done]
            _check_finite(x, "solution update", total)
        if happy:
            reason, converged = "happy_breakdown", True
            break
        restarts += 1
    tally = ErrorClassTally.from_counts(inst.counts, threshold if threshold is not None else math.nan)
    return GmresReport(x, residuals, converged, reason, total, restarts, tally,
                       float(threshold) if threshold is not None else math.nan,
                       inst.dots, inst.log or [], max_orth, max_qn,
                       time.perf_counter() - start)
