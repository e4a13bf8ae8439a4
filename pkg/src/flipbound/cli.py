"""Command-line front end: ``flipbound <command> ...`` or ``python -m flipbound``.

Exit status is 0 on success, 2 on a usage error and 1 on a runtime error.
Errors are reported on stderr as one line, ``error: usage: ...`` or
``error: runtime: <Type>: ...``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import float_anatomy as fa
from . import scalar_fault as sf
from .dot_fault import classify_errors, enumerate_dot_errors, extract_interval, tally_dot_errors
from .gmres import GmresConfig, gmres_solve, make_rhs
from .lookup_table import ARITHMETICS, OPERANDS, SITES, WEIGHTINGS, ErrorModel, build_lookup_table, get_table
from .monte_carlo import McConfig, run_slice, run_surface, slice_to_csv
from .sparse_la import (apply_scaling_to_rhs, equilibrate, gen_poisson, norms, read_matrix_market,
                        unscale_solution, write_matrix_market)

MANIFEST_SCHEMA = "flipbound.manifest/1"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_value(text: str) -> float:
    """Decimal, hex-float (``0x1.8p+1``) or raw bit pattern (``bits:0x3ff0...``)."""
    t = text.strip()
    if t.startswith("bits:"):
        return fa.from_bits(int(t[5:], 0))
    try:
        return float(t)
    except ValueError:
        pass
    try:
        return float.fromhex(t)
    except ValueError:
        raise ValueError(f"cannot parse {text!r} as a binary64 value") from None


def read_vector(path) -> np.ndarray:
    vals = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                vals.append(parse_value(line))
    if not vals:
        raise ValueError(f"{path}: no values")
    return np.array(vals, dtype=np.float64)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Run:
    """Collects outputs and inputs for the manifest of one invocation."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.seeds: list[int] = []
        self.start = time.perf_counter()

    def input(self, path) -> Path:
        p = Path(path)
        self.inputs[str(p)] = _sha256(p)
        return p

    def emit(self, text: str, path=None) -> None:
        if path is None:
            sys.stdout.write(text)
            if not text.endswith("\n"):
                sys.stdout.write("\n")
        else:
            Path(path).write_text(text, encoding="utf-8")
            self.outputs.append(str(path))

    def manifest(self) -> dict:
        cfg = {k: v for k, v in vars(self.args).items() if k not in ("func", "manifest")}
        return {
            "schema": MANIFEST_SCHEMA,
            "subcommand": " ".join(x for x in (self.args.command, getattr(self.args, "action", None)) if x),
            "argv": self.argv,
            "config": cfg,
            "seeds": self.seeds,
            "version": __version__,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "started_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "wall_clock_seconds": time.perf_counter() - self.start,
        }

    def write_manifest(self) -> None:
        path = self.args.manifest
        if path is None and self.outputs:
            path = self.outputs[0] + ".manifest.json"
        if path is not None:
            Path(path).write_text(json.dumps(self.manifest(), indent=2, default=str) + "\n")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def _model(args) -> ErrorModel:
    return ErrorModel(args.weighting, args.arithmetic, args.operands, args.sites)


# -- commands ------------------------------------------------------------------------------

def cmd_anatomy(args, run: Run) -> None:
    x = parse_value(args.value)
    an = fa.decompose(x)
    if args.json:
        run.emit(_json({"value": repr(x), "bits": f"0x{an.bits:016x}", "sign": an.sign,
                        "biased_exponent": an.biased_exponent, "exponent_bits": an.exponent_pattern,
                        "mantissa": f"0x{an.mantissa:013x}", "kind": an.kind.value}), args.out)
        return
    lines = [
        f"value            {x!r}",
        f"bits             0x{an.bits:016x}",
        f"sign             {an.sign}",
        f"biased exponent  {an.biased_exponent:<5d} {an.exponent_pattern}",
        f"power of two     2^{an.biased_exponent - fa.BIAS}" if an.kind is fa.ValueKind.NORMAL else
        "power of two     -",
        f"mantissa         0x{an.mantissa:013x}",
        f"kind             {an.kind.value}",
    ]
    run.emit("\n".join(lines) + "\n", args.out)


def _render_error(rec) -> str:
    if rec.abs_error is None:
        return "NonNumeric"
    f = rec.abs_error_float
    if math.isfinite(f):
        return repr(f)
    n, d = rec.abs_error.numerator, rec.abs_error.denominator
    return f"{n}/{d}" if d != 1 else str(n)


def cmd_perturb(args, run: Run) -> None:
    x = parse_value(args.value)
    recs = sf.enumerate_perturbations(x)
    header = ["bit", "region", "perturbed", "perturbed_pow2", "abs_error", "delta_order", "outcome"]
    rows = [[r.bit, r.region.value, repr(r.perturbed), sf.format_pow2(r.perturbed),
             _render_error(r), r.delta_order, r.outcome.value] for r in recs]
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        run.emit(buf.getvalue(), args.out)
    else:
        widths = [max(len(str(c)) for c in col) for col in zip(header, *rows)]
        lines = ["  ".join(str(c).ljust(w) for c, w in zip(row, widths)).rstrip() for row in [header] + rows]
        run.emit("\n".join(lines) + "\n", args.out)


def cmd_dot_analyze(args, run: Run) -> None:
    a = read_vector(run.input(args.a))
    b = read_vector(run.input(args.b))
    if a.size != b.size:
        raise ValueError(f"vector lengths differ: {a.size} vs {b.size}")
    threshold = args.threshold
    if threshold is None:
        threshold = float(np.linalg.norm(a) * np.linalg.norm(b))
        if not threshold > 1:
            threshold = 2.0
    if not threshold > 1:
        raise UsageError("--threshold must exceed 1")
    out = {"schema": "flipbound.dot-analyze/1", "length": int(a.size), "threshold": threshold}
    if args.exact:
        recs = enumerate_dot_errors(a, b, arithmetic=args.arithmetic)
        tally = tally_dot_errors(recs, threshold, region="all" if args.all_bits else "exponent")
        out.update(mode="exact", bits="all" if args.all_bits else "exponent")
        if args.csv:
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["index", "site", "bit", "region", "original", "perturbed", "abs_error", "class"])
            for r in recs:
                w.writerow([r.index, r.site, r.bit, r.region.value, repr(r.original), repr(r.perturbed),
                            _render_error(r), int(r.error_class(threshold))])
            Path(args.csv).write_text(buf.getvalue())
            run.outputs.append(args.csv)
    else:
        ia, ib = extract_interval(a), extract_interval(b)
        model = _model(args)
        table = get_table(model, threshold, args.threads)
        tally = classify_errors(ia, ib, table)
        out.update(mode="interval", model=model.key(), interval_a=list(ia.as_tuple()),
                   interval_b=list(ib.as_tuple()))
        if args.csv:
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["exp_a", "exp_b", "class1", "class2", "class3", "class4"])
            if not (ia.degenerate or ib.degenerate):
                for i in range(ia.lo, ia.hi + 1):
                    for j in range(ib.lo, ib.hi + 1):
                        w.writerow([i, j, *table.counts[i, j].tolist()])
            Path(args.csv).write_text(buf.getvalue())
            run.outputs.append(args.csv)
    out["tally"] = tally.as_dict()
    run.emit(_json(out), args.out)


def cmd_table_build(args, run: Run) -> None:
    if not args.threshold > 1:
        raise UsageError("--threshold must exceed 1")
    table = build_lookup_table(_model(args), args.threshold, args.threads)
    table.save(args.out)
    run.outputs.append(args.out)
    sys.stderr.write(f"wrote {args.out} ({os.path.getsize(args.out)} bytes)\n")


def _mc_config(args, run: Run) -> McConfig:
    if args.grid_min > args.grid_max:
        raise UsageError("--grid-min exceeds --grid-max")
    run.seeds.append(args.seed)
    return McConfig.from_range(args.grid_min, args.grid_max, n=args.n, samples=args.samples,
                               threshold=args.threshold, seed=args.seed)


def cmd_mc_surface(args, run: Run) -> None:
    surface = run_surface(_mc_config(args, run), args.threads)
    run.emit(surface.to_csv(), args.out)


def cmd_mc_slice(args, run: Run) -> None:
    cfg = _mc_config(args, run)
    if args.mode == "fixed" and args.fixed_mag is None:
        raise UsageError("--mode fixed needs --fixed-mag")
    if args.mode == "fixed" and args.fixed_mag not in cfg.grid:
        raise UsageError(f"--fixed-mag {args.fixed_mag} outside the grid")
    rows = run_slice(cfg, args.mode, args.fixed_mag, args.threads)
    run.emit(slice_to_csv(rows), args.out)


def cmd_matrix_poisson(args, run: Run) -> None:
    m = gen_poisson(args.grid)
    write_matrix_market(m, args.out, comment=f"2-D Poisson, grid {args.grid}")
    run.outputs.append(args.out)


def cmd_matrix_norms(args, run: Run) -> None:
    m = read_matrix_market(run.input(args.input))
    nm = norms(m)
    out = {"schema": "flipbound.norms/1", "n_rows": m.n_rows, "n_cols": m.n_cols, "nnz": m.nnz,
           "explicit_zeros": m.explicit_zeros, **nm.as_dict()}
    run.emit(_json(out), args.out)


def cmd_matrix_equilibrate(args, run: Run) -> None:
    m = read_matrix_market(run.input(args.input))
    scaled, scaling = equilibrate(m)
    write_matrix_market(scaled, args.out, comment="row/column equilibrated")
    run.outputs.append(args.out)
    if args.scales:
        Path(args.scales).write_text(_json({"schema": "flipbound.scales/1", **scaling.as_dict()}))
        run.outputs.append(args.scales)


def cmd_gmres_analyze(args, run: Run) -> None:
    a = read_matrix_market(run.input(args.matrix))
    if args.rhs.startswith("file:"):
        run.input(args.rhs[5:])
    if args.rhs.startswith("random:"):
        try:
            run.seeds.append(int(args.rhs[7:]))
        except ValueError:
            raise UsageError(f"bad --rhs {args.rhs!r}") from None
    try:
        cfg = GmresConfig(restart=args.restart, max_total_iterations=args.max_iters, rtol=args.rtol,
                          rhs=args.rhs, include_norm_dot=not args.no_norm_dot,
                          log_intervals=args.log_intervals, model=_model(args))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    b = make_rhs(a, args.rhs)
    scaling = None
    if args.equilibrate:
        a_solve, scaling = equilibrate(a)
        b_solve = apply_scaling_to_rhs(b, scaling)
    else:
        a_solve, b_solve = a, b
    nm = norms(a_solve)
    threshold = args.threshold if args.threshold is not None else nm.two_norm_estimate
    table = get_table(cfg.model, threshold, args.threads)
    rep = gmres_solve(a_solve, b_solve, cfg, table=table)
    x = rep.x if scaling is None else unscale_solution(rep.x, scaling)
    true_res = float(np.linalg.norm(b - a.to_scipy() @ x) / np.linalg.norm(b))
    out = {
        "schema": "flipbound.gmres-report/1",
        "config": {"matrix": str(args.matrix), "equilibrate": args.equilibrate, "restart": args.restart,
                   "max_iters": args.max_iters, "rtol": args.rtol, "rhs": args.rhs,
                   "include_norm_dot": not args.no_norm_dot, "model": cfg.model.key()},
        "matrix": {"n_rows": a.n_rows, "nnz": a.nnz, "norms_solved_system": nm.as_dict()},
        "unscaled_relative_residual": true_res,
        **rep.as_dict(),
    }
    run.emit(_json(out), args.out)


def cmd_replay(args, run: Run) -> int:
    with open(args.manifest_file) as fh:
        manifest = json.load(fh)
    if manifest.get("schema") != MANIFEST_SCHEMA:
        raise ValueError(f"{args.manifest_file}: not a run manifest")
    return main(manifest["argv"])


# -- parser --------------------------------------------------------------------------------

def _add_model_flags(p) -> None:
    p.add_argument("--weighting", choices=WEIGHTINGS, default="exponent")
    p.add_argument("--arithmetic", choices=ARITHMETICS, default="binary64")
    p.add_argument("--operands", choices=OPERANDS, default="representative")
    p.add_argument("--sites", choices=SITES, default="abc")


def _add_mc_flags(p) -> None:
    p.add_argument("--n", type=int, default=100, help="vector length")
    p.add_argument("--samples", type=int, default=1000, help="vector pairs per cell")
    p.add_argument("--grid-min", type=int, default=-10)
    p.add_argument("--grid-max", type=int, default=10)
    p.add_argument("--threshold", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flipbound", description="Single-bit fault analysis for binary64 kernels.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    parser.add_argument("--manifest", help="manifest path (default: <first output>.manifest.json)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("anatomy", help="sign, exponent and mantissa of a value")
    p.add_argument("value")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_anatomy)

    p = sub.add_parser("perturb", help="all 64 single-bit flips of a value")
    p.add_argument("value")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("dot-analyze", help="classify possible dot-product errors")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--threshold", type=float)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true", help="flip every bit of every element")
    mode.add_argument("--interval", action="store_true", help="exponent intervals and lookup table (default)")
    p.add_argument("--all-bits", action="store_true", help="exact mode: count sign and mantissa bits too")
    p.add_argument("--csv", help="per-bit (exact) or per-cell (interval) detail")
    p.add_argument("--out")
    _add_model_flags(p)
    p.set_defaults(func=cmd_dot_analyze)

    p = sub.add_parser("table", help="lookup table")
    tsub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    q = tsub.add_parser("build", help="write the 2047 x 2047 table")
    q.add_argument("--out", required=True)
    q.add_argument("--threshold", type=float, default=2.0)
    _add_model_flags(q)
    q.set_defaults(func=cmd_table_build)

    p = sub.add_parser("mc", help="Monte Carlo fault campaign")
    msub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    q = msub.add_parser("surface")
    _add_mc_flags(q)
    q.set_defaults(func=cmd_mc_surface)
    q = msub.add_parser("slice")
    _add_mc_flags(q)
    q.add_argument("--mode", choices=("diagonal", "fixed"), default="diagonal")
    q.add_argument("--fixed-mag", type=int)
    q.set_defaults(func=cmd_mc_slice)

    p = sub.add_parser("matrix", help="sparse matrix utilities")
    xsub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    q = xsub.add_parser("poisson")
    q.add_argument("--grid", type=int, default=100)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_matrix_poisson)
    q = xsub.add_parser("norms")
    q.add_argument("--in", dest="input", required=True)
    q.add_argument("--out")
    q.set_defaults(func=cmd_matrix_norms)
    q = xsub.add_parser("equilibrate")
    q.add_argument("--in", dest="input", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--scales")
    q.set_defaults(func=cmd_matrix_equilibrate)

    p = sub.add_parser("gmres", help="instrumented GMRES")
    gsub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    q = gsub.add_parser("analyze")
    q.add_argument("--matrix", required=True)
    q.add_argument("--equilibrate", action="store_true")
    q.add_argument("--restart", type=int, default=25)
    q.add_argument("--max-iters", type=int, default=1000)
    q.add_argument("--rtol", type=float, default=1e-8)
    q.add_argument("--rhs", default="ones", help="ones | random:SEED | file:PATH")
    q.add_argument("--threshold", type=float, help="class 2/3 boundary (default: two-norm estimate)")
    q.add_argument("--no-norm-dot", action="store_true", help="do not count ||v|| as a self-dot")
    q.add_argument("--log-intervals", action="store_true")
    q.add_argument("--out")
    _add_model_flags(q)
    q.set_defaults(func=cmd_gmres_analyze)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest_file")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be positive")
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    run = Run(args, argv)
    try:
        status = args.func(args, run)
        if args.command != "replay":
            run.write_manifest()
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: runtime: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return status or 0


if __name__ == "__main__":
    sys.exit(main())
