"""``pald`` command line: compute, analyze, bench, predict, convert, tune.

Exit codes: 0 success, 2 invalid input, 3 unsupported combination, 4 I/O.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import analysis, bench, costmodel, ingest
from .api import ALGORITHMS, compute
from .blocked import SWEEP_SIZES, BlockConfig, autotune_blocks, default_blocks
from .core import CohesionMatrix, DistanceMatrix
from .errors import FormatError, PaldError, ValidationError

EXIT_OK, EXIT_INVALID, EXIT_UNSUPPORTED, EXIT_IO = 0, 2, 3, 4

_EXT_FORMATS = {
    ".csv": "csv",
    ".bin": "bin",
    ".pald": "bin",
    ".edges": "edges",
    ".el": "edges",
    ".txt": "edges",
}


def _format_for(path: str, fmt: str) -> str:
    if fmt != "auto":
        return fmt
    ext = Path(path).suffix.lower()
    if ext not in _EXT_FORMATS:
        raise ValidationError(f"cannot infer format of {path!r}; pass it explicitly")
    return _EXT_FORMATS[ext]


def read_distances(path: str, fmt: str = "auto", dtype=np.float64, workers: int = 1) -> DistanceMatrix:
    fmt = _format_for(path, fmt)
    if fmt == "csv":
        return ingest.read_distance_csv(path, dtype=dtype)
    if fmt == "bin":
        return ingest.read_distance_binary(path).astype(dtype)
    if fmt == "points":
        return ingest.points_to_distances(ingest.read_points(path), dtype=dtype)
    if fmt == "edges":
        return ingest.graph_to_distances(ingest.read_edge_list(path), workers=workers, dtype=dtype)
    raise ValidationError(f"unknown input format {fmt!r}")


def write_matrix(path: str | None, values, fmt: str, *, labels=None, meta=None) -> None:
    if path is None or path == "-":
        ingest.write_matrix_csv(sys.stdout, values, labels=labels, meta=meta)
        return
    fmt = "csv" if fmt == "auto" and Path(path).suffix.lower() != ".bin" else fmt
    fmt = "bin" if fmt == "auto" else fmt
    try:
        if fmt == "csv":
            ingest.write_matrix_csv(path, values, labels=labels, meta=meta)
        elif fmt == "bin":
            ingest.write_binary(path, values)
        else:
            raise ValidationError(f"unknown output format {fmt!r}")
    except OSError as e:
        if isinstance(e, FormatError):
            raise
        raise FormatError(f"cannot write {path}: {e}") from e


def _threads_default() -> int:
    raw = os.environ.get("PALD_THREADS", "1")
    try:
        p = int(raw)
    except ValueError:
        raise ValidationError(f"PALD_THREADS must be an integer, got {raw!r}") from None
    if p < 1:
        raise ValidationError(f"PALD_THREADS must be >= 1, got {p}")
    return p


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


# ---------------------------------------------------------------------------
# commands


def cmd_compute(args) -> int:
    dtype = np.dtype(args.dtype)
    D = read_distances(args.input, args.input_format, dtype, args.workers)
    defaults = default_blocks(dtype.itemsize)
    if args.autotune:
        variant = "triplet" if args.alg and "triplet" in args.alg else "pairwise"
        defaults = autotune_blocks(D.n, variant, args.autotune, dtype=dtype)
    blocks = BlockConfig(
        b=args.b or defaults.b,
        b_focus=args.b_focus or defaults.b_focus,
        b_cohesion=args.b_cohesion or defaults.b_cohesion,
    )
    threads = args.threads if args.threads is not None else _threads_default()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = compute(
            D,
            args.alg,
            args.policy,
            blocks=blocks,
            threads=threads,
            deterministic=args.deterministic,
            normalized=not args.raw,
            validate=args.validate,
            dtype=dtype,
        )
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    meta = {
        "kind": "cohesion",
        "n": D.n,
        "algorithm": res.algorithm,
        "policy": res.policy.value,
        "normalized": str(res.cohesion.normalized).lower(),
        "dtype": dtype.name,
    }
    labels = list(D.labels) if D.labels else None
    write_matrix(args.out, res.cohesion.values, args.out_format, labels=labels, meta=meta)
    if args.focus_out:
        write_matrix(args.focus_out, res.focus.sizes, "auto", labels=labels,
                     meta={**meta, "kind": "focus-size"})
    if args.depths_out and res.depths is not None:
        ingest.write_vector_csv(args.depths_out, res.depths.depths, name="local_depth",
                                labels=labels, meta={**meta, "kind": "local-depth"})
    t = res.timing
    report = sys.stdout if args.out not in (None, "-") else sys.stderr
    lines = [
        f"n: {D.n}",
        f"algorithm: {res.algorithm}",
        f"policy: {res.policy.value}",
        f"threads: {res.threads}",
    ]
    if res.blocks:
        lines.append(f"blocks: b={blocks.b} b_focus={blocks.b_focus} b_cohesion={blocks.b_cohesion}")
    lines += [
        f"wall_s: {t.total_seconds:.6f}",
        f"local_focus_s: {t.local_focus_seconds:.6f}",
        f"cohesion_s: {t.cohesion_seconds:.6f}",
        f"memory_overhead_s: {t.memory_overhead_seconds:.6f}",
    ]
    print("\n".join(lines), file=report)
    return EXIT_OK


def _read_cohesion(path: str, fmt: str):
    fmt = _format_for(path, fmt)
    if fmt == "csv":
        return ingest.read_cohesion_csv(path)
    if fmt == "bin":
        vals = ingest.read_binary(path).astype(np.float64)
        # no flag in the binary header: normalized iff every row sum is a probability
        normalized = bool(np.all(vals.sum(axis=1) <= 1 + 1e-6))
        return CohesionMatrix(vals, normalized=normalized), {}, None
    raise ValidationError(f"cohesion input must be csv or bin, got {fmt!r}")


def cmd_analyze(args) -> int:
    C, meta, labels = _read_cohesion(args.input, args.input_format)
    if meta.get("kind") not in (None, "cohesion"):
        raise ValidationError(f"{args.input} holds a {meta['kind']} matrix, not cohesion")
    if not C.normalized:
        raise ValidationError("analyze needs a normalized cohesion matrix (compute without --raw)")
    name = (lambda i: labels[i]) if labels else str
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        if args.mode == "strong-ties":
            g = analysis.strong_ties(C, args.threshold)
            print(f"# threshold: {g.threshold:.17g}", file=out)
            print(f"# edges: {len(g.edges)}", file=out)
            print("x,y,strength", file=out)
            for x, y, s in g.edges:
                print(f"{name(x)},{name(y)},{s:.17g}", file=out)
        else:
            if args.focus is None:
                raise ValidationError("neighbors mode needs --focus")
            focus = _resolve_point(args.focus, labels, C.n)
            nb = analysis.neighbors(C, focus, args.k)
            print(f"# focus: {name(focus)}", file=out)
            print("rank,point,strength", file=out)
            for r, (z, s) in enumerate(nb, 1):
                print(f"{r},{name(z)},{s:.17g}", file=out)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def _resolve_point(token: str, labels, n: int) -> int:
    if labels and token in labels:
        return labels.index(token)
    try:
        i = int(token)
    except ValueError:
        raise ValidationError(f"unknown point {token!r}") from None
    if not 0 <= i < n:
        raise ValidationError(f"point index {i} out of range [0, {n})")
    return i


def cmd_bench(args) -> int:
    for a in args.algs:
        if a not in ALGORITHMS:
            raise ValidationError(f"unknown algorithm {a!r}")
    dtype = np.dtype(args.dtype)
    d = default_blocks(dtype.itemsize)
    configs = [
        BlockConfig(b, bf, bc)
        for b in (args.b or [d.b])
        for bf in (args.b_focus or [d.b_focus])
        for bc in (args.b_cohesion or [d.b_cohesion])
    ]
    threads = args.threads or [_threads_default()]

    def progress(row):
        print(f"{row.algorithm} n={row.n} b={row.b}/{row.b_focus}/{row.b_cohesion} "
              f"p={row.p} trial={row.trial} {row.total_s:.4f}s", file=sys.stderr)

    rows = bench.run_bench(args.sizes, args.algs, blocks=configs, threads=threads,
                           trials=args.trials, seed=args.seed, dtype=dtype,
                           progress=None if args.quiet else progress)
    if args.out:
        try:
            bench.write_csv(args.out, rows)
        except OSError as e:
            raise FormatError(f"cannot write {args.out}: {e}") from e
    print(bench.format_summary(bench.summarize(rows, args.baseline), args.baseline))
    return EXIT_OK


def cmd_predict(args) -> int:
    m = costmodel.load_machine_params(args.machine) if args.machine else costmodel.MachineParams()
    variants = ["pairwise", "triplet"] if args.variant == "both" else [args.variant]
    lb = costmodel.lower_bound(args.n, m.M)
    print(f"n: {args.n}")
    print(f"fast_memory_words: {m.M:g}")
    print(f"lower_bound_words: {lb:.6g}")
    for v in variants:
        est = (costmodel.pairwise_costs if v == "pairwise" else costmodel.triplet_costs)(args.n, m)
        ops = costmodel.normalized_op_count(args.n, v)
        print(f"[{v}]")
        print(f"  F_weighted_s: {est.flops:.6g}")
        print(f"  F_unit_ops: {est.unit_flops:.6g}")
        print(f"  W_words: {est.words:.6g}")
        print(f"  W_over_lower_bound: {est.words / lb:.2f}")
        print(f"  predicted_s: {est.seconds:.6g}")
        print(f"  predicted_pct_peak: {100 * est.pct_peak:.1f}%")
        print(f"  normalized_ops: {ops:.6g}")
        if args.seconds:
            print(f"  measured_pct_peak: {100 * costmodel.pct_peak(ops, args.seconds, m.peak_gflops):.1f}%")
    return EXIT_OK


def cmd_convert(args) -> int:
    src = _format_for(args.input, args.input_format)
    dst = args.output_format
    if dst == "auto":
        dst = "bin" if Path(args.output).suffix.lower() in (".bin", ".pald") else "csv"
    if src == "bin":
        # keep the stored width so csv -> bin -> csv and bin -> bin are exact
        D = ingest.read_distance_binary(args.input)
    else:
        D = read_distances(args.input, src, np.float64, args.workers)
    meta = {"kind": "distance", "n": D.n}
    labels = list(D.labels) if D.labels else None
    if dst == "csv":
        ingest.write_matrix_csv(args.output, D.values, labels=labels, meta=meta)
    elif dst == "bin":
        ingest.write_binary(args.output, D.values)
    else:
        raise ValidationError(f"unknown output format {dst!r}")
    print(f"wrote {D.n}x{D.n} distance matrix to {args.output} ({dst})", file=sys.stderr)
    return EXIT_OK


def cmd_tune(args) -> int:
    def report(variant, b, pass_name, secs):
        print(f"{variant} b={b} {pass_name}: {secs:.4f}s", file=sys.stderr)

    cfg = autotune_blocks(args.n, args.variant, args.trials, sizes=args.sizes,
                          dtype=np.dtype(args.dtype), report=report)
    if args.variant == "pairwise":
        print(f"b: {cfg.b}")
    else:
        print(f"b_focus: {cfg.b_focus}")
        print(f"b_cohesion: {cfg.b_cohesion}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pald", description="Partitioned local depth cohesion.")
    sub = ap.add_subparsers(dest="command", required=True)
    fmts = ["auto", "csv", "bin", "points", "edges"]

    c = sub.add_parser("compute", help="compute the cohesion matrix")
    c.add_argument("--in", dest="input", required=True)
    c.add_argument("--in-format", dest="input_format", choices=fmts, default="auto")
    c.add_argument("--alg", choices=ALGORITHMS, default=None,
                   help="default: blocked-triplet for n >= 1024, blocked-pairwise below "
                        "(and for inputs with ties)")
    c.add_argument("--policy", choices=["strict", "split"], default=None,
                   help="default: split if the input has distance ties, else strict")
    c.add_argument("--b", type=int)
    c.add_argument("--b-focus", type=int)
    c.add_argument("--b-cohesion", type=int)
    c.add_argument("--autotune", type=int, metavar="TRIALS", default=0,
                   help="sweep block sizes first, averaging TRIALS runs each")
    c.add_argument("--threads", type=int, default=None, help="default: $PALD_THREADS or 1")
    c.add_argument("--deterministic", action="store_true")
    c.add_argument("--raw", action="store_true", help="skip the 1/(n-1) normalization")
    c.add_argument("--validate", action="store_true", help="reject ties for triplet algorithms")
    c.add_argument("--dtype", choices=["float32", "float64"], default="float64")
    c.add_argument("--workers", type=int, default=1, help="BFS workers for edge-list input")
    c.add_argument("--out", default=None, help="cohesion output (default: CSV on stdout)")
    c.add_argument("--out-format", choices=["auto", "csv", "bin"], default="auto")
    c.add_argument("--focus-out", default=None)
    c.add_argument("--depths-out", default=None)
    c.set_defaults(func=cmd_compute)

    a = sub.add_parser("analyze", help="strong ties or nearest cohesion neighbors")
    a.add_argument("--in", dest="input", required=True)
    a.add_argument("--in-format", dest="input_format", choices=["auto", "csv", "bin"], default="auto")
    a.add_argument("--mode", choices=["strong-ties", "neighbors"], default="strong-ties")
    a.add_argument("--k", type=int, default=10)
    a.add_argument("--focus", default=None, help="point index (0-based) or label")
    a.add_argument("--threshold", type=float, default=None,
                   help="override the universal threshold (half the mean self-cohesion)")
    a.add_argument("--out", default=None)
    a.set_defaults(func=cmd_analyze)

    b = sub.add_parser("bench", help="time algorithms over sizes, blocks, threads")
    b.add_argument("--sizes", type=_int_list, required=True)
    b.add_argument("--algs", type=_str_list, default=["blocked-pairwise", "blocked-triplet"])
    b.add_argument("--b", type=_int_list, default=None)
    b.add_argument("--b-focus", type=_int_list, default=None)
    b.add_argument("--b-cohesion", type=_int_list, default=None)
    b.add_argument("--threads", type=_int_list, default=None)
    b.add_argument("--trials", type=int, default=bench.DEFAULT_TRIALS)
    b.add_argument("--baseline", default="naive-pairwise")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    b.add_argument("--out", default=None, help="CSV of per-trial rows")
    b.add_argument("--quiet", action="store_true")
    b.set_defaults(func=cmd_bench)

    p = sub.add_parser("predict", help="cost-model predictions")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--variant", choices=["pairwise", "triplet", "both"], default="both")
    p.add_argument("--machine", default=None, help="key = value machine config file")
    p.add_argument("--seconds", type=float, default=None,
                   help="measured runtime; reports its percentage of peak")
    p.set_defaults(func=cmd_predict)

    v = sub.add_parser("convert", help="convert between csv, bin, points and edge lists")
    v.add_argument("--in", dest="input", required=True)
    v.add_argument("--out", dest="output", required=True)
    v.add_argument("--from", dest="input_format", choices=fmts, default="auto")
    v.add_argument("--to", dest="output_format", choices=["auto", "csv", "bin"], default="auto")
    v.add_argument("--workers", type=int, default=1)
    v.set_defaults(func=cmd_convert)

    t = sub.add_parser("tune", help="block-size sweep")
    t.add_argument("--n", type=int, required=True)
    t.add_argument("--variant", choices=["pairwise", "triplet"], default="pairwise")
    t.add_argument("--trials", type=int, default=1)
    t.add_argument("--sizes", type=_int_list, default=list(SWEEP_SIZES),
                   help="candidate block sizes (default powers of two 32..1024)")
    t.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    t.set_defaults(func=cmd_tune)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PaldError as e:
        print(f"pald: error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"pald: error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"pald: error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
