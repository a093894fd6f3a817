"""Command-line entry point: ``trimsketch {query,gen,ingest,experiment}``."""

from __future__ import annotations

import argparse
import json
import os
import sys

from trimsketch import oracle
from trimsketch.estimators import g_index, h_index_moment, sum_above_threshold, top_k_moment, trimmed_k_moment
from trimsketch.experiment import ExperimentSpec, rows_to_csv, run_experiment, summarize
from trimsketch.pipeline import SketchConfig, sketch_sizes
from trimsketch.streams import StreamFile, gen_synthetic, ingest_keycounts, write_mapping

SEED_ENV = "TRIMSKETCH_SEED"
KIND_NAMES = {
    "top-k": "top_k",
    "trimmed": "trimmed_k",
    "sum-above": "sum_above_threshold",
    "g-index": "g_index",
    "h-index": "h_index_moment",
}


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trimsketch", description="Trimmed frequency statistics from linear sketches.")
    sub = parser.add_subparsers(dest="command", required=True)

    q = sub.add_parser("query", help="sketch a stream file and answer one query")
    q.add_argument("input", help="stream file ('n=<N> m=<M>' header, 'index<TAB>delta' lines)")
    q.add_argument("--kind", required=True, choices=sorted(KIND_NAMES))
    q.add_argument("--k", type=int, help="rank cutoff for top-k and trimmed queries")
    q.add_argument("--p", type=float, default=None, help="moment exponent (default 1; 0 for h-index)")
    q.add_argument("--eps", type=float, default=0.1, help="level-set width (h-index uses eps/10)")
    q.add_argument("--threshold", type=float, help="magnitude threshold for sum-above")
    q.add_argument("--seed", type=int, default=None, help=f"master seed (default ${SEED_ENV} or 0)")
    q.add_argument("--budget", type=int, help="total buckets, split evenly over levels x rows")
    q.add_argument("--buckets", type=int, help="buckets per table (default 1024)")
    q.add_argument("--rows", type=int, default=5)
    q.add_argument("--levels", type=int, help="subsampling levels (default ceil(log2 n) + 1)")
    q.add_argument("--K", type=float, default=4.0, help="directly counted top-set constant")
    q.add_argument("--C-z", dest="C_z", type=float, default=0.01, help="survivor quorum constant")
    q.add_argument("--decoder", choices=["peel", "threshold"], default="peel")
    q.add_argument("--with-oracle", action="store_true", help="also report the exact value")

    g = sub.add_parser("gen", help="write a synthetic stream file")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--k", type=int, required=True, help="number of planted heavy coordinates")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("-o", "--output", help="stream file to write (default: stdout)")

    i = sub.add_parser("ingest", help="convert a key-count file into a stream file")
    i.add_argument("input")
    i.add_argument("-o", "--output", help="stream file to write (default: stdout)")
    i.add_argument("--mapping", help="write 'id<TAB>key' lines here")

    e = sub.add_parser("experiment", help="bucket-budget comparison against plain Count-Sketch")
    e.add_argument("--dataset", default="synthetic", help="'synthetic' or a key-count file")
    e.add_argument("--n", type=int, default=10**6)
    e.add_argument("--k", type=int, default=1000)
    e.add_argument("--heavy", type=int, help="planted heavy coordinates (default k)")
    e.add_argument("--p", type=float, default=1.0)
    e.add_argument("--eps", type=float, default=0.05)
    e.add_argument("--budgets", type=_int_list, default=[10_000, 20_000, 30_000, 50_000])
    e.add_argument("--seeds", type=_int_list, default=None)
    e.add_argument("--levels", type=int, default=2)
    e.add_argument("--rows", type=int, default=5)
    e.add_argument("--max-reps", type=int, default=10)
    e.add_argument("--timing", action="store_true", help="record wall_ms (output is then not reproducible)")
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("-o", "--output", help="CSV file to write (default: stdout)")
    return parser


def _check_query_flags(parser, args) -> None:
    kind = KIND_NAMES[args.kind]
    if kind in ("top_k", "trimmed_k"):
        if args.k is None:
            parser.error(f"--kind {args.kind} needs --k")
    elif args.k is not None:
        parser.error(f"--k does not apply to --kind {args.kind}")
    if kind == "sum_above_threshold":
        if args.threshold is None:
            parser.error("--kind sum-above needs --threshold")
    elif args.threshold is not None:
        parser.error(f"--threshold does not apply to --kind {args.kind}")
    if args.budget is not None and args.buckets is not None:
        parser.error("--budget and --buckets are mutually exclusive")
    if not 0 < args.eps <= 1:
        parser.error("--eps must lie in (0, 1]")


def _oracle_value(kind: str, x, args, p):
    if kind == "top_k":
        return oracle.exact_top_k(x, args.k, p)
    if kind == "trimmed_k":
        return oracle.exact_trimmed(x, args.k, p)
    if kind == "sum_above_threshold":
        return oracle.exact_sum_above(x, args.threshold, p)
    if kind == "g_index":
        return oracle.exact_g_index(x, p)
    h = oracle.exact_h_index(x)
    return oracle.exact_top_k(x, h, p) if p != 0 else h


def cmd_query(parser, args) -> int:
    _check_query_flags(parser, args)
    kind = KIND_NAMES[args.kind]
    p = args.p if args.p is not None else (0.0 if kind == "h_index_moment" else 1.0)
    if p < 0:
        parser.error("--p must be nonnegative")
    seed = args.seed if args.seed is not None else _default_seed()
    try:
        stream = StreamFile.read(args.input)
    except OSError as exc:
        parser.error(f"cannot read {args.input}: {exc.strerror}")
    n = max(stream.n, 1)
    if kind == "trimmed_k" and 2 * args.k > n:
        parser.error(f"--k {args.k} exceeds n/2 = {n / 2}")
    levels = args.levels
    if args.budget is not None:
        if levels is None:
            levels = max(1, (n - 1).bit_length()) + 1
        cfg = SketchConfig.from_budget(args.budget, levels, args.rows, K=args.K, C_z=args.C_z, decoder=args.decoder, eps=args.eps)
    else:
        cfg = SketchConfig(
            rows=args.rows, buckets=args.buckets or 1024, levels=levels,
            eps=args.eps, K=args.K, C_z=args.C_z, decoder=args.decoder,
        )
    eps_sets = args.eps / 10 if kind == "h_index_moment" else args.eps
    sizes = sketch_sizes(stream.indices, stream.deltas, n, stream.m, cfg, seed, eps=eps_sets)
    if kind == "top_k":
        result = top_k_moment(sizes, args.k, p)
    elif kind == "trimmed_k":
        result = trimmed_k_moment(sizes, n, args.k, p)
    elif kind == "sum_above_threshold":
        result = sum_above_threshold(sizes, args.threshold, p)
    elif kind == "g_index":
        result = g_index(sizes, p, n)
    else:
        result = h_index_moment(sizes, p)
    result.query.epsilon = args.eps
    out = result.to_dict()
    if args.with_oracle:
        out["oracle"] = _oracle_value(kind, stream.to_vector(), args, p)
    print(json.dumps(out))
    return 0


def cmd_gen(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    stream = gen_synthetic(args.n, args.k, seed)
    if args.output:
        stream.write(args.output)
    else:
        sys.stdout.write(stream.to_text())
    return 0


def cmd_ingest(args) -> int:
    stream, ids = ingest_keycounts(args.input)
    if args.output:
        stream.write(args.output)
    else:
        sys.stdout.write(stream.to_text())
    if args.mapping:
        write_mapping(args.mapping, ids)
    return 0


def cmd_experiment(args) -> int:
    seeds = args.seeds if args.seeds is not None else [_default_seed()]
    spec = ExperimentSpec(
        dataset=args.dataset, n=args.n, k=args.k, heavy=args.heavy, p=args.p, eps=args.eps,
        budgets=args.budgets, max_reps=args.max_reps, levels=args.levels, rows=args.rows,
        seeds=seeds, output=args.output, timing=args.timing, workers=args.workers,
    )
    rows = run_experiment(spec)
    if not args.output:
        sys.stdout.write(rows_to_csv(rows))
    for (method, budget), err in sorted(summarize(rows).items(), key=lambda kv: (kv[0][1], kv[0][0])):
        print(f"{budget:>8} {method:<12} mean relative error {err:.4f}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "query":
            return cmd_query(parser, args)
        if args.command == "gen":
            return cmd_gen(args)
        if args.command == "ingest":
            return cmd_ingest(args)
        return cmd_experiment(args)
    except (ValueError, IndexError, OverflowError) as exc:
        print(f"trimsketch: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
