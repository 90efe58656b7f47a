"""Command-line operator surface.

Subcommands cover the whole pipeline: build an index, generate a range
workload, compute brute-force groundtruth, run per-query searches, sweep
qps-recall curves to CSV, and run the per-range rebuild comparison. Any
option can also come from a JSON file via --config; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .baselines import STRATEGIES, run_strategy
from .builder import build_index
from .core import CorruptIndexError, InvalidInputError
from .dataset import (gen_workload, load_dataset, load_workload,
                      read_attributes, read_fvecs, read_ivecs, read_raw_f32,
                      save_workload, write_ivecs)
from .evaluation import groundtruth, oracle_rebuild_compare, sweep, \
    write_metrics_csv
from .persist import load_index, save_index
from .search import OOR_POLICIES, SearchParams

FRACTION_CHOICES = [str(i) for i in range(10)] + ["mixed"]


def _load_vectors(path: str, raw_dim: int | None = None) -> np.ndarray:
    if path.endswith(".npy"):
        return np.ascontiguousarray(np.load(path), np.float32)
    if path.endswith(".fvecs"):
        return read_fvecs(path)
    if raw_dim is not None:
        return read_raw_f32(path, raw_dim)
    raise InvalidInputError(
        f"{path}: cannot infer vector format; use .fvecs/.npy or --raw-dim")


def _load_attrs(path: str, header: bool = False) -> np.ndarray:
    if path.endswith(".npy"):
        arr = np.asarray(np.load(path), np.float64)
        return arr[:, None] if arr.ndim == 1 else arr
    return read_attributes(path, header=header)


def _load_ds(args):
    return load_dataset(_load_vectors(args.vectors, args.raw_dim),
                        _load_attrs(args.attrs, args.attrs_header))


def _parse_beams(spec) -> list[int]:
    if isinstance(spec, (list, tuple)):
        return [int(b) for b in spec]
    return [int(tok) for tok in str(spec).split(",") if tok.strip()]


def _metrics_summary(m) -> dict | None:
    if m is None:
        return None
    return {"strategy": m.strategy, "beam": m.beam, "recall": m.recall,
            "qps": m.qps}


def cmd_build(args) -> int:
    ds = _load_ds(args)
    index = build_index(ds, args.m, args.ef, seed=args.seed,
                        reverse_edges=not args.no_reverse_edges,
                        threads=args.threads)
    save_index(index, args.out)
    print(json.dumps({
        "n": index.n, "d": index.d, "m": index.m, "ef": index.ef,
        "seed": index.seed, "num_layers": index.num_layers,
        "reverse_edges": index.reverse_edges, "out": args.out,
        "build": index.counters.to_dict()}))
    return 0


def cmd_gen_workload(args) -> int:
    ds = _load_ds(args)
    qv = _load_vectors(args.query_vectors, args.raw_dim)
    wl = gen_workload(ds, args.n_queries, args.fraction, qv, args.seed,
                      k=args.k,
                      secondary_fractions=[int(x) for x in
                                           args.secondary_fraction])
    save_workload(args.out, wl)
    print(json.dumps({"num_queries": len(wl), "fraction": args.fraction,
                      "k": args.k, "seed": args.seed, "out": args.out}))
    return 0


def cmd_gt(args) -> int:
    ds = _load_ds(args)
    qv = _load_vectors(args.query_vectors, args.raw_dim)
    wl = load_workload(args.workload, qv)
    rows = groundtruth(ds, wl, args.k, threads=args.threads)
    write_ivecs(args.out, [r.astype(np.int32) for r in rows])
    print(json.dumps({"num_queries": len(rows), "k": args.k,
                      "out": args.out}))
    return 0


def cmd_search(args) -> int:
    if args.index is not None:
        index = load_index(args.index)
        ds = index.dataset
    elif args.strategy == "pre":
        if args.vectors is None or args.attrs is None:
            raise InvalidInputError(
                "strategy 'pre' without --index needs --vectors and --attrs")
        index = None
        ds = _load_ds(args)
    else:
        raise InvalidInputError(f"strategy {args.strategy!r} needs --index")
    qv = _load_vectors(args.query_vectors, args.raw_dim)
    wl = load_workload(args.workload, qv)
    params = SearchParams(beam=args.beam, k=args.k,
                          oor_policy=args.oor_policy, seed=args.seed,
                          use_skipping=not args.no_skipping)
    records = []
    totals = np.zeros(5, np.float64)
    for q in wl.queries:
        r = run_strategy(args.strategy, q, params, index=index, dataset=ds)
        st = r.stats.as_dict()
        totals += [st["dist_comps"], st["edge_scans"],
                   st["layers_collected"], st["hops"], st["oor_visited"]]
        records.append({"query_index": q.index,
                        "ids": [int(x) for x in r.ids],
                        "distances": [float(x) for x in r.distances],
                        "stats": st})
    nq = max(len(records), 1)
    summary = {"strategy": args.strategy, "beam": args.beam, "k": args.k,
               "num_queries": len(records),
               "mean_dist_comps": totals[0] / nq,
               "mean_edge_scans": totals[1] / nq,
               "mean_layers_collected": totals[2] / nq,
               "mean_hops": totals[3] / nq,
               "mean_oor_visited": totals[4] / nq}
    if args.out:
        with open(args.out, "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
        print(json.dumps(summary))
    else:
        for rec in records:
            print(json.dumps(rec))
        print(json.dumps(summary), file=sys.stderr)
    return 0


def cmd_bench(args) -> int:
    index = load_index(args.index)
    qv = _load_vectors(args.query_vectors, args.raw_dim)
    wl = load_workload(args.workload, qv)
    gt = read_ivecs(args.gt)
    beams = _parse_beams(args.beams)
    rows = sweep(index, index.dataset, wl, gt, beams, strategy=args.strategy,
                 k=args.k, oor_policy=args.oor_policy, seed=args.seed,
                 use_skipping=not args.no_skipping)
    write_metrics_csv(args.out, rows)
    print(json.dumps({"strategy": args.strategy, "rows": len(rows),
                      "best_recall": max(r.recall for r in rows),
                      "out": args.out}))
    return 0


def cmd_oracle_compare(args) -> int:
    ds = _load_ds(args)
    qv = _load_vectors(args.query_vectors, args.raw_dim)
    wl = load_workload(args.workload, qv)
    gt = read_ivecs(args.gt)
    index = build_index(ds, args.m, args.ef, seed=args.seed)
    res = oracle_rebuild_compare(index, wl, gt, _parse_beams(args.beams),
                                 k=args.k, seed=args.seed)
    write_metrics_csv(args.out, res["irange_rows"] + res["oracle_rows"])
    print(json.dumps({
        "num_ranges": res["num_ranges"],
        "rebuild_time_s": res["build_time_s"],
        "irange_at_0.9": _metrics_summary(res["irange_at_target"]),
        "oracle_at_0.9": _metrics_summary(res["oracle_at_target"]),
        "out": args.out}))
    return 0


def _add_data_args(p, required=True):
    p.add_argument("--vectors", required=required,
                   help="data vectors (.fvecs, .npy, or raw float32 "
                        "with --raw-dim)")
    p.add_argument("--attrs", required=required,
                   help="attribute table (.csv/.tsv/.npy), one row per vector")
    p.add_argument("--raw-dim", type=int, default=None,
                   help="dimension of raw float32 vector files")
    p.add_argument("--attrs-header", action="store_true",
                   help="attribute table starts with a header row")


def _add_query_args(p):
    p.add_argument("--query-vectors", required=True,
                   help="query vectors file (.fvecs or .npy)")
    p.add_argument("--workload", required=True,
                   help="workload JSONL produced by gen-workload")


def _add_search_knobs(p):
    p.add_argument("--k", type=int, default=10, help="answers per query")
    p.add_argument("--oor-policy", choices=sorted(OOR_POLICIES),
                   default="adaptive",
                   help="visiting policy for nodes failing secondary ranges")
    p.add_argument("--seed", type=int, default=0, help="query-time RNG seed")
    p.add_argument("--no-skipping", action="store_true",
                   help="collect edges at every layer instead of skipping "
                        "covered ones")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", default=None,
                        help="JSON file of option defaults for this "
                             "subcommand")
    parser = argparse.ArgumentParser(
        prog="rangeann",
        description="Range-filtered nearest neighbor search over a segment "
                    "tree of pruned proximity graphs.")
    subs = parser.add_subparsers(dest="command", required=True)
    table = {}

    p = subs.add_parser("build", parents=[shared],
                        help="build and save an index")
    _add_data_args(p)
    p.add_argument("--m", type=int, required=True, help="max out-degree")
    p.add_argument("--ef", type=int, required=True,
                   help="candidate beam width during build")
    p.add_argument("--seed", type=int, default=0, help="build seed (recorded)")
    p.add_argument("--out", required=True, help="output index file")
    p.add_argument("--threads", type=int, default=None,
                   help="thread budget for the build kernels")
    p.add_argument("--no-reverse-edges", action="store_true",
                   help="skip the reverse-edge pass")
    p.set_defaults(func=cmd_build)
    table["build"] = p

    p = subs.add_parser("gen-workload", parents=[shared],
                        help="generate a range-query workload")
    _add_data_args(p)
    p.add_argument("--n-queries", type=int, required=True)
    p.add_argument("--fraction", choices=FRACTION_CHOICES, required=True,
                   help="range fraction exponent (length = n / 2^i) or "
                        "'mixed' for an even split over 0..9")
    p.add_argument("--query-vectors", required=True,
                   help="query vectors file (.fvecs or .npy)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--secondary-fraction", action="append", default=[],
                   metavar="EXP",
                   help="add a secondary-attribute range with this fraction "
                        "exponent (repeatable)")
    p.add_argument("--out", required=True, help="output workload JSONL")
    p.set_defaults(func=cmd_gen_workload)
    table["gen-workload"] = p

    p = subs.add_parser("gt", parents=[shared],
                        help="exact groundtruth for a workload")
    _add_data_args(p)
    _add_query_args(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True, help="output .ivecs file")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_gt)
    table["gt"] = p

    p = subs.add_parser("search", parents=[shared],
                        help="run one strategy over a workload")
    p.add_argument("--index", default=None, help="index file from build")
    _add_data_args(p, required=False)
    _add_query_args(p)
    p.add_argument("--strategy", choices=STRATEGIES, required=True)
    p.add_argument("--beam", type=int, required=True)
    _add_search_knobs(p)
    p.add_argument("--out", default=None,
                   help="write per-query JSONL here instead of stdout")
    p.set_defaults(func=cmd_search)
    table["search"] = p

    p = subs.add_parser("bench", parents=[shared],
                        help="sweep beams and emit a qps-recall CSV")
    p.add_argument("--index", required=True)
    _add_query_args(p)
    p.add_argument("--gt", required=True, help="groundtruth .ivecs file")
    p.add_argument("--strategy", choices=STRATEGIES, default="irange")
    p.add_argument("--beams", required=True,
                   help="comma-separated ascending beam widths")
    _add_search_knobs(p)
    p.add_argument("--raw-dim", type=int, default=None)
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_bench)
    table["bench"] = p

    p = subs.add_parser("oracle-compare", parents=[shared],
                        help="compare against per-range rebuilt graphs")
    _add_data_args(p)
    _add_query_args(p)
    p.add_argument("--gt", required=True, help="groundtruth .ivecs file")
    p.add_argument("--m", type=int, default=16)
    p.add_argument("--ef", type=int, default=100)
    p.add_argument("--beams", default="16,32,64,128,256,512",
                   help="comma-separated ascending beam widths")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_oracle_compare)
    table["oracle-compare"] = p

    return parser, table


def _apply_config(parser, table, argv) -> None:
    if "--config" not in argv:
        return
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise InvalidInputError("--config needs a file path")
    with open(argv[i + 1]) as fh:
        conf = json.load(fh)
    if not isinstance(conf, dict):
        raise InvalidInputError("config file must hold a JSON object")
    cmd = next((tok for tok in argv if not tok.startswith("-")), None)
    target = table.get(cmd)
    if target is None:
        return
    dests = {a.dest: a for a in target._actions}
    defaults = {}
    for key, val in conf.items():
        dest = key.replace("-", "_")
        if dest not in dests:
            raise InvalidInputError(
                f"config key {key!r} is not an option of {cmd!r}")
        defaults[dest] = val
        dests[dest].required = False
    target.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        parser, table = build_parser()
        _apply_config(parser, table, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except (InvalidInputError, CorruptIndexError, OSError, ValueError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
