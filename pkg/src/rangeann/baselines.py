"""Reference strategies the layered-graph search is compared against.

All four share the same index (or, for the brute-force scan, just the sorted
dataset) so measurements isolate the strategy rather than the build:

- prefilter: exact linear scan over the qualifying ranks
- postfilter: beam search on the root graph ignoring the range, keep the
  in-range nodes seen along the way
- infilter: beam search on the root graph that refuses to step out of range
- basic: canonical segment-cover decomposition, one beam search per segment
"""

from __future__ import annotations

import numpy as np

from . import backend
from .builder import SegmentTreeIndex
from .core import InvalidInputError
from .dataset import Query, SortedDataset, map_range
from .search import (SearchParams, SearchResult, SearchStats, _empty_result,
                     _check_query_vector, _check_rank_range,
                     multi_attr_search)

STRATEGIES = ("irange", "pre", "post", "in", "basic")


def _result_rows(ds: SortedDataset, out_d, out_r, cnt, stats) -> SearchResult:
    ranks = out_r[:cnt].astype(np.int64)
    return SearchResult(ids=ds.original_ids[ranks], ranks=ranks,
                        distances=np.sqrt(out_d[:cnt]),
                        stats=SearchStats.from_array(stats))


def _check_params(params: SearchParams) -> None:
    if params.k < 1:
        raise InvalidInputError(f"k must be >= 1, got {params.k}")
    if params.beam < params.k:
        raise InvalidInputError(
            f"beam width ({params.beam}) must be at least k ({params.k})")


def prefilter_search(ds: SortedDataset, q, rank_range, k: int,
                     sec_lo=None, sec_hi=None) -> SearchResult:
    """Exact top-k by scanning every rank in [L, R] (the groundtruth oracle).

    Computes one distance per rank passing the secondary gates, so for a
    single-attribute query dist_comps is exactly R - L + 1.
    """
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    L, R = _check_rank_range_ds(ds, rank_range)
    qv = np.ascontiguousarray(q, np.float32)
    if qv.ndim != 1 or qv.shape[0] != ds.d:
        raise InvalidInputError(
            f"query vector must have shape ({ds.d},), got {qv.shape}")
    if sec_lo is None:
        sec_lo = np.empty(0, np.float64)
        sec_hi = np.empty(0, np.float64)
    sec_lo = np.ascontiguousarray(sec_lo, np.float64)
    sec_hi = np.ascontiguousarray(sec_hi, np.float64)
    hd = np.empty(k + 1, np.float64)
    hr = np.empty(k + 1, np.int32)
    out_d = np.empty(k, np.float64)
    out_r = np.empty(k, np.int32)
    cnt, ndc = backend.kernels.brute_topk(
        ds.vectors, ds.attrs, qv, L, R, k, sec_lo, sec_hi, hd, hr,
        out_d, out_r)
    stats = np.zeros(8, np.int64)
    stats[0] = ndc
    return _result_rows(ds, out_d, out_r, cnt, stats)


def _check_rank_range_ds(ds: SortedDataset, rank_range) -> tuple[int, int]:
    if rank_range is None:
        raise InvalidInputError("rank range is empty")
    L, R = rank_range if isinstance(rank_range, tuple) else rank_range.as_tuple()
    L, R = int(L), int(R)
    if not (0 <= L <= R < ds.n):
        raise InvalidInputError(
            f"rank range [{L}, {R}] out of bounds for n={ds.n}")
    return L, R


def postfilter_search(index: SegmentTreeIndex, ds: SortedDataset, q,
                      rank_range, params: SearchParams) -> SearchResult:
    """Unconstrained beam search on the root graph; answer = best in-range
    nodes it happened to visit. May return fewer than k (or none) when the
    range is small."""
    _check_params(params)
    L, R = _check_rank_range(index, rank_range)
    qv = _check_query_vector(index, q)
    K = backend.kernels
    ctx = index.context()
    rd, rr = ctx.beam(params.beam)
    kd = np.empty(params.k + 1, np.float64)
    kr = np.empty(params.k + 1, np.int32)
    stats = np.zeros(8, np.int64)
    out_d = np.empty(params.k, np.float64)
    out_r = np.empty(params.k, np.int32)
    entry = (index.n - 1) >> 1
    cnt = K.search_layer(
        ds.vectors, index.nbrs[0], index.cnts[0], entry, qv, params.beam, 1,
        L, R, params.k, ctx.visited, ctx.bump(), ctx.cd, ctx.cr, ctx.cs,
        rd, rr, kd, kr, stats, out_d, out_r)
    return _result_rows(ds, out_d, out_r, cnt, stats)


def infilter_search(index: SegmentTreeIndex, ds: SortedDataset, q,
                    rank_range, params: SearchParams) -> SearchResult:
    """Beam search on the root graph that only follows in-range neighbors,
    entered at rank (L + R) // 2. In-range nodes whose root-graph neighbors
    all sit outside the range are unreachable."""
    _check_params(params)
    L, R = _check_rank_range(index, rank_range)
    qv = _check_query_vector(index, q)
    K = backend.kernels
    ctx = index.context()
    rd, rr = ctx.beam(params.beam)
    kd = np.empty(1, np.float64)
    kr = np.empty(1, np.int32)
    stats = np.zeros(8, np.int64)
    out_d = np.empty(params.beam, np.float64)
    out_r = np.empty(params.beam, np.int32)
    entry = (L + R) >> 1
    cnt = K.search_layer(
        ds.vectors, index.nbrs[0], index.cnts[0], entry, qv, params.beam, 2,
        L, R, 0, ctx.visited, ctx.bump(), ctx.cd, ctx.cr, ctx.cs,
        rd, rr, kd, kr, stats, out_d, out_r)
    cnt = min(cnt, params.k)
    return _result_rows(ds, out_d, out_r, cnt, stats)


def basic_search(index: SegmentTreeIndex, ds: SortedDataset, q, rank_range,
                 params: SearchParams) -> SearchResult:
    """Decompose [L, R] into its canonical segment cover, beam-search each
    segment's graph from that segment's midpoint, and merge the per-segment
    answers into one top-k."""
    _check_params(params)
    L, R = _check_rank_range(index, rank_range)
    qv = _check_query_vector(index, q)
    K = backend.kernels
    ctx = index.context()
    rd, rr = ctx.beam(params.beam)
    kd = np.empty(1, np.float64)
    kr = np.empty(1, np.int32)
    stats = np.zeros(8, np.int64)
    od = np.empty(params.beam, np.float64)
    orr = np.empty(params.beam, np.int32)
    cover = index.tree.canonical_cover(ds.group_of, L, R)
    all_d: list[np.ndarray] = []
    all_r: list[np.ndarray] = []
    for seg in cover:
        entry = (seg.lo + seg.hi) >> 1
        cnt = K.search_layer(
            ds.vectors, index.nbrs[seg.layer], index.cnts[seg.layer], entry,
            qv, params.beam, 0, 0, index.n - 1, 0, ctx.visited, ctx.bump(),
            ctx.cd, ctx.cr, ctx.cs, rd, rr, kd, kr, stats, od, orr)
        all_d.append(od[:cnt].copy())
        all_r.append(orr[:cnt].copy())
    md = np.concatenate(all_d)
    mr = np.concatenate(all_r)
    order = np.lexsort((mr, md))[:params.k]
    return _result_rows(ds, md[order], mr[order], order.shape[0], stats)


def run_strategy(strategy: str, query: Query, params: SearchParams,
                 index: SegmentTreeIndex | None = None,
                 dataset: SortedDataset | None = None) -> SearchResult:
    """Dispatch a raw-valued Query to one strategy.

    `pre` needs only a dataset; the graph strategies need the index. The
    root-graph and cover baselines handle single-attribute queries only;
    `irange` and `pre` also take secondary ranges.
    """
    if strategy not in STRATEGIES:
        raise InvalidInputError(
            f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    ds = dataset if dataset is not None else (
        index.dataset if index is not None else None)
    if ds is None:
        raise InvalidInputError("run_strategy needs an index or a dataset")
    if not query.ranges:
        raise InvalidInputError("query carries no attribute ranges")
    if len(query.ranges) > ds.num_attrs:
        raise InvalidInputError(
            f"query has {len(query.ranges)} ranges but dataset has "
            f"{ds.num_attrs} attribute column(s)")
    if strategy in ("post", "in", "basic") and len(query.ranges) != 1:
        raise InvalidInputError(
            f"strategy {strategy!r} supports single-attribute queries only")
    if strategy != "pre" and index is None:
        raise InvalidInputError(f"strategy {strategy!r} needs an index")
    if strategy == "irange":
        return multi_attr_search(index, query, params)
    rr = map_range(ds, query.ranges[0][0], query.ranges[0][1])
    if rr is None:
        return _empty_result()
    if strategy == "pre":
        sec = np.asarray(query.ranges[1:], np.float64).reshape(-1, 2)
        return prefilter_search(ds, query.vector, rr, params.k,
                                sec_lo=sec[:, 0].copy(),
                                sec_hi=sec[:, 1].copy())
    if strategy == "post":
        return postfilter_search(index, ds, query.vector, rr, params)
    if strategy == "in":
        return infilter_search(index, ds, query.vector, rr, params)
    return basic_search(index, ds, query.vector, rr, params)
