"""Range-constrained beam search over the layered graph index.

A query walks a graph assembled on the fly: each hop asks select_edges for
the current node's in-range neighbors along its root-to-leaf path, so the
traversal never leaves the primary rank range. Secondary attribute ranges
(when present) gate the result heap only; out-of-range nodes may still be
routed through according to the chosen policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import backend
from .builder import SegmentTreeIndex
from .core import InvalidInputError
from .dataset import Query, RankRange, map_range

OOR_POLICIES = {"never": 0, "always": 1, "adaptive": 2}

_MASK64 = (1 << 64) - 1


@dataclass
class SearchParams:
    """Knobs for one query: beam width, k, out-of-range policy, determinism."""

    beam: int = 64
    k: int = 10
    oor_policy: str = "adaptive"
    seed: int = 0
    use_skipping: bool = True

    def policy_code(self) -> int:
        try:
            return OOR_POLICIES[self.oor_policy]
        except KeyError:
            raise InvalidInputError(
                f"unknown oor_policy {self.oor_policy!r}; expected one of "
                f"{sorted(OOR_POLICIES)}") from None


@dataclass
class SearchStats:
    """Per-query work counters."""

    dist_comps: int = 0
    edge_scans: int = 0
    layers_collected: int = 0
    hops: int = 0
    oor_visited: int = 0

    @classmethod
    def from_array(cls, arr) -> "SearchStats":
        return cls(dist_comps=int(arr[0]), edge_scans=int(arr[1]),
                   layers_collected=int(arr[2]), hops=int(arr[3]),
                   oor_visited=int(arr[4]))

    def as_dict(self) -> dict:
        return {"dist_comps": self.dist_comps, "edge_scans": self.edge_scans,
                "layers_collected": self.layers_collected, "hops": self.hops,
                "oor_visited": self.oor_visited}


@dataclass
class SearchResult:
    """Ascending-distance answers plus the work it took to find them."""

    ids: np.ndarray
    ranks: np.ndarray
    distances: np.ndarray
    stats: SearchStats

    def __len__(self) -> int:
        return self.ids.shape[0]


def _empty_result() -> SearchResult:
    return SearchResult(ids=np.empty(0, np.int64), ranks=np.empty(0, np.int64),
                        distances=np.empty(0, np.float64), stats=SearchStats())


def visit_probability(streak: int) -> float:
    """Adaptive-policy visit probability after `streak` consecutive
    out-of-range ancestors: exp(-streak)."""
    if streak < 0:
        raise InvalidInputError("streak must be nonnegative")
    return math.exp(-float(streak))


def query_seed(seed: int, query_index: int) -> int:
    """Stable 32-bit per-query seed: a splitmix-style mix of (seed, index)."""
    x = (int(seed) * 0x9E3779B97F4A7C15 + int(query_index) + 1) & _MASK64
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    x = (x ^ (x >> 27)) * 0x94D049BB133111EB & _MASK64
    x ^= x >> 31
    return int(x & 0xFFFFFFFF)


def _check_rank_range(index: SegmentTreeIndex, rank_range) -> tuple[int, int]:
    if rank_range is None:
        raise InvalidInputError("rank range is empty")
    L, R = rank_range.as_tuple() if isinstance(rank_range, RankRange) else rank_range
    L, R = int(L), int(R)
    if not (0 <= L <= R < index.n):
        raise InvalidInputError(
            f"rank range [{L}, {R}] out of bounds for n={index.n}")
    return L, R


def _check_query_vector(index: SegmentTreeIndex, q) -> np.ndarray:
    q = np.ascontiguousarray(q, np.float32)
    if q.ndim != 1 or q.shape[0] != index.d:
        raise InvalidInputError(
            f"query vector must have shape ({index.d},), got {q.shape}")
    return q


def beam_search(index: SegmentTreeIndex, query_vector, rank_range,
                params: SearchParams, query_index: int = 0,
                sec_lo=None, sec_hi=None) -> SearchResult:
    """Top-k search restricted to ranks [L, R] (plus secondary gates).

    `rank_range` is a RankRange or (L, R) pair over the attribute-sorted
    order. `sec_lo`/`sec_hi` are parallel arrays of closed raw bounds on
    attribute columns 1.., usually filled in by multi_attr_search. Results
    come back in ascending euclidean distance, ties broken by rank.
    """
    if params.k < 1:
        raise InvalidInputError(f"k must be >= 1, got {params.k}")
    if params.beam < params.k:
        raise InvalidInputError(
            f"beam width ({params.beam}) must be at least k ({params.k})")
    L, R = _check_rank_range(index, rank_range)
    q = _check_query_vector(index, query_vector)
    policy = params.policy_code()
    ds = index.dataset
    if sec_lo is None:
        sec_lo = np.empty(0, np.float64)
        sec_hi = np.empty(0, np.float64)
    sec_lo = np.ascontiguousarray(sec_lo, np.float64)
    sec_hi = np.ascontiguousarray(sec_hi, np.float64)
    if sec_lo.shape != sec_hi.shape:
        raise InvalidInputError("secondary bound arrays differ in shape")
    if sec_lo.shape[0] > ds.num_attrs - 1:
        raise InvalidInputError(
            f"{sec_lo.shape[0]} secondary ranges but dataset has "
            f"{ds.num_attrs} attribute column(s)")
    K = backend.kernels
    ctx = index.context()
    rd, rr = ctx.beam(params.beam)
    stats = np.zeros(8, np.int64)
    out_d = np.empty(params.k, np.float64)
    out_r = np.empty(params.k, np.int32)
    cnt = K.search_dedicated(
        ds.vectors, index.nbrs, index.cnts, ds.group_of, ds.group_starts,
        q, L, R, params.beam, params.k, ds.attrs, sec_lo, sec_hi, policy,
        query_seed(params.seed, query_index), params.use_skipping,
        ctx.visited, ctx.bump(), ctx.cd, ctx.cr, ctx.cs, rd, rr, ctx.sel,
        stats, out_d, out_r)
    ranks = out_r[:cnt].astype(np.int64)
    return SearchResult(ids=ds.original_ids[ranks], ranks=ranks,
                        distances=np.sqrt(out_d[:cnt]),
                        stats=SearchStats.from_array(stats))


def multi_attr_search(index: SegmentTreeIndex, query: Query,
                      params: SearchParams) -> SearchResult:
    """Run a raw-valued Query: primary range via rank mapping, the rest as
    secondary gates. Returns an empty result when no object satisfies the
    primary range."""
    ds = index.dataset
    if not query.ranges:
        raise InvalidInputError("query carries no attribute ranges")
    if len(query.ranges) > ds.num_attrs:
        raise InvalidInputError(
            f"query has {len(query.ranges)} ranges but dataset has "
            f"{ds.num_attrs} attribute column(s)")
    rr = map_range(ds, query.ranges[0][0], query.ranges[0][1])
    if rr is None:
        return _empty_result()
    sec = np.asarray(query.ranges[1:], np.float64).reshape(-1, 2)
    return beam_search(index, query.vector, rr, params,
                       query_index=query.index,
                       sec_lo=sec[:, 0].copy(), sec_hi=sec[:, 1].copy())


def select_edges(index: SegmentTreeIndex, u: int, rank_range,
                 use_skipping: bool = True) -> tuple[np.ndarray, SearchStats]:
    """In-range neighbor set of rank u for [L, R], assembled along u's
    root-to-leaf path. Returns (ranks in collection order, stats)."""
    L, R = _check_rank_range(index, rank_range)
    u = int(u)
    if not (0 <= u < index.n):
        raise InvalidInputError(f"rank {u} out of bounds for n={index.n}")
    out = np.empty(index.m, np.int32)
    stats = np.zeros(8, np.int64)
    ds = index.dataset
    cnt = backend.kernels.select_edges(
        index.nbrs, index.cnts, ds.group_of, ds.group_starts, u, L, R,
        index.m, bool(use_skipping), out, stats)
    return out[:cnt].astype(np.int64), SearchStats.from_array(stats)
