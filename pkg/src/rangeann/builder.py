"""Segment tree construction and per-segment graph building.

The tree recurses over duplicate-value groups: the root covers every group,
children split at the middle group, and leaves are single groups. Each
segment at each layer owns a pruned proximity graph over its members, built
bottom-up: a node's candidates are its neighbors in the child segment that
contains it plus the results of a beam search over the sibling child's graph,
greedily pruned to at most m survivors, with reverse edges inserted after the
forward pass.

Adjacency is stored per layer as one (n, m) int32 block; a rank has a row at
every layer from the root down to its group's leaf.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .core import InvalidConfigWarning, InvalidInputError
from .dataset import SortedDataset


@dataclass(frozen=True)
class Segment:
    """A tree node: inclusive group span [gl, gr] and rank span [lo, hi]."""

    layer: int
    gl: int
    gr: int
    lo: int
    hi: int

    @property
    def is_leaf(self) -> bool:
        return self.gl == self.gr

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1


class SegmentTree:
    """Static mid-split tree over duplicate-value groups.

    Layer 0 is the root. A segment [gl, gr] splits into [gl, gmid] and
    [gmid + 1, gr] with gmid = (gl + gr) // 2, so leaf depths differ by at
    most one. When every attribute value is distinct this is exactly the
    mid-split recursion over ranks.
    """

    def __init__(self, group_starts: np.ndarray):
        self.group_starts = np.ascontiguousarray(group_starts, np.int64)
        self.num_groups = self.group_starts.shape[0] - 1
        if self.num_groups < 1:
            raise InvalidInputError("tree needs at least one group")
        layers = [np.array([[0, self.num_groups - 1]], np.int64)]
        leaf_layer = np.zeros(self.num_groups, np.int32)
        while True:
            cur = layers[-1]
            leaf_mask = cur[:, 0] == cur[:, 1]
            if leaf_mask.any():
                leaf_layer[cur[leaf_mask, 0]] = len(layers) - 1
            internal = cur[~leaf_mask]
            if internal.shape[0] == 0:
                break
            gmid = (internal[:, 0] + internal[:, 1]) >> 1
            nxt = np.empty((2 * internal.shape[0], 2), np.int64)
            nxt[0::2, 0] = internal[:, 0]
            nxt[0::2, 1] = gmid
            nxt[1::2, 0] = gmid + 1
            nxt[1::2, 1] = internal[:, 1]
            layers.append(nxt)
        self._layers = layers
        self.leaf_layer = leaf_layer
        self.num_layers = len(layers)

    def rank_span(self, gl: int, gr: int) -> tuple[int, int]:
        return (int(self.group_starts[gl]),
                int(self.group_starts[gr + 1] - 1))

    def segment(self, layer: int, gl: int, gr: int) -> Segment:
        lo, hi = self.rank_span(gl, gr)
        return Segment(layer, int(gl), int(gr), lo, hi)

    def layer_segments(self, layer: int) -> list[Segment]:
        """All segments at a layer, left to right."""
        return [self.segment(layer, gl, gr) for gl, gr in self._layers[layer]]

    def all_segments(self):
        for layer in range(self.num_layers):
            yield from self.layer_segments(layer)

    def children(self, seg: Segment) -> tuple[Segment, Segment]:
        if seg.is_leaf:
            raise InvalidInputError("leaf segments have no children")
        gmid = (seg.gl + seg.gr) >> 1
        return (self.segment(seg.layer + 1, seg.gl, gmid),
                self.segment(seg.layer + 1, gmid + 1, seg.gr))

    def row_present(self, group_of: np.ndarray, layer: int) -> np.ndarray:
        """Boolean mask over ranks that own an adjacency row at this layer."""
        return self.leaf_layer[group_of] >= layer

    def canonical_cover(self, group_of: np.ndarray, L: int, R: int) -> list[Segment]:
        """Minimal disjoint segments whose union is the (group-aligned) [L, R]."""
        gL = int(group_of[L])
        gR = int(group_of[R])
        out: list[Segment] = []
        stack = [(0, 0, self.num_groups - 1)]
        while stack:
            layer, gl, gr = stack.pop()
            if gr < gL or gl > gR:
                continue
            if gl >= gL and gr <= gR:
                out.append(self.segment(layer, gl, gr))
                continue
            gmid = (gl + gr) >> 1
            # push right first so the left child pops first (left-to-right order)
            stack.append((layer + 1, gmid + 1, gr))
            stack.append((layer + 1, gl, gmid))
        return out


@dataclass
class BuildCounters:
    """Per-layer build cost: candidate-generation distance computations and wall time."""

    dist_comps: list[int] = field(default_factory=list)
    wall_time: list[float] = field(default_factory=list)

    @property
    def total_dist_comps(self) -> int:
        return int(sum(self.dist_comps))

    def to_dict(self) -> dict:
        return {
            "layers": [
                {"layer": i, "dist_comps": int(dc), "wall_time_s": float(wt)}
                for i, (dc, wt) in enumerate(zip(self.dist_comps, self.wall_time))
            ],
            "total_dist_comps": self.total_dist_comps,
            "total_wall_time_s": float(sum(self.wall_time)),
        }


class SegmentTreeIndex:
    """The built index: per-layer capped adjacency plus its source dataset."""

    def __init__(self, dataset: SortedDataset, m: int, ef: int, seed: int,
                 reverse_edges: bool, nbrs: np.ndarray, cnts: np.ndarray,
                 counters: BuildCounters):
        self.dataset = dataset
        self.m = int(m)
        self.ef = int(ef)
        self.seed = int(seed)
        self.reverse_edges = bool(reverse_edges)
        self.nbrs = nbrs
        self.cnts = cnts
        self.counters = counters
        self.tree = SegmentTree(dataset.group_starts)
        self._ctx = None

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def d(self) -> int:
        return self.dataset.d

    @property
    def num_layers(self) -> int:
        return self.nbrs.shape[0]

    @property
    def build_params(self) -> dict:
        return {"m": self.m, "ef": self.ef, "seed": self.seed,
                "reverse_edges": self.reverse_edges}

    def context(self):
        if self._ctx is None:
            self._ctx = backend.kernels.make_context(self.n, self.m)
        return self._ctx

    def neighbors(self, layer: int, rank: int) -> np.ndarray:
        return self.nbrs[layer, rank, :self.cnts[layer, rank]]

    def __eq__(self, other) -> bool:
        if not isinstance(other, SegmentTreeIndex):
            return NotImplemented
        # wall times are diagnostics and deliberately excluded
        return (self.build_params == other.build_params
                and self.dataset == other.dataset
                and np.array_equal(self.cnts, other.cnts)
                and np.array_equal(self.nbrs, other.nbrs)
                and self.counters.dist_comps == other.counters.dist_comps)


def rng_prune(vectors, u: int, candidates, m: int) -> list[int]:
    """Greedily retain up to m candidates of u under the occlusion rule.

    `candidates` is an iterable of (rank, distance_to_u) pairs; distances are
    recomputed internally so only the ranks matter. A candidate is dropped
    when some already retained rank is strictly closer to both u and to it.
    Returns retained ranks in retention order (ascending distance, ties by
    rank).
    """
    vectors = np.ascontiguousarray(vectors, np.float32)
    ids = np.unique(np.asarray([int(r) for r, _ in candidates], np.int32))
    if np.any(ids == u):
        raise InvalidInputError("candidate set must not contain u itself")
    keep_ids = np.empty(ids.size + 1, np.int32)
    keep_d = np.empty(ids.size + 1, np.float64)
    kc, _ = backend.kernels.prune_candidates(
        vectors, int(u), ids, ids.size, int(m), keep_ids, keep_d)
    return [int(x) for x in keep_ids[:kc]]


def _internal_node_arrays(tree: SegmentTree, segs: list[Segment]):
    """Per-node rank and sibling-span arrays for one layer's forward pass."""
    us = []
    sib_lo = []
    sib_hi = []
    seg_lo = []
    seg_hi = []
    for seg in segs:
        left, right = tree.children(seg)
        us.append(np.arange(left.lo, left.hi + 1, dtype=np.int64))
        sib_lo.append(np.full(left.size, right.lo, np.int64))
        sib_hi.append(np.full(left.size, right.hi, np.int64))
        us.append(np.arange(right.lo, right.hi + 1, dtype=np.int64))
        sib_lo.append(np.full(right.size, left.lo, np.int64))
        sib_hi.append(np.full(right.size, left.hi, np.int64))
        seg_lo.append(seg.lo)
        seg_hi.append(seg.hi)
    return (np.concatenate(us), np.concatenate(sib_lo),
            np.concatenate(sib_hi), np.asarray(seg_lo, np.int64),
            np.asarray(seg_hi, np.int64))


def build_index(ds: SortedDataset, m: int, ef: int, seed: int = 0,
                reverse_edges: bool = True,
                threads: int | None = None) -> SegmentTreeIndex:
    """Build the full per-layer graph index bottom-up.

    The build is deterministic for a given (dataset, m, ef): entry points are
    segment midpoints and every ordering decision breaks ties by rank. `seed`
    is recorded in the build parameters for provenance.
    """
    if m < 1:
        raise InvalidInputError(f"m must be >= 1, got {m}")
    if ef < 1:
        raise InvalidInputError(f"ef must be >= 1, got {ef}")
    if ef < m:
        warnings.warn(
            f"ef ({ef}) below max out-degree m ({m}); candidate sets will be "
            "thinner than the degree cap", InvalidConfigWarning, stacklevel=2)
    backend.set_threads(threads)
    K = backend.kernels
    tree = SegmentTree(ds.group_starts)
    n = ds.n
    num_layers = tree.num_layers
    nbrs = np.full((num_layers, n, m), -1, np.int32)
    cnts = np.zeros((num_layers, n), np.int32)
    counters = BuildCounters([0] * num_layers, [0.0] * num_layers)
    for layer in range(num_layers - 1, -1, -1):
        t0 = time.perf_counter()
        ndc = 0
        segs = tree.layer_segments(layer)
        leaf_lo = [s.lo for s in segs if s.is_leaf and s.size > 1]
        leaf_hi = [s.hi for s in segs if s.is_leaf and s.size > 1]
        if leaf_lo:
            ndc += K.build_leaf_groups(
                ds.vectors, nbrs[layer], cnts[layer],
                np.asarray(leaf_lo, np.int64), np.asarray(leaf_hi, np.int64),
                m)
        internal = [s for s in segs if not s.is_leaf]
        if internal:
            us, sib_lo, sib_hi, seg_lo, seg_hi = _internal_node_arrays(
                tree, internal)
            ndc += K.build_internal_nodes(
                ds.vectors, nbrs[layer + 1], cnts[layer + 1],
                nbrs[layer], cnts[layer], us, sib_lo, sib_hi, m, ef)
            if reverse_edges:
                ndc += K.reverse_pass_segments(
                    ds.vectors, nbrs[layer], cnts[layer], seg_lo, seg_hi, m)
        counters.dist_comps[layer] = int(ndc)
        counters.wall_time[layer] = time.perf_counter() - t0
    return SegmentTreeIndex(ds, m, ef, seed, reverse_edges, nbrs, cnts,
                            counters)


def build_segment_graph(ds: SortedDataset, seg: Segment,
                        child_nbrs: np.ndarray, child_cnts: np.ndarray,
                        m: int, ef: int,
                        reverse_edges: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Build one internal segment's graph from its children's rows.

    `child_nbrs`/`child_cnts` are (n, *) arrays holding both children's
    finished adjacency. Returns (nbrs, cnts) arrays of the same layout with
    rows filled for ranks in [seg.lo, seg.hi]. This is the same code path
    build_index drives layer by layer.
    """
    if seg.is_leaf:
        return (np.full((ds.n, m), -1, np.int32), np.zeros(ds.n, np.int32))
    K = backend.kernels
    tree = SegmentTree(ds.group_starts)
    us, sib_lo, sib_hi, seg_lo, seg_hi = _internal_node_arrays(tree, [seg])
    out_nbrs = np.full((ds.n, m), -1, np.int32)
    out_cnts = np.zeros(ds.n, np.int32)
    K.build_internal_nodes(ds.vectors, child_nbrs, child_cnts, out_nbrs,
                           out_cnts, us, sib_lo, sib_hi, m, ef)
    if reverse_edges:
        K.reverse_pass_segments(ds.vectors, out_nbrs, out_cnts, seg_lo,
                                seg_hi, m)
    return out_nbrs, out_cnts
