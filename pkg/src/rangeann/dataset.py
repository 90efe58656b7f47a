"""Datasets, attribute-sorted views, rank mapping, and workload generation.

Objects are float32 vectors paired with one or more float64 attributes. The
index and all searches operate on the dataset sorted by the first attribute
(ties broken by original id); a position in that order is a "rank". Query
predicates arrive as closed raw-value intervals and are mapped to rank
intervals with binary search.

File formats
------------
fvecs/ivecs   per row: int32 dimension, then dim float32 / int32 values
raw f32       packed float32 matrix, dimension supplied by the caller
attributes    CSV or TSV, one row per object, one column per attribute
workload      JSON lines: {"query_index": int, "ranges": [[lo, hi], ...], "k": int}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import InvalidInputError


# ---------------------------------------------------------------------------
# vector / attribute file IO


def read_fvecs(path) -> np.ndarray:
    """Read an .fvecs file into an (n, d) float32 array."""
    raw = np.fromfile(path, dtype=np.int32)
    if raw.size == 0:
        raise InvalidInputError(f"{path}: empty vector file")
    d = int(raw[0])
    if d <= 0 or raw.size % (d + 1) != 0:
        raise InvalidInputError(f"{path}: malformed fvecs (dim {d})")
    mat = raw.reshape(-1, d + 1)
    if not np.all(mat[:, 0] == d):
        raise InvalidInputError(f"{path}: inconsistent fvecs dimensions")
    return mat[:, 1:].copy().view(np.float32)


def write_fvecs(path, vectors: np.ndarray) -> None:
    vectors = np.ascontiguousarray(vectors, np.float32)
    n, d = vectors.shape
    out = np.empty((n, d + 1), np.int32)
    out[:, 0] = d
    out[:, 1:] = vectors.view(np.int32)
    out.tofile(path)


def read_ivecs(path) -> list[np.ndarray]:
    """Read an .ivecs file as a list of int32 rows (rows may vary in length)."""
    raw = np.fromfile(path, dtype=np.int32)
    rows = []
    pos = 0
    while pos < raw.size:
        d = int(raw[pos])
        if d < 0 or pos + 1 + d > raw.size:
            raise InvalidInputError(f"{path}: malformed ivecs row at {pos}")
        rows.append(raw[pos + 1:pos + 1 + d].copy())
        pos += 1 + d
    return rows


def write_ivecs(path, rows) -> None:
    parts = []
    for row in rows:
        row = np.ascontiguousarray(row, np.int32)
        parts.append(np.concatenate(([np.int32(row.size)], row)))
    np.concatenate(parts).astype(np.int32).tofile(path)


def read_raw_f32(path, dim: int) -> np.ndarray:
    raw = np.fromfile(path, dtype=np.float32)
    if dim <= 0 or raw.size % dim != 0:
        raise InvalidInputError(f"{path}: size not divisible by dim {dim}")
    return raw.reshape(-1, dim)


def read_attributes(path, delimiter: str | None = None,
                    header: bool = False) -> np.ndarray:
    """Read a CSV/TSV attribute table into an (n, A) float64 array."""
    if delimiter is None:
        delimiter = "\t" if str(path).endswith((".tsv", ".tab")) else ","
    arr = np.loadtxt(path, delimiter=delimiter, skiprows=1 if header else 0,
                     dtype=np.float64, ndmin=2)
    return arr


# ---------------------------------------------------------------------------
# sorted dataset


@dataclass
class RankRange:
    """Inclusive rank interval [L, R] in attribute-sorted order."""

    L: int
    R: int

    @property
    def length(self) -> int:
        return self.R - self.L + 1

    def as_tuple(self) -> tuple[int, int]:
        return (self.L, self.R)


class SortedDataset:
    """Vectors and attributes sorted by the first attribute.

    Ties sort by original id, so the order is a total one. Runs of equal
    first-attribute values form groups; group boundaries are what rank
    mapping and the segment tree align to.
    """

    def __init__(self, vectors, attrs, original_ids):
        self.vectors = np.ascontiguousarray(vectors, np.float32)
        self.attrs = np.ascontiguousarray(attrs, np.float64)
        self.original_ids = np.ascontiguousarray(original_ids, np.int64)
        change = np.flatnonzero(np.diff(self.attrs[:, 0])) + 1
        self.group_starts = np.concatenate(
            ([0], change, [self.n])).astype(np.int64)
        sizes = np.diff(self.group_starts)
        self.group_of = np.repeat(
            np.arange(self.num_groups, dtype=np.int32), sizes)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    @property
    def num_attrs(self) -> int:
        return self.attrs.shape[1]

    @property
    def num_groups(self) -> int:
        return self.group_starts.shape[0] - 1

    def __eq__(self, other) -> bool:
        if not isinstance(other, SortedDataset):
            return NotImplemented
        return (np.array_equal(self.vectors, other.vectors)
                and np.array_equal(self.attrs, other.attrs)
                and np.array_equal(self.original_ids, other.original_ids))

    def group_span(self, g: int) -> tuple[int, int]:
        """Inclusive rank bounds of group g."""
        return int(self.group_starts[g]), int(self.group_starts[g + 1] - 1)

    def align_to_groups(self, L: int, R: int) -> tuple[int, int]:
        """Widen [L, R] so both endpoints sit on group boundaries."""
        L2 = int(self.group_starts[self.group_of[L]])
        R2 = int(self.group_starts[self.group_of[R] + 1] - 1)
        return L2, R2


def load_dataset(vectors, attrs) -> SortedDataset:
    """Build a SortedDataset from unsorted parallel arrays.

    `vectors` is (n, d) float-like, `attrs` is (n,) or (n, A). Validates
    matching lengths and finiteness, then sorts by attrs[:, 0] with original
    ids (input positions) breaking ties.
    """
    vectors = np.ascontiguousarray(vectors, np.float32)
    attrs = np.asarray(attrs, np.float64)
    if attrs.ndim == 1:
        attrs = attrs[:, None]
    if vectors.ndim != 2 or attrs.ndim != 2:
        raise InvalidInputError("vectors must be (n, d) and attrs (n, A)")
    if vectors.shape[0] != attrs.shape[0]:
        raise InvalidInputError(
            f"count mismatch: {vectors.shape[0]} vectors vs "
            f"{attrs.shape[0]} attribute rows")
    if vectors.shape[0] == 0:
        raise InvalidInputError("empty dataset")
    if not np.all(np.isfinite(vectors)):
        raise InvalidInputError("non-finite vector component")
    if not np.all(np.isfinite(attrs)):
        raise InvalidInputError("non-finite attribute value")
    ids = np.arange(vectors.shape[0], dtype=np.int64)
    order = np.lexsort((ids, attrs[:, 0]))
    return SortedDataset(vectors[order], attrs[order], ids[order])


def map_range(ds: SortedDataset, a_l: float, a_r: float) -> RankRange | None:
    """Map a closed raw interval on the first attribute to a RankRange.

    Returns None when no object falls inside. The result never splits a
    duplicate-value group.
    """
    if not (np.isfinite(a_l) and np.isfinite(a_r)):
        raise InvalidInputError("range endpoints must be finite")
    col = ds.attrs[:, 0]
    L = int(np.searchsorted(col, a_l, side="left"))
    R = int(np.searchsorted(col, a_r, side="right")) - 1
    if L > R:
        return None
    return RankRange(L, R)


# ---------------------------------------------------------------------------
# queries and workloads


@dataclass
class Query:
    """A query vector with one closed raw interval per constrained attribute."""

    vector: np.ndarray
    ranges: list[tuple[float, float]]
    k: int
    index: int = 0


@dataclass
class Workload:
    queries: list[Query]
    seed: int = 0
    fraction_spec: str = ""
    exponents: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.queries)


def _exponent_assignment(num_queries: int, fraction_spec, rng) -> np.ndarray:
    if isinstance(fraction_spec, str) and fraction_spec == "mixed":
        # ten equal subsets, one per exponent 0..9; any remainder goes to the
        # lowest exponents, assignment shuffled by the seeded generator
        base = np.repeat(np.arange(10), num_queries // 10)
        extra = np.arange(num_queries % 10)
        exps = np.concatenate([base, extra]).astype(np.int64)
        rng.shuffle(exps)
        return exps
    i = int(fraction_spec)
    if not 0 <= i <= 30:
        raise InvalidInputError(f"fraction exponent out of range: {i}")
    return np.full(num_queries, i, np.int64)


def gen_workload(ds: SortedDataset, num_queries: int, fraction_spec,
                 query_vectors: np.ndarray, seed: int, k: int = 10,
                 secondary_fractions: list[int] | None = None) -> Workload:
    """Generate range queries over ranks, stored as raw attribute intervals.

    For exponent i the rank range has length floor(n / 2**i) with a start
    drawn uniformly from [0, n - len]; endpoints are then widened to group
    boundaries so mapping the raw interval back reproduces the rank range
    exactly. "mixed" splits the queries evenly over exponents 0..9.
    Secondary attributes (optional) get value-space ranges covering the given
    fraction of objects each.
    """
    query_vectors = np.ascontiguousarray(query_vectors, np.float32)
    if query_vectors.ndim != 2 or query_vectors.shape[1] != ds.d:
        raise InvalidInputError("query vectors must be (nq, d) matching the dataset")
    if num_queries < 1:
        raise InvalidInputError("num_queries must be positive")
    if num_queries > query_vectors.shape[0]:
        raise InvalidInputError(
            f"asked for {num_queries} queries but only "
            f"{query_vectors.shape[0]} query vectors are available")
    secondary_fractions = secondary_fractions or []
    if len(secondary_fractions) > ds.num_attrs - 1:
        raise InvalidInputError("more secondary fractions than secondary attributes")
    rng = np.random.default_rng(seed)
    exps = _exponent_assignment(num_queries, fraction_spec, rng)
    n = ds.n
    col = ds.attrs[:, 0]
    sec_orders = [np.argsort(ds.attrs[:, j + 1], kind="stable")
                  for j in range(len(secondary_fractions))]
    queries: list[Query] = []
    for qi in range(num_queries):
        length = n >> int(exps[qi])
        if length < 1:
            raise InvalidInputError(
                f"fraction exponent {int(exps[qi])} empties an n={n} dataset")
        start = int(rng.integers(0, n - length + 1))
        end = start + length - 1
        start, end = ds.align_to_groups(start, end)
        ranges = [(float(col[start]), float(col[end]))]
        for j, e in enumerate(secondary_fractions):
            slen = n >> int(e)
            if slen < 1:
                raise InvalidInputError(
                    f"secondary fraction exponent {e} empties an n={n} dataset")
            s = int(rng.integers(0, n - slen + 1))
            vals = ds.attrs[sec_orders[j], j + 1]
            ranges.append((float(vals[s]), float(vals[s + slen - 1])))
        queries.append(Query(vector=query_vectors[qi], ranges=ranges,
                             k=k, index=qi))
    return Workload(queries=queries, seed=seed,
                    fraction_spec=str(fraction_spec),
                    exponents=[int(e) for e in exps])


def save_workload(path, workload: Workload) -> None:
    with open(path, "w") as fh:
        for q in workload.queries:
            rec = {"query_index": q.index,
                   "ranges": [[lo, hi] for lo, hi in q.ranges],
                   "k": q.k}
            fh.write(json.dumps(rec) + "\n")


def load_workload(path, query_vectors: np.ndarray) -> Workload:
    query_vectors = np.ascontiguousarray(query_vectors, np.float32)
    queries = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                qi = int(rec["query_index"])
                ranges = [(float(lo), float(hi)) for lo, hi in rec["ranges"]]
                k = int(rec["k"])
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidInputError(f"{path}:{line_no}: bad workload line") from exc
            if qi < 0 or qi >= query_vectors.shape[0]:
                raise InvalidInputError(
                    f"{path}:{line_no}: query_index {qi} outside query vector file")
            queries.append(Query(vector=query_vectors[qi], ranges=ranges,
                                 k=k, index=qi))
    if not queries:
        raise InvalidInputError(f"{path}: empty workload")
    return Workload(queries=queries)
