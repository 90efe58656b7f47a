"""Binary index serialization.

Layout (all little-endian), version 1:

    magic          4 bytes  "IRGX"
    version        u32
    n, d, m        u32 each
    num_layers     u32
    ef             u32
    seed           u64
    flags          u32      bit 0 = reverse edges enabled at build
    A              u32      attribute columns
    G              u32      duplicate-value groups
    group_starts   (G+1) x u32
    original_ids   n x i64
    attrs          n*A x f64   (rank-major)
    vectors        n*d x f32   (rank-major)
    dist_comps     num_layers x u64
    adjacency      per layer, per present rank ascending:
                   u8 count, then count x u32 neighbor ranks
    crc32          u32 over every preceding byte

A rank is present at a layer when its group's leaf sits at that layer or
deeper, so presence is recomputed from group_starts rather than stored. The
file embeds the sorted dataset, making a saved index self-contained. Build
wall times are diagnostics, not index state, and are deliberately left out
so same-seed rebuilds serialize to identical bytes.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .builder import BuildCounters, SegmentTree, SegmentTreeIndex
from .core import CorruptIndexError, InvalidInputError
from .dataset import SortedDataset

MAGIC = b"IRGX"
VERSION = 1
_CHUNK = 1 << 16


def _adjacency_chunks(nbrs_l, cnts_l, ranks):
    """Yield the interleaved (u8 count + u32 neighbors) bytes for one layer."""
    m = nbrs_l.shape[1]
    for s in range(0, ranks.size, _CHUNK):
        rs = ranks[s:s + _CHUNK]
        counts = cnts_l[rs].astype(np.int64)
        mask = np.arange(m)[None, :] < counts[:, None]
        flat = nbrs_l[rs][mask].astype("<u4")
        sizes = 1 + 4 * counts
        off = np.zeros(rs.size + 1, np.int64)
        np.cumsum(sizes, out=off[1:])
        buf = np.zeros(off[-1], np.uint8)
        buf[off[:-1]] = counts.astype(np.uint8)
        nb = flat.view(np.uint8)
        if nb.size:
            byte_off = np.zeros(rs.size + 1, np.int64)
            np.cumsum(4 * counts, out=byte_off[1:])
            pos = (np.repeat(off[:-1] + 1 - byte_off[:-1], 4 * counts)
                   + np.arange(nb.size, dtype=np.int64))
            buf[pos] = nb
        yield buf.tobytes()


def save_index(index: SegmentTreeIndex, path) -> None:
    """Write the index (graphs, dataset, build parameters, counters)."""
    if index.m > 255:
        raise InvalidInputError(
            f"adjacency rows are stored with one-byte counts; m={index.m} "
            "exceeds 255")
    if not 0 <= index.seed < 1 << 64:
        raise InvalidInputError("seed must fit an unsigned 64-bit integer")
    ds = index.dataset
    tree = index.tree
    crc = 0
    with open(path, "wb") as fh:
        def emit(b: bytes) -> None:
            nonlocal crc
            crc = zlib.crc32(b, crc)
            fh.write(b)

        emit(struct.pack("<4sIIIII", MAGIC, VERSION, ds.n, ds.d, index.m,
                         index.num_layers))
        emit(struct.pack("<IQIII", index.ef, index.seed,
                         1 if index.reverse_edges else 0, ds.num_attrs,
                         ds.num_groups))
        emit(ds.group_starts.astype("<u4").tobytes())
        emit(ds.original_ids.astype("<i8").tobytes())
        emit(ds.attrs.astype("<f8").tobytes())
        emit(ds.vectors.astype("<f4").tobytes())
        emit(np.asarray(index.counters.dist_comps, "<u8").tobytes())
        present_base = tree.leaf_layer[ds.group_of]
        for layer in range(index.num_layers):
            ranks = np.flatnonzero(present_base >= layer)
            for chunk in _adjacency_chunks(index.nbrs[layer], index.cnts[layer],
                                           ranks):
                emit(chunk)
        fh.write(struct.pack("<I", crc & 0xFFFFFFFF))


def _need(data: bytes, off: int, nbytes: int, what: str) -> None:
    if off + nbytes > len(data) - 4:
        raise CorruptIndexError(f"truncated index file while reading {what}")


def load_index(path) -> SegmentTreeIndex:
    """Read an index written by save_index, verifying checksum and shape."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 48:
        raise CorruptIndexError("file too short to be an index")
    (stored_crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CorruptIndexError("checksum mismatch")
    magic, version, n, d, m, num_layers = struct.unpack_from("<4sIIIII", data, 0)
    if magic != MAGIC:
        raise CorruptIndexError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CorruptIndexError(f"unsupported format version {version}")
    off = 24
    ef, seed, flags, A, G = struct.unpack_from("<IQIII", data, off)
    off += 24

    def take(dtype, count, what):
        nonlocal off
        dt = np.dtype(dtype)
        _need(data, off, dt.itemsize * count, what)
        arr = np.frombuffer(data, dt, count, off)
        off += dt.itemsize * count
        return arr

    group_starts = take("<u4", G + 1, "group starts").astype(np.int64)
    ids = take("<i8", n, "original ids").astype(np.int64)
    attrs = take("<f8", n * A, "attributes").astype(np.float64).reshape(n, A)
    vectors = take("<f4", n * d, "vectors").astype(np.float32).reshape(n, d)
    dist_comps = take("<u8", num_layers, "build counters")
    ds = SortedDataset(vectors, attrs, ids)
    if not np.array_equal(ds.group_starts, group_starts):
        raise CorruptIndexError("group boundaries disagree with attributes")
    tree = SegmentTree(ds.group_starts)
    if tree.num_layers != num_layers:
        raise CorruptIndexError(
            f"layer count {num_layers} does not match the segment tree "
            f"({tree.num_layers})")
    nbrs = np.full((num_layers, n, m), -1, np.int32)
    cnts = np.zeros((num_layers, n), np.int32)
    present_base = tree.leaf_layer[ds.group_of]
    for layer in range(num_layers):
        for rank in np.flatnonzero(present_base >= layer):
            _need(data, off, 1, "adjacency row header")
            c = data[off]
            off += 1
            if c > m:
                raise CorruptIndexError(
                    f"row count {c} exceeds m={m} at layer {layer}")
            _need(data, off, 4 * c, "adjacency row")
            row = np.frombuffer(data, "<u4", c, off)
            off += 4 * c
            if c and row.max() >= n:
                raise CorruptIndexError("neighbor rank out of bounds")
            nbrs[layer, rank, :c] = row
            cnts[layer, rank] = c
    if off != len(data) - 4:
        raise CorruptIndexError("unexpected trailing bytes")
    counters = BuildCounters([int(x) for x in dist_comps],
                             [0.0] * num_layers)
    return SegmentTreeIndex(ds, int(m), int(ef), int(seed), bool(flags & 1),
                            nbrs, cnts, counters)
