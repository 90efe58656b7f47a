"""Numba JIT kernels: distances, pruning, beam search, edge selection, build passes.

All functions here are nopython-compiled and operate on plain arrays. The
matching pure-numpy implementations live in _kernels_numpy; both expose the
same call surface (see backend.py).

Conventions
-----------
vectors       (n, d) float32, C-contiguous
attrs         (n, A) float64, sorted by column 0
nbrs          (num_layers, n, m) int32 adjacency, -1 padded
cnts          (num_layers, n) int32 row lengths
group_of      (n,) int32 rank -> duplicate-value group
group_starts  (G + 1,) int64 group -> first rank (half-open boundaries)
stats         (8,) int64: [0] distance computations, [1] adjacency entries
              scanned, [2] layers collected, [3] hops, [4] out-of-range visits
"""

from __future__ import annotations

import numpy as np
from numba import njit

BACKEND = "numba"

# stats slots
S_DIST = 0
S_SCAN = 1
S_LAYER = 2
S_HOP = 3
S_OOR = 4


@njit(cache=True)
def sqdist(a, b):
    acc = 0.0
    for i in range(a.shape[0]):
        diff = np.float64(a[i]) - np.float64(b[i])
        acc += diff * diff
    return acc


@njit(cache=True, inline="always")
def _kless(d1, r1, d2, r2):
    # lexicographic (distance, rank) order; ranks break exact ties
    if d1 < d2:
        return True
    if d1 > d2:
        return False
    return r1 < r2


@njit(cache=True)
def _cpush(cd, cr, cs, size, d, r, s):
    # min-heap push for the candidate frontier, payload s = streak
    i = size
    cd[i] = d
    cr[i] = r
    cs[i] = s
    while i > 0:
        p = (i - 1) >> 1
        if _kless(cd[i], cr[i], cd[p], cr[p]):
            cd[i], cd[p] = cd[p], cd[i]
            cr[i], cr[p] = cr[p], cr[i]
            cs[i], cs[p] = cs[p], cs[i]
            i = p
        else:
            break
    return size + 1


@njit(cache=True)
def _cpop(cd, cr, cs, size):
    # removes the root; caller must read cd[0]/cr[0]/cs[0] before popping
    last = size - 1
    cd[0] = cd[last]
    cr[0] = cr[last]
    cs[0] = cs[last]
    i = 0
    while True:
        l = 2 * i + 1
        r = l + 1
        small = i
        if l < last and _kless(cd[l], cr[l], cd[small], cr[small]):
            small = l
        if r < last and _kless(cd[r], cr[r], cd[small], cr[small]):
            small = r
        if small == i:
            break
        cd[i], cd[small] = cd[small], cd[i]
        cr[i], cr[small] = cr[small], cr[i]
        cs[i], cs[small] = cs[small], cs[i]
        i = small
    return last


@njit(cache=True)
def _max_sift_down(hd, hr, size, i):
    while True:
        l = 2 * i + 1
        r = l + 1
        big = i
        if l < size and _kless(hd[big], hr[big], hd[l], hr[l]):
            big = l
        if r < size and _kless(hd[big], hr[big], hd[r], hr[r]):
            big = r
        if big == i:
            break
        hd[i], hd[big] = hd[big], hd[i]
        hr[i], hr[big] = hr[big], hr[i]
        i = big


@njit(cache=True)
def _bounded_max_push(hd, hr, size, cap, d, r):
    # keeps the cap smallest (distance, rank) items; root is the current worst
    if size < cap:
        hd[size] = d
        hr[size] = r
        i = size
        while i > 0:
            p = (i - 1) >> 1
            if _kless(hd[p], hr[p], hd[i], hr[i]):
                hd[i], hd[p] = hd[p], hd[i]
                hr[i], hr[p] = hr[p], hr[i]
                i = p
            else:
                break
        return size + 1
    if _kless(d, r, hd[0], hr[0]):
        hd[0] = d
        hr[0] = r
        _max_sift_down(hd, hr, cap, 0)
    return size


@njit(cache=True)
def _max_pop(hd, hr, size):
    last = size - 1
    hd[0] = hd[last]
    hr[0] = hr[last]
    _max_sift_down(hd, hr, last, 0)
    return last


@njit(cache=True)
def _extract_sorted(hd, hr, size, kmax, out_d, out_r):
    # drain a bounded max-heap into ascending (distance, rank) order,
    # keeping at most kmax items
    keep = size if size < kmax else kmax
    s = size
    while s > keep:
        s = _max_pop(hd, hr, s)
    i = keep - 1
    while s > 0:
        out_d[i] = hd[0]
        out_r[i] = hr[0]
        s = _max_pop(hd, hr, s)
        i -= 1
    return keep


@njit(cache=True)
def prune_candidates(vectors, u, cand, ncand, cap, keep_ids, keep_d):
    """Greedy relative-neighborhood pruning.

    Candidates are ordered by (distance to u, rank); a candidate is dropped
    when an already retained one is strictly closer to both u and it.
    Returns (retained count, distance computations).
    """
    if ncand == 0:
        return 0, 0
    ids = np.sort(cand[:ncand])
    d = np.empty(ncand, np.float64)
    for i in range(ncand):
        d[i] = sqdist(vectors[u], vectors[ids[i]])
    ndc = ncand
    order = np.argsort(d, kind="mergesort")
    kc = 0
    for oi in range(ncand):
        if kc >= cap:
            break
        c = ids[order[oi]]
        dc = d[order[oi]]
        ok = True
        for j in range(kc):
            if keep_d[j] < dc:
                docc = sqdist(vectors[keep_ids[j]], vectors[c])
                ndc += 1
                if docc < dc:
                    ok = False
                    break
        if ok:
            keep_ids[kc] = c
            keep_d[kc] = dc
            kc += 1
    return kc, ndc


# search over a single layer's graph (used by the build pass and by the
# post/in-filtering and per-segment baselines)
#
# mode 0: plain        traverse everything, return the whole beam
# mode 1: post-filter  traverse everything, collect in-range into a side heap
# mode 2: in-filter    traverse only in-range neighbors


@njit(cache=True)
def search_layer(vectors, nbrs_l, cnts_l, entry, q, beamw, mode, L, R, kcap,
                 visited, epoch, cd, cr, cs, rd, rr, kd, kr, stats,
                 out_d, out_r):
    visited[entry] = epoch
    d0 = sqdist(q, vectors[entry])
    stats[S_DIST] += 1
    csize = _cpush(cd, cr, cs, 0, d0, entry, 0)
    rsize = _bounded_max_push(rd, rr, 0, beamw, d0, entry)
    ksize = 0
    if mode == 1 and entry >= L and entry <= R:
        ksize = _bounded_max_push(kd, kr, ksize, kcap, d0, entry)
    while csize > 0:
        du = cd[0]
        u = cr[0]
        if rsize == beamw and _kless(rd[0], rr[0], du, u):
            break
        csize = _cpop(cd, cr, cs, csize)
        stats[S_HOP] += 1
        c = cnts_l[u]
        stats[S_SCAN] += c
        for j in range(c):
            v = nbrs_l[u, j]
            if mode == 2 and (v < L or v > R):
                continue
            if visited[v] == epoch:
                continue
            visited[v] = epoch
            dv = sqdist(q, vectors[v])
            stats[S_DIST] += 1
            if rsize < beamw or _kless(dv, v, rd[0], rr[0]):
                rsize = _bounded_max_push(rd, rr, rsize, beamw, dv, v)
                csize = _cpush(cd, cr, cs, csize, dv, v, 0)
            if mode == 1 and v >= L and v <= R:
                ksize = _bounded_max_push(kd, kr, ksize, kcap, dv, v)
    if mode == 1:
        return _extract_sorted(kd, kr, ksize, kcap, out_d, out_r)
    return _extract_sorted(rd, rr, rsize, beamw, out_d, out_r)


@njit(cache=True)
def select_edges(nbrs, cnts, group_of, group_starts, u, L, R, m, use_skip,
                 out, stats):
    """Collect u's neighbors within [L, R] along its root-to-leaf path.

    With use_skip, a layer is passed over when the child holding u covers the
    same slice of [L, R] as the current segment (the deeper layer then owns a
    superset of the useful edges). Without it, every layer down to the first
    segment fully inside [L, R] is collected; that variant never stops early
    on |S| = m and is the reference the skipping walk is measured against.
    """
    G = group_starts.shape[0] - 1
    gl = 0
    gr = G - 1
    gu = group_of[u]
    lay = 0
    count = 0
    while True:
        if use_skip and count >= m:
            break
        lo = group_starts[gl]
        hi = group_starts[gr + 1] - 1
        is_leaf = gl == gr
        cgl = gl
        cgr = gr
        if not is_leaf:
            gmid = (gl + gr) >> 1
            if gu <= gmid:
                cgr = gmid
            else:
                cgl = gmid + 1
            clo = group_starts[cgl]
            chi = group_starts[cgr + 1] - 1
            if use_skip:
                il = lo if lo > L else L
                ih = hi if hi < R else R
                cl = clo if clo > L else L
                ch = chi if chi < R else R
                if cl == il and ch == ih:
                    gl = cgl
                    gr = cgr
                    lay += 1
                    continue
        c = cnts[lay, u]
        stats[S_SCAN] += c
        stats[S_LAYER] += 1
        for j in range(c):
            v = nbrs[lay, u, j]
            if v < L or v > R:
                continue
            dup = False
            for t in range(count):
                if out[t] == v:
                    dup = True
                    break
            if not dup and count < m:
                out[count] = v
                count += 1
        if lo >= L and hi <= R:
            break
        if is_leaf:
            break
        gl = cgl
        gr = cgr
        lay += 1
    return count


@njit(cache=True)
def search_dedicated(vectors, nbrs, cnts, group_of, group_starts, q, L, R,
                     beam, k, attrs, sec_lo, sec_hi, policy, seed, use_skip,
                     visited, epoch, cd, cr, cs, rd, rr, selbuf, stats,
                     out_d, out_r):
    """Beam search over the query's on-the-fly dedicated graph.

    Neighbor lists come from select_edges, so traversal stays inside [L, R]
    by construction. Secondary predicates (sec_lo/sec_hi over attrs columns
    1..) gate entry to the result heap; out-of-range nodes are visited with
    probability 1 (policy 1), 0 (policy 0), or exp(-streak) (policy 2).
    """
    nsec = sec_lo.shape[0]
    if policy == 2 and nsec > 0:
        np.random.seed(seed)
    m = nbrs.shape[2]
    entry = (L + R) >> 1
    visited[entry] = epoch
    d0 = sqdist(q, vectors[entry])
    stats[S_DIST] += 1
    e_inr = True
    for j in range(nsec):
        a = attrs[entry, j + 1]
        if a < sec_lo[j] or a > sec_hi[j]:
            e_inr = False
            break
    if not e_inr:
        stats[S_OOR] += 1
    csize = _cpush(cd, cr, cs, 0, d0, entry, 0 if e_inr else 1)
    rsize = 0
    if e_inr:
        rsize = _bounded_max_push(rd, rr, rsize, beam, d0, entry)
    while csize > 0:
        du = cd[0]
        u = cr[0]
        tu = cs[0]
        if rsize == beam and _kless(rd[0], rr[0], du, u):
            break
        csize = _cpop(cd, cr, cs, csize)
        stats[S_HOP] += 1
        nsel = select_edges(nbrs, cnts, group_of, group_starts, u, L, R, m,
                            use_skip, selbuf, stats)
        for jj in range(nsel):
            v = selbuf[jj]
            if visited[v] == epoch:
                continue
            v_inr = True
            for j in range(nsec):
                a = attrs[v, j + 1]
                if a < sec_lo[j] or a > sec_hi[j]:
                    v_inr = False
                    break
            if not v_inr:
                if policy == 0:
                    continue
                if policy == 2 and np.random.random() >= np.exp(-np.float64(tu)):
                    continue
            visited[v] = epoch
            dv = sqdist(q, vectors[v])
            stats[S_DIST] += 1
            if not v_inr:
                stats[S_OOR] += 1
            admit = rsize < beam or _kless(dv, v, rd[0], rr[0])
            if v_inr and admit:
                rsize = _bounded_max_push(rd, rr, rsize, beam, dv, v)
            if admit:
                csize = _cpush(cd, cr, cs, csize, dv, v, 0 if v_inr else tu + 1)
    return _extract_sorted(rd, rr, rsize, k, out_d, out_r)


@njit(cache=True)
def brute_topk(vectors, attrs, q, L, R, k, sec_lo, sec_hi, hd, hr,
               out_d, out_r):
    """Exact top-k by linear scan over ranks [L, R] with secondary filters."""
    nsec = sec_lo.shape[0]
    size = 0
    ndc = 0
    for v in range(L, R + 1):
        ok = True
        for j in range(nsec):
            a = attrs[v, j + 1]
            if a < sec_lo[j] or a > sec_hi[j]:
                ok = False
                break
        if not ok:
            continue
        dv = sqdist(q, vectors[v])
        ndc += 1
        size = _bounded_max_push(hd, hr, size, k, dv, v)
    cnt = _extract_sorted(hd, hr, size, k, out_d, out_r)
    return cnt, ndc


@njit(cache=True)
def brute_topk_batch(vectors, attrs, queries, Ls, Rs, sec_lo, sec_hi, k,
                     out_ids, out_cnt):
    """Groundtruth helper: exact top-k (as ranks) for a batch of queries."""
    nq = queries.shape[0]
    hd = np.empty(k + 1, np.float64)
    hr = np.empty(k + 1, np.int32)
    od = np.empty(k, np.float64)
    orr = np.empty(k, np.int32)
    total = 0
    for qi in range(nq):
        cnt, ndc = brute_topk(vectors, attrs, queries[qi], Ls[qi], Rs[qi], k,
                              sec_lo[qi], sec_hi[qi], hd, hr, od, orr)
        total += ndc
        out_cnt[qi] = cnt
        for j in range(cnt):
            out_ids[qi, j] = orr[j]
    return total


@njit(cache=True)
def build_internal_nodes(vectors, nbrs_child, cnts_child, nbrs_out, cnts_out,
                         us, sib_lo, sib_hi, m, ef):
    """Forward pass for all nodes of one layer's internal segments.

    Candidates for u are its neighbors one layer down (the child holding u)
    plus a beam search of width ef over the sibling child's graph (entered at
    the sibling's midpoint rank); siblings no larger than ef contribute every
    member instead. Greedy pruning caps the row at m. Returns distance
    computations performed.
    """
    n = vectors.shape[0]
    visited = np.zeros(n, np.int64)
    cd = np.empty(n + 2, np.float64)
    cr = np.empty(n + 2, np.int32)
    cs = np.empty(n + 2, np.int32)
    rd = np.empty(ef + 1, np.float64)
    rr = np.empty(ef + 1, np.int32)
    kd = np.empty(1, np.float64)
    kr = np.empty(1, np.int32)
    od = np.empty(ef + 1, np.float64)
    orr = np.empty(ef + 1, np.int32)
    cand = np.empty(m + ef + 1, np.int32)
    keep_ids = np.empty(m + 1, np.int32)
    keep_d = np.empty(m + 1, np.float64)
    stats = np.zeros(8, np.int64)
    epoch = 0
    ndc = 0
    for t in range(us.shape[0]):
        u = us[t]
        q = vectors[u]
        nc = 0
        cc = cnts_child[u]
        for j in range(cc):
            cand[nc] = nbrs_child[u, j]
            nc += 1
        slo = sib_lo[t]
        shi = sib_hi[t]
        if shi - slo + 1 <= ef:
            for v in range(slo, shi + 1):
                cand[nc] = v
                nc += 1
        else:
            epoch += 1
            entry = (slo + shi) >> 1
            got = search_layer(vectors, nbrs_child, cnts_child, entry, q, ef,
                               0, 0, n - 1, 0, visited, epoch, cd, cr, cs,
                               rd, rr, kd, kr, stats, od, orr)
            for j in range(got):
                cand[nc] = orr[j]
                nc += 1
        kc, nd2 = prune_candidates(vectors, u, cand, nc, m, keep_ids, keep_d)
        ndc += nd2
        for j in range(kc):
            nbrs_out[u, j] = keep_ids[j]
        cnts_out[u] = kc
    return ndc + stats[S_DIST]


@njit(cache=True)
def reverse_pass_segments(vectors, nbrs_l, cnts_l, seg_lo, seg_hi, m):
    """Insert reverse edges within each segment, re-pruning overfull rows."""
    ndc = 0
    keep_ids = np.empty(m + 1, np.int32)
    keep_d = np.empty(m + 1, np.float64)
    tmp = np.empty(m + 1, np.int32)
    for s in range(seg_lo.shape[0]):
        lo = seg_lo[s]
        hi = seg_hi[s]
        snap = nbrs_l[lo:hi + 1].copy()
        scnt = cnts_l[lo:hi + 1].copy()
        for u in range(lo, hi + 1):
            for j in range(scnt[u - lo]):
                v = snap[u - lo, j]
                c = cnts_l[v]
                present = False
                for t in range(c):
                    if nbrs_l[v, t] == u:
                        present = True
                        break
                if present:
                    continue
                if c < m:
                    nbrs_l[v, c] = u
                    cnts_l[v] = c + 1
                else:
                    for t in range(c):
                        tmp[t] = nbrs_l[v, t]
                    tmp[c] = u
                    kc, nd2 = prune_candidates(vectors, v, tmp, c + 1, m,
                                               keep_ids, keep_d)
                    ndc += nd2
                    for t in range(kc):
                        nbrs_l[v, t] = keep_ids[t]
                    for t in range(kc, m):
                        nbrs_l[v, t] = -1
                    cnts_l[v] = kc
    return ndc


@njit(cache=True)
def build_leaf_groups(vectors, nbrs_l, cnts_l, g_lo, g_hi, m):
    """Flat graphs over duplicate-value groups: exhaustive candidates + pruning."""
    maxsz = 0
    for gi in range(g_lo.shape[0]):
        sz = g_hi[gi] - g_lo[gi] + 1
        if sz > maxsz:
            maxsz = sz
    cand = np.empty(maxsz, np.int32)
    keep_ids = np.empty(m + 1, np.int32)
    keep_d = np.empty(m + 1, np.float64)
    ndc = 0
    for gi in range(g_lo.shape[0]):
        lo = g_lo[gi]
        hi = g_hi[gi]
        for u in range(lo, hi + 1):
            nc = 0
            for v in range(lo, hi + 1):
                if v != u:
                    cand[nc] = v
                    nc += 1
            kc, nd2 = prune_candidates(vectors, u, cand, nc, m, keep_ids,
                                       keep_d)
            ndc += nd2
            for j in range(kc):
                nbrs_l[u, j] = keep_ids[j]
            cnts_l[u] = kc
    return ndc


class Context:
    """Reusable per-index scratch: visited epochs, frontier and result heaps."""

    def __init__(self, n: int, m: int):
        self.n = n
        self.visited = np.zeros(n, np.int64)
        self.epoch = 0
        self.cd = np.empty(n + 2, np.float64)
        self.cr = np.empty(n + 2, np.int32)
        self.cs = np.empty(n + 2, np.int32)
        self.sel = np.empty(max(m, 1), np.int32)
        self._beam_cap = 0
        self.rd = np.empty(0, np.float64)
        self.rr = np.empty(0, np.int32)

    def bump(self) -> int:
        self.epoch += 1
        return self.epoch

    def beam(self, cap: int):
        if cap > self._beam_cap:
            self._beam_cap = cap
            self.rd = np.empty(cap + 1, np.float64)
            self.rr = np.empty(cap + 1, np.int32)
        return self.rd, self.rr


def make_context(n: int, m: int) -> Context:
    return Context(n, m)
