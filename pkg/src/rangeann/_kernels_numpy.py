"""Pure numpy/Python fallback for the JIT kernels in _kernels_numba.

Same call surface and the same semantics (iteration order, lexicographic
(distance, rank) tie-breaking, PRNG draw order), with heapq frontiers and
vectorized distance math instead of compiled loops. Selected when numba is
unavailable or RANGEANN_DISABLE_NUMBA is set; expect roughly an order of
magnitude less throughput.
"""

from __future__ import annotations

import heapq

import numpy as np

BACKEND = "numpy"

S_DIST = 0
S_SCAN = 1
S_LAYER = 2
S_HOP = 3
S_OOR = 4


def sqdist(a, b):
    diff = np.asarray(a, np.float64) - np.asarray(b, np.float64)
    return float(np.dot(diff, diff))


def _dists_to(vectors, ids, q):
    diff = vectors[ids].astype(np.float64) - np.asarray(q, np.float64)
    return np.einsum("ij,ij->i", diff, diff)


def prune_candidates(vectors, u, cand, ncand, cap, keep_ids, keep_d):
    if ncand == 0:
        return 0, 0
    ids = np.sort(np.asarray(cand[:ncand]))
    d = _dists_to(vectors, ids, vectors[u])
    ndc = int(ncand)
    order = np.argsort(d, kind="mergesort")
    kc = 0
    for oi in order:
        if kc >= cap:
            break
        c = int(ids[oi])
        dc = float(d[oi])
        closer = np.flatnonzero(keep_d[:kc] < dc)
        ok = True
        if closer.size:
            # count distance computations as if checking one retained
            # neighbor at a time and stopping at the first occluder
            docc = _dists_to(vectors, np.asarray(keep_ids)[closer], vectors[c])
            hits = np.flatnonzero(docc < dc)
            if hits.size:
                ndc += int(hits[0]) + 1
                ok = False
            else:
                ndc += int(closer.size)
        if ok:
            keep_ids[kc] = c
            keep_d[kc] = dc
            kc += 1
    return kc, ndc


def _fill_sorted(items, kmax, out_d, out_r):
    # items: list of (dist, rank); keep the kmax smallest, ascending
    items.sort()
    keep = min(len(items), kmax)
    for i in range(keep):
        out_d[i] = items[i][0]
        out_r[i] = items[i][1]
    return keep


def search_layer(vectors, nbrs_l, cnts_l, entry, q, beamw, mode, L, R, kcap,
                 visited, epoch, cd, cr, cs, rd, rr, kd, kr, stats,
                 out_d, out_r):
    qf = np.asarray(q, np.float64)
    visited[entry] = epoch
    d0 = sqdist(qf, vectors[entry])
    stats[S_DIST] += 1
    frontier = [(d0, entry)]
    beam = [(-d0, -entry)]  # max-heap of (dist, rank) via negation
    collect = []
    if mode == 1 and L <= entry <= R:
        collect.append((d0, entry))
    while frontier:
        du, u = frontier[0]
        if len(beam) == beamw and (-beam[0][0], -beam[0][1]) < (du, u):
            break
        heapq.heappop(frontier)
        stats[S_HOP] += 1
        c = int(cnts_l[u])
        stats[S_SCAN] += c
        row = nbrs_l[u, :c]
        for v in row:
            v = int(v)
            if mode == 2 and (v < L or v > R):
                continue
            if visited[v] == epoch:
                continue
            visited[v] = epoch
            dv = sqdist(qf, vectors[v])
            stats[S_DIST] += 1
            if len(beam) < beamw or (dv, v) < (-beam[0][0], -beam[0][1]):
                heapq.heappush(beam, (-dv, -v))
                if len(beam) > beamw:
                    heapq.heappop(beam)
                heapq.heappush(frontier, (dv, v))
            if mode == 1 and L <= v <= R:
                collect.append((dv, v))
    if mode == 1:
        return _fill_sorted(collect, kcap, out_d, out_r)
    return _fill_sorted([(-d, -r) for d, r in beam], beamw, out_d, out_r)


def select_edges(nbrs, cnts, group_of, group_starts, u, L, R, m, use_skip,
                 out, stats):
    G = group_starts.shape[0] - 1
    gl, gr = 0, G - 1
    gu = int(group_of[u])
    lay = 0
    count = 0
    seen = set()
    while True:
        if use_skip and count >= m:
            break
        lo = int(group_starts[gl])
        hi = int(group_starts[gr + 1] - 1)
        is_leaf = gl == gr
        cgl, cgr = gl, gr
        if not is_leaf:
            gmid = (gl + gr) >> 1
            if gu <= gmid:
                cgr = gmid
            else:
                cgl = gmid + 1
            clo = int(group_starts[cgl])
            chi = int(group_starts[cgr + 1] - 1)
            if use_skip and max(clo, L) == max(lo, L) and min(chi, R) == min(hi, R):
                gl, gr = cgl, cgr
                lay += 1
                continue
        c = int(cnts[lay, u])
        stats[S_SCAN] += c
        stats[S_LAYER] += 1
        for j in range(c):
            v = int(nbrs[lay, u, j])
            if v < L or v > R or v in seen:
                continue
            if count < m:
                seen.add(v)
                out[count] = v
                count += 1
        if lo >= L and hi <= R:
            break
        if is_leaf:
            break
        gl, gr = cgl, cgr
        lay += 1
    return count


def search_dedicated(vectors, nbrs, cnts, group_of, group_starts, q, L, R,
                     beam, k, attrs, sec_lo, sec_hi, policy, seed, use_skip,
                     visited, epoch, cd, cr, cs, rd, rr, selbuf, stats,
                     out_d, out_r):
    nsec = len(sec_lo)
    rng = np.random.RandomState(seed) if (policy == 2 and nsec > 0) else None

    def in_range(v):
        for j in range(nsec):
            a = attrs[v, j + 1]
            if a < sec_lo[j] or a > sec_hi[j]:
                return False
        return True

    m = nbrs.shape[2]
    qf = np.asarray(q, np.float64)
    entry = (L + R) >> 1
    visited[entry] = epoch
    d0 = sqdist(qf, vectors[entry])
    stats[S_DIST] += 1
    e_inr = in_range(entry)
    if not e_inr:
        stats[S_OOR] += 1
    frontier = [(d0, entry, 0 if e_inr else 1)]
    res = []
    if e_inr:
        res.append((-d0, -entry))
    while frontier:
        du, u, tu = frontier[0]
        if len(res) == beam and (-res[0][0], -res[0][1]) < (du, u):
            break
        heapq.heappop(frontier)
        stats[S_HOP] += 1
        nsel = select_edges(nbrs, cnts, group_of, group_starts, u, L, R, m,
                            use_skip, selbuf, stats)
        for jj in range(nsel):
            v = int(selbuf[jj])
            if visited[v] == epoch:
                continue
            v_inr = in_range(v)
            if not v_inr:
                if policy == 0:
                    continue
                if policy == 2 and rng.random_sample() >= np.exp(-float(tu)):
                    continue
            visited[v] = epoch
            dv = sqdist(qf, vectors[v])
            stats[S_DIST] += 1
            if not v_inr:
                stats[S_OOR] += 1
            admit = len(res) < beam or (dv, v) < (-res[0][0], -res[0][1])
            if v_inr and admit:
                heapq.heappush(res, (-dv, -v))
                if len(res) > beam:
                    heapq.heappop(res)
            if admit:
                heapq.heappush(frontier, (dv, v, 0 if v_inr else tu + 1))
    return _fill_sorted([(-d, -r) for d, r in res], k, out_d, out_r)


def brute_topk(vectors, attrs, q, L, R, k, sec_lo, sec_hi, hd, hr,
               out_d, out_r):
    nsec = len(sec_lo)
    ids = np.arange(L, R + 1)
    if nsec:
        mask = np.ones(ids.size, bool)
        for j in range(nsec):
            a = attrs[L:R + 1, j + 1]
            mask &= (a >= sec_lo[j]) & (a <= sec_hi[j])
        ids = ids[mask]
    if ids.size == 0:
        return 0, 0
    d = _dists_to(vectors, ids, q)
    order = np.lexsort((ids, d))[:k]
    cnt = order.size
    out_d[:cnt] = d[order]
    out_r[:cnt] = ids[order]
    return cnt, int(ids.size)


def brute_topk_batch(vectors, attrs, queries, Ls, Rs, sec_lo, sec_hi, k,
                     out_ids, out_cnt):
    hd = np.empty(k + 1, np.float64)
    hr = np.empty(k + 1, np.int32)
    od = np.empty(k, np.float64)
    orr = np.empty(k, np.int32)
    total = 0
    for qi in range(queries.shape[0]):
        cnt, ndc = brute_topk(vectors, attrs, queries[qi], int(Ls[qi]),
                              int(Rs[qi]), k, sec_lo[qi], sec_hi[qi],
                              hd, hr, od, orr)
        total += ndc
        out_cnt[qi] = cnt
        out_ids[qi, :cnt] = orr[:cnt]
    return total


def build_internal_nodes(vectors, nbrs_child, cnts_child, nbrs_out, cnts_out,
                         us, sib_lo, sib_hi, m, ef):
    n = vectors.shape[0]
    visited = np.zeros(n, np.int64)
    stats = np.zeros(8, np.int64)
    od = np.empty(ef + 1, np.float64)
    orr = np.empty(ef + 1, np.int32)
    keep_ids = np.empty(m + 1, np.int64)
    keep_d = np.empty(m + 1, np.float64)
    epoch = 0
    ndc = 0
    dummy = np.empty(1, np.float64)
    for t in range(us.shape[0]):
        u = int(us[t])
        cc = int(cnts_child[u])
        cand = list(nbrs_child[u, :cc])
        slo = int(sib_lo[t])
        shi = int(sib_hi[t])
        if shi - slo + 1 <= ef:
            cand.extend(range(slo, shi + 1))
        else:
            epoch += 1
            entry = (slo + shi) >> 1
            got = search_layer(vectors, nbrs_child, cnts_child, entry,
                               vectors[u], ef, 0, 0, n - 1, 0, visited, epoch,
                               dummy, dummy, dummy, dummy, dummy, dummy,
                               dummy, stats, od, orr)
            cand.extend(orr[:got])
        kc, nd2 = prune_candidates(vectors, u, np.asarray(cand, np.int64),
                                   len(cand), m, keep_ids, keep_d)
        ndc += nd2
        nbrs_out[u, :kc] = keep_ids[:kc]
        cnts_out[u] = kc
    return ndc + int(stats[S_DIST])


def reverse_pass_segments(vectors, nbrs_l, cnts_l, seg_lo, seg_hi, m):
    ndc = 0
    keep_ids = np.empty(m + 1, np.int64)
    keep_d = np.empty(m + 1, np.float64)
    for s in range(len(seg_lo)):
        lo = int(seg_lo[s])
        hi = int(seg_hi[s])
        snap = nbrs_l[lo:hi + 1].copy()
        scnt = cnts_l[lo:hi + 1].copy()
        for u in range(lo, hi + 1):
            for j in range(int(scnt[u - lo])):
                v = int(snap[u - lo, j])
                c = int(cnts_l[v])
                if u in nbrs_l[v, :c]:
                    continue
                if c < m:
                    nbrs_l[v, c] = u
                    cnts_l[v] = c + 1
                else:
                    tmp = np.empty(c + 1, np.int64)
                    tmp[:c] = nbrs_l[v, :c]
                    tmp[c] = u
                    kc, nd2 = prune_candidates(vectors, v, tmp, c + 1, m,
                                               keep_ids, keep_d)
                    ndc += nd2
                    nbrs_l[v, :kc] = keep_ids[:kc]
                    nbrs_l[v, kc:m] = -1
                    cnts_l[v] = kc
    return ndc


def build_leaf_groups(vectors, nbrs_l, cnts_l, g_lo, g_hi, m):
    keep_ids = np.empty(m + 1, np.int64)
    keep_d = np.empty(m + 1, np.float64)
    ndc = 0
    for gi in range(len(g_lo)):
        lo = int(g_lo[gi])
        hi = int(g_hi[gi])
        members = np.arange(lo, hi + 1)
        for u in members:
            cand = members[members != u]
            kc, nd2 = prune_candidates(vectors, int(u), cand, cand.size, m,
                                       keep_ids, keep_d)
            ndc += nd2
            nbrs_l[u, :kc] = keep_ids[:kc]
            cnts_l[u] = kc
    return ndc


class Context:
    """Scratch for the numpy backend; only the visited epochs are stateful."""

    def __init__(self, n: int, m: int):
        self.n = n
        self.visited = np.zeros(n, np.int64)
        self.epoch = 0
        self.cd = np.empty(1, np.float64)
        self.cr = np.empty(1, np.int32)
        self.cs = np.empty(1, np.int32)
        self.sel = np.empty(max(m, 1), np.int32)
        self.rd = np.empty(1, np.float64)
        self.rr = np.empty(1, np.int32)

    def bump(self) -> int:
        self.epoch += 1
        return self.epoch

    def beam(self, cap: int):
        return self.rd, self.rr


def make_context(n: int, m: int) -> Context:
    return Context(n, m)
