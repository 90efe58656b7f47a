"""Small dataset and workload factories shared across test modules."""

from __future__ import annotations

import numpy as np

import rangeann as ra


def make_dataset(n, d, num_attrs=1, seed=0, duplicates=False):
    """Uniform random vectors with one or more attribute columns.

    With duplicates=True the first attribute takes integer values so runs of
    equal values (groups) appear.
    """
    rng = np.random.default_rng(seed)
    vecs = rng.random((n, d), dtype=np.float32)
    cols = []
    if duplicates:
        cols.append(rng.integers(0, max(n // 4, 2), n).astype(np.float64))
    else:
        cols.append(rng.random(n))
    for _ in range(num_attrs - 1):
        cols.append(rng.random(n))
    return ra.load_dataset(vecs, np.column_stack(cols))


def make_query_vectors(nq, d, seed=0):
    rng = np.random.default_rng(seed)
    return rng.random((nq, d), dtype=np.float32)


def oracle_mode_index(ds, seed=0, reverse_edges=True):
    """Build with m = ef = n: no candidate truncation and no degree cap."""
    return ra.build_index(ds, m=ds.n, ef=ds.n, seed=seed,
                          reverse_edges=reverse_edges)


def random_rank_range(rng, n):
    a = int(rng.integers(0, n))
    b = int(rng.integers(0, n))
    return (a, b) if a <= b else (b, a)
