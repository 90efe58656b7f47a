"""Loading, sorting, grouping, rank mapping, and workload generation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import rangeann as ra
from helpers import make_dataset, make_query_vectors


class TestLoadDataset:
    def test_sorts_by_attribute(self):
        vecs = np.eye(3, dtype=np.float32)
        ds = ra.load_dataset(vecs, [5.0, 1.0, 3.0])
        assert list(ds.original_ids) == [1, 2, 0]
        assert list(ds.attrs[:, 0]) == [1.0, 3.0, 5.0]
        # vectors travel with their objects
        assert np.array_equal(ds.vectors[0], vecs[1])

    def test_duplicate_grouping(self):
        ds = ra.load_dataset(np.zeros((3, 2), np.float32), [2.0, 2.0, 7.0])
        assert list(ds.group_starts) == [0, 2, 3]
        assert ds.num_groups == 2
        assert list(ds.group_of) == [0, 0, 1]

    def test_ties_break_by_original_id(self):
        ds = ra.load_dataset(np.zeros((4, 1), np.float32),
                             [3.0, 1.0, 3.0, 1.0])
        assert list(ds.original_ids) == [1, 3, 0, 2]

    def test_multi_attribute_columns(self):
        attrs = np.array([[1.0, 9.0], [0.5, 8.0]])
        ds = ra.load_dataset(np.zeros((2, 2), np.float32), attrs)
        assert ds.num_attrs == 2
        assert list(ds.attrs[:, 1]) == [8.0, 9.0]

    def test_count_mismatch_rejected(self):
        with pytest.raises(ra.InvalidInputError):
            ra.load_dataset(np.zeros((3, 2), np.float32), [1.0, 2.0])

    def test_non_finite_rejected(self):
        with pytest.raises(ra.InvalidInputError):
            ra.load_dataset(np.array([[np.nan, 0.0]], np.float32), [1.0])
        with pytest.raises(ra.InvalidInputError):
            ra.load_dataset(np.zeros((1, 2), np.float32), [np.inf])

    def test_empty_rejected(self):
        with pytest.raises(ra.InvalidInputError):
            ra.load_dataset(np.zeros((0, 2), np.float32), [])


class TestFileFormats:
    def test_fvecs_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        vecs = rng.standard_normal((7, 5)).astype(np.float32)
        path = tmp_path / "v.fvecs"
        ra.write_fvecs(path, vecs)
        assert np.array_equal(ra.read_fvecs(path), vecs)

    def test_fvecs_inconsistent_dims_rejected(self, tmp_path):
        path = tmp_path / "bad.fvecs"
        np.array([2, 0, 0, 3, 0, 0, 0], np.int32).tofile(path)
        with pytest.raises(ra.InvalidInputError):
            ra.read_fvecs(path)

    def test_ivecs_round_trip_ragged(self, tmp_path):
        rows = [np.array([3, 1, 4], np.int32), np.array([], np.int32),
                np.array([9], np.int32)]
        path = tmp_path / "g.ivecs"
        ra.write_ivecs(path, rows)
        back = ra.read_ivecs(path)
        assert len(back) == 3
        for a, b in zip(rows, back):
            assert np.array_equal(a, b)

    def test_csv_and_tsv_attributes(self, tmp_path):
        csv = tmp_path / "a.csv"
        csv.write_text("1.5,2.5\n3.5,4.5\n")
        arr = ra.read_attributes(csv)
        assert arr.shape == (2, 2) and arr[1, 0] == 3.5
        tsv = tmp_path / "a.tsv"
        tsv.write_text("x\ty\n1.0\t2.0\n")
        arr = ra.read_attributes(tsv, header=True)
        assert arr.shape == (1, 2) and arr[0, 1] == 2.0


class TestMapRange:
    def test_interior_endpoints(self):
        ds = ra.load_dataset(np.zeros((4, 1), np.float32),
                             [1.0, 3.0, 5.0, 7.0])
        rr = ra.map_range(ds, 2.0, 6.0)
        assert rr.as_tuple() == (1, 2)

    def test_out_of_domain_is_empty(self):
        ds = ra.load_dataset(np.zeros((4, 1), np.float32),
                             [1.0, 3.0, 5.0, 7.0])
        assert ra.map_range(ds, 8.0, 9.0) is None

    def test_duplicate_group_kept_whole(self):
        ds = ra.load_dataset(np.zeros((3, 1), np.float32), [2.0, 2.0, 7.0])
        rr = ra.map_range(ds, 2.0, 2.0)
        assert rr.as_tuple() == (0, 1)

    def test_exact_endpoints_inclusive(self):
        ds = ra.load_dataset(np.zeros((4, 1), np.float32),
                             [1.0, 3.0, 5.0, 7.0])
        assert ra.map_range(ds, 1.0, 7.0).as_tuple() == (0, 3)

    def test_non_finite_endpoint_rejected(self):
        ds = ra.load_dataset(np.zeros((2, 1), np.float32), [0.0, 1.0])
        with pytest.raises(ra.InvalidInputError):
            ra.map_range(ds, np.nan, 1.0)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(-20, 20), min_size=1, max_size=25),
           st.integers(-25, 25), st.integers(0, 12))
    def test_matches_linear_scan(self, values, lo, width):
        """Binary-search mapping agrees with a direct scan of the closed
        interval, including duplicates and empty outcomes."""
        hi = lo + width
        ds = ra.load_dataset(np.zeros((len(values), 1), np.float32),
                             np.asarray(values, np.float64))
        col = ds.attrs[:, 0]
        inside = np.flatnonzero((col >= lo) & (col <= hi))
        rr = ra.map_range(ds, float(lo), float(hi))
        if inside.size == 0:
            assert rr is None
        else:
            assert rr.as_tuple() == (int(inside[0]), int(inside[-1]))
            assert rr.length == inside.size


class TestGenWorkload:
    def test_fixed_exponent_lengths(self):
        ds = make_dataset(16, 2, seed=0)
        qv = make_query_vectors(8, 2, seed=1)
        wl = ra.gen_workload(ds, 8, "2", qv, seed=2)
        for q in wl.queries:
            rr = ra.map_range(ds, q.ranges[0][0], q.ranges[0][1])
            assert rr.length == 4

    def test_exponent_zero_is_full_range(self):
        ds = make_dataset(64, 2, seed=0)
        qv = make_query_vectors(4, 2, seed=1)
        wl = ra.gen_workload(ds, 4, 0, qv, seed=2)
        for q in wl.queries:
            assert ra.map_range(ds, *q.ranges[0]).as_tuple() == (0, 63)

    def test_mixed_splits_evenly(self):
        ds = make_dataset(1024, 2, seed=0)
        qv = make_query_vectors(1000, 2, seed=1)
        wl = ra.gen_workload(ds, 1000, "mixed", qv, seed=2)
        counts = np.bincount(wl.exponents, minlength=10)
        assert list(counts) == [100] * 10

    def test_mixed_remainder_goes_to_lowest_exponents(self):
        ds = make_dataset(1024, 2, seed=0)
        qv = make_query_vectors(23, 2, seed=1)
        wl = ra.gen_workload(ds, 23, "mixed", qv, seed=2)
        counts = np.bincount(wl.exponents, minlength=10)
        assert list(counts) == [3, 3, 3, 2, 2, 2, 2, 2, 2, 2]

    def test_round_trip_exact(self):
        """Mapping a generated raw range reproduces its rank range even with
        duplicate attribute values."""
        ds = make_dataset(300, 3, seed=5, duplicates=True)
        qv = make_query_vectors(40, 3, seed=6)
        wl = ra.gen_workload(ds, 40, "3", qv, seed=7)
        for q in wl.queries:
            rr = ra.map_range(ds, *q.ranges[0])
            assert rr is not None
            L, R = rr.as_tuple()
            # endpoints sit on group boundaries and cover >= the asked length
            assert ds.align_to_groups(L, R) == (L, R)
            assert rr.length >= 300 >> 3

    def test_deterministic_regeneration(self):
        ds = make_dataset(1024, 2, seed=0)
        qv = make_query_vectors(20, 2, seed=1)
        a = ra.gen_workload(ds, 20, "mixed", qv, seed=9)
        b = ra.gen_workload(ds, 20, "mixed", qv, seed=9)
        assert [q.ranges for q in a.queries] == [q.ranges for q in b.queries]
        c = ra.gen_workload(ds, 20, "mixed", qv, seed=10)
        assert [q.ranges for q in a.queries] != [q.ranges for q in c.queries]

    def test_monotone_transform_leaves_rank_ranges_unchanged(self):
        rng = np.random.default_rng(3)
        vecs = rng.random((1024, 2), dtype=np.float32)
        attrs = rng.random(1024)
        ds1 = ra.load_dataset(vecs, attrs)
        ds2 = ra.load_dataset(vecs, np.exp(3.0 * attrs))
        qv = make_query_vectors(30, 2, seed=4)
        wl1 = ra.gen_workload(ds1, 30, "mixed", qv, seed=5)
        wl2 = ra.gen_workload(ds2, 30, "mixed", qv, seed=5)
        for q1, q2 in zip(wl1.queries, wl2.queries):
            r1 = ra.map_range(ds1, *q1.ranges[0])
            r2 = ra.map_range(ds2, *q2.ranges[0])
            assert r1.as_tuple() == r2.as_tuple()

    def test_secondary_fraction_ranges(self):
        ds = make_dataset(256, 2, num_attrs=3, seed=0)
        qv = make_query_vectors(10, 2, seed=1)
        wl = ra.gen_workload(ds, 10, "1", qv, seed=2,
                             secondary_fractions=[2, 3])
        for q in wl.queries:
            assert len(q.ranges) == 3
            for j, exp in ((1, 2), (2, 3)):
                lo, hi = q.ranges[j]
                inside = np.count_nonzero(
                    (ds.attrs[:, j] >= lo) & (ds.attrs[:, j] <= hi))
                assert inside >= 256 >> exp

    def test_too_small_dataset_rejected(self):
        ds = make_dataset(100, 2, seed=0)
        qv = make_query_vectors(10, 2, seed=1)
        with pytest.raises(ra.InvalidInputError):
            ra.gen_workload(ds, 10, "mixed", qv, seed=2)  # 100 >> 9 == 0

    def test_more_queries_than_vectors_rejected(self):
        ds = make_dataset(64, 2, seed=0)
        qv = make_query_vectors(3, 2, seed=1)
        with pytest.raises(ra.InvalidInputError):
            ra.gen_workload(ds, 4, "1", qv, seed=2)


class TestWorkloadFile:
    def test_jsonl_round_trip(self, tmp_path):
        ds = make_dataset(1024, 4, num_attrs=2, seed=0)
        qv = make_query_vectors(15, 4, seed=1)
        wl = ra.gen_workload(ds, 15, "mixed", qv, seed=2, k=7,
                             secondary_fractions=[1])
        path = tmp_path / "wl.jsonl"
        ra.save_workload(path, wl)
        back = ra.load_workload(path, qv)
        assert len(back) == len(wl)
        for a, b in zip(wl.queries, back.queries):
            assert a.index == b.index and a.k == b.k
            assert a.ranges == b.ranges
            assert np.array_equal(a.vector, b.vector)

    def test_bad_line_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"query_index": 0, "ranges": [[0, 1]], "k": 5}\n'
                        '{"query_index": "oops"}\n')
        with pytest.raises(ra.InvalidInputError):
            ra.load_workload(path, make_query_vectors(2, 3, seed=0))

    def test_out_of_bounds_query_index_rejected(self, tmp_path):
        path = tmp_path / "oob.jsonl"
        path.write_text('{"query_index": 5, "ranges": [[0, 1]], "k": 5}\n')
        with pytest.raises(ra.InvalidInputError):
            ra.load_workload(path, make_query_vectors(2, 3, seed=0))
