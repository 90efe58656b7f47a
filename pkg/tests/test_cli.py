"""End-to-end command-line pipeline: build, workload, gt, search, bench."""

import contextlib
import io
import json
import subprocess
import sys
from types import SimpleNamespace

import numpy as np
import pytest

import rangeann as ra
from rangeann.cli import main as cli_main


def run_cli(*args):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        rc = cli_main([str(a) for a in args])
    return rc, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    """A small on-disk corpus pushed through build, gen-workload, and gt."""
    root = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(17)
    n, d = 1200, 6
    vectors = rng.standard_normal((n, d)).astype(np.float32)
    attrs = np.column_stack([rng.random(n), rng.random(n)])
    queries = rng.standard_normal((40, d)).astype(np.float32)
    paths = SimpleNamespace(
        root=root,
        vectors=root / "vectors.npy", attrs=root / "attrs.npy",
        queries=root / "queries.npy", index=root / "index.irgx",
        workload=root / "workload.jsonl", gt=root / "gt.ivecs")
    np.save(paths.vectors, vectors)
    np.save(paths.attrs, attrs)
    np.save(paths.queries, queries)

    rc, out, _ = run_cli("build", "--vectors", paths.vectors,
                         "--attrs", paths.attrs, "--m", 6, "--ef", 24,
                         "--seed", 1, "--out", paths.index)
    assert rc == 0
    build_info = json.loads(out)

    rc, out, _ = run_cli("gen-workload", "--vectors", paths.vectors,
                         "--attrs", paths.attrs, "--n-queries", 40,
                         "--fraction", "mixed", "--query-vectors",
                         paths.queries, "--seed", 2, "--k", 10,
                         "--out", paths.workload)
    assert rc == 0

    rc, out, _ = run_cli("gt", "--vectors", paths.vectors,
                         "--attrs", paths.attrs, "--query-vectors",
                         paths.queries, "--workload", paths.workload,
                         "--k", 10, "--out", paths.gt)
    assert rc == 0
    assert json.loads(out)["num_queries"] == 40
    return SimpleNamespace(paths=paths, build_info=build_info)


class TestPipeline:
    def test_build_reports_its_parameters_and_costs(self, corpus):
        info = corpus.build_info
        assert (info["n"], info["m"], info["ef"]) == (1200, 6, 24)
        assert len(info["build"]["layers"]) == info["num_layers"]
        assert info["build"]["total_dist_comps"] > 0

    def test_artifacts_load_with_library_calls(self, corpus):
        p = corpus.paths
        index = ra.load_index(p.index)
        assert (index.n, index.m, index.ef, index.seed) == (1200, 6, 24, 1)
        wl = ra.load_workload(p.workload, np.load(p.queries))
        assert len(wl) == 40
        gt = ra.read_ivecs(p.gt)
        assert len(gt) == 40

    def test_every_strategy_searches_the_workload(self, corpus, tmp_path):
        p = corpus.paths
        for strategy in ("irange", "pre", "post", "in", "basic"):
            out_path = tmp_path / f"{strategy}.jsonl"
            rc, out, _ = run_cli(
                "search", "--index", p.index, "--query-vectors", p.queries,
                "--workload", p.workload, "--strategy", strategy,
                "--beam", 32, "--k", 10, "--out", out_path)
            assert rc == 0, strategy
            records = [json.loads(line)
                       for line in out_path.read_text().splitlines()]
            assert len(records) == 40
            assert all(len(r["ids"]) == len(r["distances"])
                       for r in records)
            summary = json.loads(out)
            assert summary["strategy"] == strategy
            assert summary["num_queries"] == 40

    def test_search_recall_against_the_gt_file(self, corpus, tmp_path):
        p = corpus.paths
        out_path = tmp_path / "irange.jsonl"
        rc, _, _ = run_cli(
            "search", "--index", p.index, "--query-vectors", p.queries,
            "--workload", p.workload, "--strategy", "irange",
            "--beam", 256, "--k", 10, "--out", out_path)
        assert rc == 0
        gt = ra.read_ivecs(p.gt)
        records = [json.loads(line)
                   for line in out_path.read_text().splitlines()]
        recalls = []
        for rec, g in zip(records, gt):
            if g.size == 0:
                continue
            hit = np.intersect1d(np.array(rec["ids"]), g[:10]).size
            recalls.append(hit / min(10, g.size))
        assert np.mean(recalls) >= 0.9

    def test_stdout_mode_interleaves_records_and_summary(self, corpus):
        p = corpus.paths
        rc, out, err = run_cli(
            "search", "--index", p.index, "--query-vectors", p.queries,
            "--workload", p.workload, "--strategy", "irange", "--beam", 16)
        assert rc == 0
        lines = out.splitlines()
        assert len(lines) == 40
        assert all("ids" in json.loads(line) for line in lines)
        assert json.loads(err)["num_queries"] == 40

    def test_prefilter_needs_no_index_file(self, corpus):
        p = corpus.paths
        rc, out, _ = run_cli(
            "search", "--vectors", p.vectors, "--attrs", p.attrs,
            "--query-vectors", p.queries, "--workload", p.workload,
            "--strategy", "pre", "--beam", 16, "--k", 10)
        assert rc == 0
        assert json.loads(out.splitlines()[0])["ids"]

    def test_graph_strategy_without_index_is_an_error(self, corpus):
        p = corpus.paths
        rc, _, err = run_cli(
            "search", "--vectors", p.vectors, "--attrs", p.attrs,
            "--query-vectors", p.queries, "--workload", p.workload,
            "--strategy", "irange", "--beam", 16)
        assert rc == 2
        assert err.startswith("error:")


class TestBench:
    def test_csv_has_one_row_per_beam(self, corpus, tmp_path):
        p = corpus.paths
        out_csv = tmp_path / "bench.csv"
        rc, out, _ = run_cli(
            "bench", "--index", p.index, "--query-vectors", p.queries,
            "--workload", p.workload, "--gt", p.gt,
            "--beams", "16,64,256", "--out", out_csv)
        assert rc == 0
        assert json.loads(out)["rows"] == 3
        rows = ra.read_metrics_csv(out_csv)
        assert [r.beam for r in rows] == [16, 64, 256]
        assert all(r.strategy == "irange" for r in rows)
        assert rows[-1].recall >= 0.9
        header = out_csv.read_text().splitlines()[0]
        assert header == "strategy,beam,recall,qps,dist_comps,edge_scans"

    def test_prefilter_bench_is_exact_at_any_beam(self, corpus, tmp_path):
        p = corpus.paths
        out_csv = tmp_path / "pre.csv"
        rc, _, _ = run_cli(
            "bench", "--index", p.index, "--query-vectors", p.queries,
            "--workload", p.workload, "--gt", p.gt, "--strategy", "pre",
            "--beams", "16", "--out", out_csv)
        assert rc == 0
        assert ra.read_metrics_csv(out_csv)[0].recall == 1.0

    def test_reruns_agree_except_for_throughput(self, corpus, tmp_path):
        p = corpus.paths
        a_csv, b_csv = tmp_path / "a.csv", tmp_path / "b.csv"
        for path in (a_csv, b_csv):
            rc, _, _ = run_cli(
                "bench", "--index", p.index, "--query-vectors", p.queries,
                "--workload", p.workload, "--gt", p.gt,
                "--beams", "16,64", "--seed", 5, "--out", path)
            assert rc == 0
        for x, y in zip(ra.read_metrics_csv(a_csv),
                        ra.read_metrics_csv(b_csv)):
            assert (x.strategy, x.beam, x.recall, x.dist_comps,
                    x.edge_scans) == (y.strategy, y.beam, y.recall,
                                      y.dist_comps, y.edge_scans)


class TestOracleCompare:
    def test_emits_both_curves(self, corpus, tmp_path):
        p = corpus.paths
        wl_path = tmp_path / "narrow.jsonl"
        gt_path = tmp_path / "narrow.ivecs"
        rc, _, _ = run_cli(
            "gen-workload", "--vectors", p.vectors, "--attrs", p.attrs,
            "--n-queries", 12, "--fraction", "2", "--query-vectors",
            p.queries, "--seed", 3, "--k", 5, "--out", wl_path)
        assert rc == 0
        rc, _, _ = run_cli(
            "gt", "--vectors", p.vectors, "--attrs", p.attrs,
            "--query-vectors", p.queries, "--workload", wl_path,
            "--k", 5, "--out", gt_path)
        assert rc == 0
        out_csv = tmp_path / "oracle.csv"
        rc, out, _ = run_cli(
            "oracle-compare", "--vectors", p.vectors, "--attrs", p.attrs,
            "--query-vectors", p.queries, "--workload", wl_path,
            "--gt", gt_path, "--m", 6, "--ef", 24, "--beams", "8,32",
            "--k", 5, "--out", out_csv)
        assert rc == 0
        info = json.loads(out)
        assert 1 <= info["num_ranges"] <= 12
        assert info["rebuild_time_s"] > 0
        rows = ra.read_metrics_csv(out_csv)
        assert [r.strategy for r in rows] == \
            ["irange", "irange", "oracle", "oracle"]


class TestConfigFile:
    def test_config_supplies_defaults_and_flags_override(
            self, corpus, tmp_path):
        p = corpus.paths
        conf = tmp_path / "build.json"
        conf.write_text(json.dumps({"m": 5, "ef": 20}))
        out_a = tmp_path / "a.irgx"
        rc, _, _ = run_cli("build", "--config", conf,
                           "--vectors", p.vectors, "--attrs", p.attrs,
                           "--out", out_a)
        assert rc == 0
        assert ra.load_index(out_a).m == 5
        out_b = tmp_path / "b.irgx"
        rc, _, _ = run_cli("build", "--config", conf, "--m", 7,
                           "--vectors", p.vectors, "--attrs", p.attrs,
                           "--out", out_b)
        assert rc == 0
        assert ra.load_index(out_b).m == 7

    def test_unknown_config_key_is_an_error(self, corpus, tmp_path):
        p = corpus.paths
        conf = tmp_path / "bad.json"
        conf.write_text(json.dumps({"beam_width": 9}))
        rc, _, err = run_cli("build", "--config", conf,
                             "--vectors", p.vectors, "--attrs", p.attrs,
                             "--m", 4, "--ef", 8,
                             "--out", tmp_path / "x.irgx")
        assert rc == 2
        assert "beam_width" in err


class TestBadInput:
    def test_argparse_rejections_exit_2(self, corpus):
        p = corpus.paths
        for argv in (["frobnicate"],
                     ["build", "--vectors", str(p.vectors)],
                     ["search", "--index", str(p.index), "--query-vectors",
                      str(p.queries), "--workload", str(p.workload),
                      "--strategy", "exact", "--beam", "8"]):
            with pytest.raises(SystemExit) as exc_info:
                run_cli(*argv)
            assert exc_info.value.code == 2

    def test_graceful_errors_exit_2(self, corpus, tmp_path):
        p = corpus.paths
        rc, _, err = run_cli("bench", "--index", tmp_path / "missing.irgx",
                             "--query-vectors", p.queries,
                             "--workload", p.workload, "--gt", p.gt,
                             "--beams", "8", "--out", tmp_path / "x.csv")
        assert rc == 2 and err.startswith("error:")
        bad_wl = tmp_path / "bad.jsonl"
        bad_wl.write_text("not json\n")
        rc, _, err = run_cli("search", "--index", p.index,
                             "--query-vectors", p.queries,
                             "--workload", bad_wl, "--strategy", "irange",
                             "--beam", 8)
        assert rc == 2 and err.startswith("error:")

    def test_mismatched_vector_and_attr_counts(self, corpus, tmp_path):
        p = corpus.paths
        short = tmp_path / "short.npy"
        np.save(short, np.random.default_rng(0).random(10))
        rc, _, err = run_cli("build", "--vectors", p.vectors,
                             "--attrs", short, "--m", 4, "--ef", 8,
                             "--out", tmp_path / "x.irgx")
        assert rc == 2 and err.startswith("error:")


class TestEntryPoint:
    def test_module_invocation_prints_usage(self):
        proc = subprocess.run(
            [sys.executable, "-m", "rangeann.cli", "--help"],
            capture_output=True, text=True, timeout=120)
        assert proc.returncode == 0
        assert "build" in proc.stdout and "oracle-compare" in proc.stdout
