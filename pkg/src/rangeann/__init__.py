"""Range-filtered approximate nearest neighbor search.

A segment tree over the attribute-sorted dataset holds one pruned proximity
graph per tree node; queries assemble a per-range graph on the fly and run
beam search on it. Baseline strategies (pre/post/in-filtering and canonical
cover search), a workload/groundtruth/benchmark harness, and binary index
persistence round out the package.
"""

from .backend import backend_name, set_threads
from .baselines import (STRATEGIES, basic_search, infilter_search,
                        postfilter_search, prefilter_search, run_strategy)
from .builder import (BuildCounters, Segment, SegmentTree, SegmentTreeIndex,
                      build_index, build_segment_graph, rng_prune)
from .core import (CorruptIndexError, InvalidConfigWarning, InvalidInputError,
                   distance, reported_distance)
from .dataset import (Query, RankRange, SortedDataset, Workload, gen_workload,
                      load_dataset, load_workload, map_range, read_attributes,
                      read_fvecs, read_ivecs, save_workload, write_fvecs,
                      write_ivecs)
from .evaluation import (Metrics, evaluate_queries, first_at_recall,
                         groundtruth, oracle_rebuild_compare,
                         per_query_recall, reachable_fraction, recall,
                         read_metrics_csv, sweep, write_metrics_csv)
from .persist import load_index, save_index
from .search import (OOR_POLICIES, SearchParams, SearchResult, SearchStats,
                     beam_search, multi_attr_search, query_seed, select_edges,
                     visit_probability)

__version__ = "0.1.0"

__all__ = [
    "BuildCounters", "CorruptIndexError", "InvalidConfigWarning",
    "InvalidInputError", "Metrics", "OOR_POLICIES", "Query", "RankRange",
    "STRATEGIES", "SearchParams", "SearchResult", "SearchStats", "Segment",
    "SegmentTree", "SegmentTreeIndex", "SortedDataset", "Workload",
    "backend_name", "basic_search", "beam_search", "build_index",
    "build_segment_graph", "distance", "evaluate_queries", "first_at_recall",
    "gen_workload", "groundtruth", "infilter_search", "load_dataset",
    "load_index", "load_workload", "map_range", "multi_attr_search",
    "oracle_rebuild_compare", "per_query_recall", "postfilter_search",
    "prefilter_search", "query_seed", "reachable_fraction", "read_attributes",
    "read_fvecs", "read_ivecs", "read_metrics_csv", "recall", "reported_distance", "rng_prune",
    "run_strategy", "save_index", "save_workload", "select_edges",
    "set_threads", "sweep", "visit_probability", "write_fvecs", "write_ivecs",
    "write_metrics_csv",
]
