import json

import numpy as np
import pytest

from offload_aco import callgraph as cg
from offload_aco.callgraph import (
    CallEdge,
    CallGraph,
    GraphError,
    GraphFormatError,
    MethodNode,
    ObjectiveVector,
    PathBoundExceeded,
)


def chain(pins):
    """Call chain 0 -> 1 -> ... with method i pinned iff pins[i]."""
    methods = [MethodNode(i, f"m{i}", 1.0 + i, 8, 8, p) for i, p in enumerate(pins)]
    calls = [CallEdge(i, i + 1) for i in range(len(pins) - 1)]
    return CallGraph(methods, calls, 0, len(pins) - 1)


def dfs_count(d, node=None):
    # naive recursive oracle, independent of count_paths / enumerate_paths
    node = node or d.start
    if node == d.end:
        return 1
    return sum(dfs_count(d, e.dst) for e in d.edges if e.src == node)


def dfs_paths(d, node=None, prefix=()):
    node = node or d.start
    prefix = prefix + (node,)
    if node == d.end:
        yield prefix
        return
    for e in d.edges:
        if e.src == node:
            yield from dfs_paths(d, e.dst, prefix)


def test_objective_vector_rules():
    assert ObjectiveVector(1, 2) + ObjectiveVector(3, 4) == ObjectiveVector(4, 6)
    with pytest.raises(ValueError):
        ObjectiveVector(-1, 0)


def test_offloadable_second_method_gives_two_paths():
    d = cg.transform(chain([True, False]))
    assert set(d.nodes) == {"start", "0@L", "1@L", "1@R", "end"}
    paths = cg.enumerate_paths(d)
    assert [p.path_string for p in paths] == ["start-0@L-1@L-end", "start-0@L-1@R-end"]


def test_single_pinned_method_has_one_path():
    g = CallGraph([MethodNode(0, "main", 1.0, pinned_local=True)], [], 0, 0)
    d = cg.transform(g)
    assert d.count_paths() == 1
    assert len(cg.enumerate_paths(d)) == 1


def test_transform_starts_unmeasured_and_zero():
    d = cg.transform(chain([True, False, False]))
    assert all(not e.measured and e.weight == cg.ZERO for e in d.edges)


def test_pinned_methods_have_no_remote_copy():
    d = cg.transform(chain([True, False, True, False]))
    assert "2@R" not in d.nodes and "0@R" not in d.nodes
    assert "1@R" in d.nodes and "3@R" in d.nodes


@pytest.mark.parametrize("k", range(0, 9))
def test_chain_path_count_is_power_of_two(k):
    d = cg.transform(chain([True] + [False] * k))
    assert d.count_paths() == 2**k == dfs_count(d)
    assert len(cg.enumerate_paths(d)) == 2**k


@pytest.mark.parametrize("seed", range(25))
def test_random_graphs_match_dfs_oracle(seed):
    rng = np.random.default_rng(seed)
    g = cg.random_callgraph(rng, int(rng.integers(1, 11)))
    d = cg.transform(g)
    n_free = sum(not m.pinned_local for m in g.methods)
    assert dfs_count(d) == 2**n_free
    got = sorted(p.nodes for p in cg.enumerate_paths(d))
    assert got == sorted(dfs_paths(d))


@pytest.mark.parametrize("seed", range(10))
def test_path_cost_is_edge_sum(seed):
    rng = np.random.default_rng(seed)
    g = cg.random_callgraph(rng, 6)
    d = cg.transform(g)
    weights = {i: cg.DualEdge(e.src, e.dst, ObjectiveVector(*rng.uniform(0, 10, 2)), True)
               for i, e in enumerate(d.edges)}
    d = d.with_edges(weights)
    for p in cg.enumerate_paths(d):
        t = c = 0.0
        for a, b in zip(p.nodes, p.nodes[1:]):
            w = d.edges[d.edge_index(a, b)].weight
            t += w.time_ms
            c += w.cpu_units
        assert p.cost == ObjectiveVector(t, c)


def test_chain_has_one_dual_edge_per_placement_pair():
    g = chain([True, False, False])
    d = cg.transform(g)
    for c in g.calls:
        for p in "LR":
            for q in "LR":
                a, b = f"{c.caller}@{p}", f"{c.callee}@{q}"
                if a in d.nodes and b in d.nodes:
                    assert sum(e.src == a and e.dst == b for e in d.edges) == 1


def test_transform_is_deterministic():
    g = cg.random_callgraph(np.random.default_rng(4), 9)
    assert cg.dual_to_dict(cg.transform(g)) == cg.dual_to_dict(cg.transform(g))


def test_branching_graph_serializes_children():
    methods = [MethodNode(i, f"m{i}", 1.0, pinned_local=(i == 0)) for i in range(4)]
    g = CallGraph(methods, [CallEdge(0, 1), CallEdge(0, 2), CallEdge(2, 3)], 0, 3)
    assert cg.execution_order(g) == [0, 1, 2, 3]
    assert cg.transform(g).count_paths() == 8


def test_path_bound_refusal():
    d = cg.transform(chain([True] + [False] * 6))
    with pytest.raises(PathBoundExceeded):
        cg.enumerate_paths(d, bound=63)


def test_cycle_is_rejected_with_diagnostic():
    methods = [MethodNode(i, f"m{i}", 1.0, pinned_local=(i == 0)) for i in range(4)]
    g = CallGraph(methods, [CallEdge(0, 1), CallEdge(1, 2), CallEdge(2, 1), CallEdge(2, 3)], 0, 3)
    with pytest.raises(GraphError, match="1 -> 2 -> 1|2 -> 1 -> 2"):
        cg.transform(g)


def test_collapse_recursion_merges_component():
    methods = [
        MethodNode(0, "main", 1.0, pinned_local=True),
        MethodNode(1, "fib", 10.0, 16, 8),
        MethodNode(2, "fib_add", 5.0, 8, 4),
        MethodNode(3, "show", 1.0),
    ]
    g = CallGraph(methods, [CallEdge(0, 1), CallEdge(1, 2), CallEdge(2, 1), CallEdge(1, 3)], 0, 3)
    c = cg.collapse_recursion(g)
    assert len(c.methods) == 3
    merged = c.method(1)
    assert merged.work_units == 15.0
    assert cg.find_cycle(c) is None
    assert cg.transform(c).count_paths() == 4


def test_collapse_keeps_pinning():
    methods = [MethodNode(0, "main", 1.0, pinned_local=True), MethodNode(1, "a", 1.0, pinned_local=True),
               MethodNode(2, "b", 1.0)]
    g = CallGraph(methods, [CallEdge(0, 1), CallEdge(1, 2), CallEdge(2, 1)], 0, 1)
    assert cg.collapse_recursion(g).method(1).pinned_local


def test_entry_must_be_pinned():
    with pytest.raises(GraphError, match="pinned"):
        CallGraph([MethodNode(0, "main", 1.0)], [], 0, 0)


def test_duplicate_ids_rejected():
    with pytest.raises(GraphError, match="duplicate method id 1"):
        CallGraph([MethodNode(0, "a", pinned_local=True), MethodNode(1, "b"), MethodNode(1, "c")], [], 0, 1)


def test_save_load_round_trip(tmp_path):
    g = cg.random_callgraph(np.random.default_rng(7), 8)
    path = tmp_path / "g.json"
    cg.save(g, path)
    assert cg.load(path) == g


def test_dual_round_trip(tmp_path, four_paths_path):
    d = cg.load_dual(four_paths_path)
    path = tmp_path / "d.json"
    cg.save_dual(d, path)
    assert cg.load_dual(path) == d


def test_unknown_callee_named(tmp_path):
    data = {"methods": [{"id": 0, "name": "main", "work": 1, "bytes_in": 0, "bytes_out": 0, "pinned": True}],
            "calls": [[0, 99]], "entry": 0, "exit": 0}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    with pytest.raises(GraphFormatError, match="unknown callee 99"):
        cg.load(path)


def test_unknown_field_rejected():
    data = {"methods": [{"id": 0, "name": "main", "work": 1, "bytes_in": 0, "bytes_out": 0, "pinned": True,
                         "color": "red"}], "calls": [], "entry": 0, "exit": 0}
    with pytest.raises(GraphFormatError, match="color"):
        cg.graph_from_dict(data)


def test_fib_fixture(fib_path):
    g = cg.load(fib_path)
    assert len(g.methods) == 2
    assert g.method(g.entry).pinned_local


def test_four_path_fixture(four_paths_path):
    paths = cg.enumerate_paths(cg.load_dual(four_paths_path))
    assert sorted(p.cost.as_tuple() for p in paths) == [(4, 5), (5, 5), (6, 4), (6, 6)]
