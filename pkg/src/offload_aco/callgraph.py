"""Method-level call graphs and their dual-placement decision graphs.

A :class:`CallGraph` describes an application as methods plus call edges.
:func:`transform` duplicates every offloadable method into a local and a
remote copy so that choosing a start-to-end path chooses a placement for
each executed method.
"""

from __future__ import annotations

import enum
import heapq
import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

DEFAULT_PATH_BOUND = 2**20

START = "start"
END = "end"


class GraphError(ValueError):
    """Invalid call graph or decision graph."""


class GraphFormatError(GraphError):
    """Malformed graph file."""


class PathBoundExceeded(GraphError):
    """Too many start-to-end paths to enumerate exhaustively."""


@dataclass(frozen=True)
class ObjectiveVector:
    time_ms: float = 0.0
    cpu_units: float = 0.0

    def __post_init__(self):
        if not (self.time_ms >= 0 and self.cpu_units >= 0):
            raise ValueError(f"negative objective component: {self}")

    def __add__(self, other: ObjectiveVector) -> ObjectiveVector:
        return ObjectiveVector(self.time_ms + other.time_ms, self.cpu_units + other.cpu_units)

    def as_tuple(self) -> tuple[float, float]:
        return (self.time_ms, self.cpu_units)


ZERO = ObjectiveVector(0.0, 0.0)


class Placement(enum.Enum):
    LOCAL = "L"
    REMOTE = "R"


@dataclass(frozen=True)
class MethodNode:
    id: int
    name: str
    work_units: float = 0.0
    bytes_in: int = 0
    bytes_out: int = 0
    pinned_local: bool = False

    def __post_init__(self):
        if self.work_units < 0:
            raise GraphError(f"method {self.id}: work_units must be >= 0")
        if self.bytes_in < 0 or self.bytes_out < 0:
            raise GraphError(f"method {self.id}: byte counts must be >= 0")


@dataclass(frozen=True)
class CallEdge:
    caller: int
    callee: int


@dataclass(frozen=True)
class CallGraph:
    methods: tuple[MethodNode, ...]
    calls: tuple[CallEdge, ...]
    entry: int
    exit: int

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "calls", tuple(self.calls))
        ids = set()
        for m in self.methods:
            if m.id in ids:
                raise GraphError(f"duplicate method id {m.id}")
            ids.add(m.id)
        for c in self.calls:
            if c.caller not in ids:
                raise GraphError(f"unknown caller {c.caller}")
            if c.callee not in ids:
                raise GraphError(f"unknown callee {c.callee}")
            if c.caller == c.callee:
                raise GraphError(f"self-loop on method {c.caller}")
        if self.entry not in ids:
            raise GraphError(f"unknown entry {self.entry}")
        if self.exit not in ids:
            raise GraphError(f"unknown exit {self.exit}")
        if not self.method(self.entry).pinned_local:
            raise GraphError(f"entry method {self.entry} must be pinned_local")

    def method(self, method_id: int) -> MethodNode:
        for m in self.methods:
            if m.id == method_id:
                return m
        raise KeyError(method_id)

    def children(self, method_id: int) -> list[int]:
        return [c.callee for c in self.calls if c.caller == method_id]


# -- recursion handling -------------------------------------------------------


def _adjacency(g: CallGraph) -> dict[int, list[int]]:
    adj: dict[int, list[int]] = {m.id: [] for m in g.methods}
    for c in g.calls:
        adj[c.caller].append(c.callee)
    return adj


def strongly_connected_components(g: CallGraph) -> list[list[int]]:
    """Tarjan's algorithm, iterative. Components come out in reverse topological order."""
    adj = _adjacency(g)
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    out: list[list[int]] = []
    counter = 0
    for root in (m.id for m in g.methods):
        if root in index:
            continue
        work = [(root, 0)]
        while work:
            v, i = work.pop()
            if i == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack.add(v)
            recurse = False
            succ = adj[v]
            while i < len(succ):
                w = succ[i]
                i += 1
                if w not in index:
                    work.append((v, i))
                    work.append((w, 0))
                    recurse = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if recurse:
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                out.append(sorted(comp))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    return out


def find_cycle(g: CallGraph) -> list[int] | None:
    """Return one call cycle as ``[a, b, ..., a]``, or None if the graph is acyclic."""
    adj = _adjacency(g)
    color = {m.id: 0 for m in g.methods}
    parent: dict[int, int] = {}
    for root in (m.id for m in g.methods):
        if color[root]:
            continue
        stack = [(root, iter(adj[root]))]
        color[root] = 1
        while stack:
            v, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[v] = 2
                stack.pop()
                continue
            if color[nxt] == 1:
                cycle = [nxt]
                node = v
                while node != nxt:
                    cycle.append(node)
                    node = parent[node]
                cycle.append(nxt)
                return cycle[::-1]
            if color[nxt] == 0:
                color[nxt] = 1
                parent[nxt] = v
                stack.append((nxt, iter(adj[nxt])))
    return None


def collapse_recursion(g: CallGraph) -> CallGraph:
    """Merge every recursive strongly-connected component into one method.

    The merged method keeps the smallest id, sums work and byte counts, and is
    pinned if any member was pinned. Call edges between components are kept
    once each, in first-declared order.
    """
    comps = strongly_connected_components(g)
    rep = {}
    for comp in comps:
        for mid in comp:
            rep[mid] = comp[0]
    by_id = {m.id: m for m in g.methods}
    members: dict[int, list[int]] = {}
    for m in g.methods:
        members.setdefault(rep[m.id], []).append(m.id)
    methods = []
    for m in g.methods:
        if rep[m.id] != m.id:
            continue
        group = [by_id[i] for i in members[m.id]]
        if len(group) == 1:
            methods.append(m)
            continue
        methods.append(
            MethodNode(
                id=m.id,
                name="+".join(x.name for x in group),
                work_units=sum(x.work_units for x in group),
                bytes_in=sum(x.bytes_in for x in group),
                bytes_out=sum(x.bytes_out for x in group),
                pinned_local=any(x.pinned_local for x in group),
            )
        )
    calls = []
    seen = set()
    for c in g.calls:
        a, b = rep[c.caller], rep[c.callee]
        if a != b and (a, b) not in seen:
            seen.add((a, b))
            calls.append(CallEdge(a, b))
    return CallGraph(tuple(methods), tuple(calls), rep[g.entry], rep[g.exit])


def execution_order(g: CallGraph) -> list[int]:
    """Serialize the methods reachable from entry into a single chain.

    Topological order, ties broken by depth-first preorder over children in
    declared call order. The exit method is placed last.
    """
    cycle = find_cycle(g)
    if cycle is not None:
        raise GraphError("call graph is cyclic: " + " -> ".join(map(str, cycle)))
    adj = _adjacency(g)
    pre: dict[int, int] = {}
    stack = [g.entry]
    while stack:
        v = stack.pop()
        if v in pre:
            continue
        pre[v] = len(pre)
        stack.extend(reversed(adj[v]))
    unreachable = [m.id for m in g.methods if m.id not in pre]
    if unreachable:
        raise GraphError(f"methods unreachable from entry: {unreachable}")
    if adj[g.exit]:
        raise GraphError(f"exit method {g.exit} must not call other methods")
    indeg = {v: 0 for v in pre}
    for c in g.calls:
        indeg[c.callee] += 1
    heap = [(pre[v], v) for v, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        _, v = heapq.heappop(heap)
        order.append(v)
        for w in adj[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                heapq.heappush(heap, (pre[w], w))
    order.remove(g.exit)
    order.append(g.exit)
    return order


# -- dual-placement graph -----------------------------------------------------

_TOKEN = re.compile(r"^(-?\d+)@([LR])$")


@dataclass(frozen=True)
class DualNode:
    method: int
    placement: Placement

    @property
    def key(self) -> str:
        return f"{self.method}@{self.placement.value}"


def parse_token(key: str) -> DualNode | None:
    """``"3@R"`` -> ``DualNode(3, REMOTE)``; None for virtual or free-form node keys."""
    m = _TOKEN.match(key)
    if m is None:
        return None
    return DualNode(int(m.group(1)), Placement(m.group(2)))


@dataclass(frozen=True)
class DualEdge:
    src: str
    dst: str
    weight: ObjectiveVector = ZERO
    measured: bool = False


@dataclass(frozen=True)
class PathSolution:
    nodes: tuple[str, ...]
    cost: ObjectiveVector

    @property
    def tokens(self) -> tuple[str, ...]:
        return tuple(n for n in self.nodes if n not in (START, END))

    @property
    def token_string(self) -> str:
        return "-".join(self.tokens)

    @property
    def path_string(self) -> str:
        return "-".join(self.nodes)

    def remote_count(self) -> int:
        return sum(1 for t in self.tokens if t.endswith("@R"))


@dataclass(frozen=True)
class DualPlacementGraph:
    """Weighted decision DAG. Nodes are string keys; edges are ordered."""

    nodes: tuple[str, ...]
    edges: tuple[DualEdge, ...]
    start: str = START
    end: str = END
    _index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        if len(set(self.nodes)) != len(self.nodes):
            raise GraphError("duplicate node keys")
        known = set(self.nodes)
        for key in (self.start, self.end):
            if key not in known:
                raise GraphError(f"unknown node {key!r}")
        index = {}
        for i, e in enumerate(self.edges):
            if e.src not in known:
                raise GraphError(f"edge {i}: unknown source {e.src!r}")
            if e.dst not in known:
                raise GraphError(f"edge {i}: unknown target {e.dst!r}")
            if (e.src, e.dst) in index:
                raise GraphError(f"edge {i}: duplicate edge {e.src}->{e.dst}")
            index[(e.src, e.dst)] = i
        object.__setattr__(self, "_index", index)

    def edge_index(self, src: str, dst: str) -> int:
        try:
            return self._index[(src, dst)]
        except KeyError:
            raise GraphError(f"no edge {src}->{dst}") from None

    def has_edge(self, src: str, dst: str) -> bool:
        return (src, dst) in self._index

    def successors(self, key: str) -> list[str]:
        return [e.dst for e in self.edges if e.src == key]

    def fully_measured(self) -> bool:
        return all(e.measured for e in self.edges)

    def unmeasured(self) -> list[int]:
        return [i for i, e in enumerate(self.edges) if not e.measured]

    def with_edges(self, updates: Mapping[int, DualEdge]) -> DualPlacementGraph:
        edges = list(self.edges)
        for i, e in updates.items():
            edges[i] = e
        return DualPlacementGraph(self.nodes, tuple(edges), self.start, self.end)

    def path_edges(self, nodes: Sequence[str]) -> list[int]:
        return [self.edge_index(a, b) for a, b in zip(nodes, nodes[1:])]

    def path_cost(self, nodes: Sequence[str]) -> ObjectiveVector:
        t = c = 0.0
        for i in self.path_edges(nodes):
            w = self.edges[i].weight
            t += w.time_ms
            c += w.cpu_units
        return ObjectiveVector(t, c)

    def topological_nodes(self) -> list[str]:
        indeg = {n: 0 for n in self.nodes}
        for e in self.edges:
            indeg[e.dst] += 1
        ready = [n for n in self.nodes if indeg[n] == 0]
        order = []
        succ: dict[str, list[str]] = {n: [] for n in self.nodes}
        for e in self.edges:
            succ[e.src].append(e.dst)
        while ready:
            n = ready.pop(0)
            order.append(n)
            for m in succ[n]:
                indeg[m] -= 1
                if indeg[m] == 0:
                    ready.append(m)
        if len(order) != len(self.nodes):
            raise GraphError("decision graph is cyclic")
        return order

    def count_paths(self) -> int:
        """Number of start-to-end paths (exact integer)."""
        succ: dict[str, list[str]] = {n: [] for n in self.nodes}
        for e in self.edges:
            succ[e.src].append(e.dst)
        counts = {n: 0 for n in self.nodes}
        counts[self.end] = 1
        for n in reversed(self.topological_nodes()):
            if n != self.end:
                counts[n] = sum(counts[m] for m in succ[n])
        return counts[self.start]


def transform(g: CallGraph) -> DualPlacementGraph:
    """Build the zero-weighted dual-placement graph of ``g``.

    Offloadable methods get ``id@L`` and ``id@R`` copies, pinned methods only
    ``id@L``. Executed methods are chained in :func:`execution_order`.
    """
    order = execution_order(g)
    layers: list[list[str]] = [[START]]
    for mid in order:
        layer = [DualNode(mid, Placement.LOCAL).key]
        if not g.method(mid).pinned_local:
            layer.append(DualNode(mid, Placement.REMOTE).key)
        layers.append(layer)
    layers.append([END])
    nodes = [k for layer in layers for k in layer]
    edges = [DualEdge(a, b) for prev, nxt in zip(layers, layers[1:]) for a in prev for b in nxt]
    return DualPlacementGraph(tuple(nodes), tuple(edges))


def enumerate_paths(d: DualPlacementGraph, bound: int = DEFAULT_PATH_BOUND) -> list[PathSolution]:
    """Every start-to-end path once, with componentwise-summed cost."""
    n = d.count_paths()
    if n > bound:
        raise PathBoundExceeded(f"{n} paths exceed the enumeration bound {bound}; use the ACO solver")
    out_edges: dict[str, list[DualEdge]] = {k: [] for k in d.nodes}
    for e in d.edges:
        out_edges[e.src].append(e)
    paths = []
    stack = [(d.start, (d.start,), 0.0, 0.0)]
    while stack:
        node, nodes, t, c = stack.pop()
        if node == d.end:
            paths.append(PathSolution(nodes, ObjectiveVector(t, c)))
            continue
        for e in reversed(out_edges[node]):
            stack.append((e.dst, nodes + (e.dst,), t + e.weight.time_ms, c + e.weight.cpu_units))
    return paths


# -- file formats -------------------------------------------------------------

_METHOD_FIELDS = {"id", "name", "work", "bytes_in", "bytes_out", "pinned"}
_GRAPH_FIELDS = {"methods", "calls", "entry", "exit"}


def _check_fields(obj, allowed: set[str], where: str, required: Iterable[str] = ()):
    if not isinstance(obj, dict):
        raise GraphFormatError(f"{where}: expected an object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise GraphFormatError(f"{where}: unknown field {unknown[0]!r}")
    for name in required:
        if name not in obj:
            raise GraphFormatError(f"{where}: missing field {name!r}")


def _number(value, where: str, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise GraphFormatError(f"{where}: expected a number")
    if integer and not isinstance(value, int):
        raise GraphFormatError(f"{where}: expected an integer")
    if value < 0:
        raise GraphFormatError(f"{where}: must be non-negative")
    return value


def graph_from_dict(data) -> CallGraph:
    _check_fields(data, _GRAPH_FIELDS, "graph", required=_GRAPH_FIELDS)
    if not isinstance(data["methods"], list):
        raise GraphFormatError("methods: expected a list")
    if not isinstance(data["calls"], list):
        raise GraphFormatError("calls: expected a list")
    methods = []
    ids = set()
    for i, m in enumerate(data["methods"]):
        where = f"methods[{i}]"
        _check_fields(m, _METHOD_FIELDS, where, required=("id",))
        mid = m["id"]
        if isinstance(mid, bool) or not isinstance(mid, int):
            raise GraphFormatError(f"{where}.id: expected an integer")
        if mid in ids:
            raise GraphFormatError(f"{where}.id: duplicate id {mid}")
        ids.add(mid)
        name = m.get("name", f"m{mid}")
        if not isinstance(name, str):
            raise GraphFormatError(f"{where}.name: expected a string")
        pinned = m.get("pinned", False)
        if not isinstance(pinned, bool):
            raise GraphFormatError(f"{where}.pinned: expected a boolean")
        methods.append(
            MethodNode(
                id=mid,
                name=name,
                work_units=float(_number(m.get("work", 0.0), f"{where}.work")),
                bytes_in=_number(m.get("bytes_in", 0), f"{where}.bytes_in", integer=True),
                bytes_out=_number(m.get("bytes_out", 0), f"{where}.bytes_out", integer=True),
                pinned_local=pinned,
            )
        )
    calls = []
    for i, c in enumerate(data["calls"]):
        where = f"calls[{i}]"
        if not (isinstance(c, list) and len(c) == 2 and all(isinstance(x, int) and not isinstance(x, bool) for x in c)):
            raise GraphFormatError(f"{where}: expected [caller, callee] integer pair")
        if c[0] not in ids:
            raise GraphFormatError(f"{where}: unknown caller {c[0]}")
        if c[1] not in ids:
            raise GraphFormatError(f"{where}: unknown callee {c[1]}")
        calls.append(CallEdge(c[0], c[1]))
    for name in ("entry", "exit"):
        if data[name] not in ids:
            raise GraphFormatError(f"{name}: unknown method {data[name]!r}")
    try:
        return CallGraph(tuple(methods), tuple(calls), data["entry"], data["exit"])
    except GraphFormatError:
        raise
    except GraphError as exc:
        raise GraphFormatError(str(exc)) from None


def graph_to_dict(g: CallGraph) -> dict:
    return {
        "methods": [
            {
                "id": m.id,
                "name": m.name,
                "work": m.work_units,
                "bytes_in": m.bytes_in,
                "bytes_out": m.bytes_out,
                "pinned": m.pinned_local,
            }
            for m in g.methods
        ],
        "calls": [[c.caller, c.callee] for c in g.calls],
        "entry": g.entry,
        "exit": g.exit,
    }


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def load(path) -> CallGraph:
    return graph_from_dict(_read_json(path))


def save(g: CallGraph, path) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(g), indent=2) + "\n")


_DUAL_FIELDS = {"nodes", "edges", "start", "end"}
_EDGE_FIELDS = {"from", "to", "time", "cpu", "measured"}


def dual_to_dict(d: DualPlacementGraph) -> dict:
    return {
        "nodes": list(d.nodes),
        "edges": [
            {"from": e.src, "to": e.dst, "time": e.weight.time_ms, "cpu": e.weight.cpu_units, "measured": e.measured}
            for e in d.edges
        ],
        "start": d.start,
        "end": d.end,
    }


def dual_from_dict(data) -> DualPlacementGraph:
    _check_fields(data, _DUAL_FIELDS, "dual graph", required=("nodes", "edges"))
    nodes = data["nodes"]
    if not isinstance(nodes, list) or not all(isinstance(n, str) for n in nodes):
        raise GraphFormatError("nodes: expected a list of strings")
    if not isinstance(data["edges"], list):
        raise GraphFormatError("edges: expected a list")
    edges = []
    for i, e in enumerate(data["edges"]):
        where = f"edges[{i}]"
        _check_fields(e, _EDGE_FIELDS, where, required=("from", "to"))
        measured = e.get("measured", "time" in e or "cpu" in e)
        if not isinstance(measured, bool):
            raise GraphFormatError(f"{where}.measured: expected a boolean")
        weight = ObjectiveVector(
            float(_number(e.get("time", 0.0), f"{where}.time")),
            float(_number(e.get("cpu", 0.0), f"{where}.cpu")),
        )
        edges.append(DualEdge(str(e["from"]), str(e["to"]), weight, measured))
    try:
        return DualPlacementGraph(tuple(nodes), tuple(edges), data.get("start", START), data.get("end", END))
    except GraphFormatError:
        raise
    except GraphError as exc:
        raise GraphFormatError(str(exc)) from None


def load_dual(path) -> DualPlacementGraph:
    return dual_from_dict(_read_json(path))


def save_dual(d: DualPlacementGraph, path) -> None:
    Path(path).write_text(json.dumps(dual_to_dict(d), indent=2) + "\n")


def load_any(path) -> CallGraph | DualPlacementGraph:
    """Load either file format, told apart by its top-level keys."""
    data = _read_json(path)
    if isinstance(data, dict) and "nodes" in data:
        return dual_from_dict(data)
    return graph_from_dict(data)


def with_costs(g: CallGraph, costs: Mapping[int, tuple[float, int, int]]) -> CallGraph:
    """Copy of ``g`` with ``(work, bytes_in, bytes_out)`` replaced per method id."""
    methods = []
    for m in g.methods:
        if m.id in costs:
            w, bi, bo = costs[m.id]
            m = replace(m, work_units=float(w), bytes_in=int(bi), bytes_out=int(bo))
        methods.append(m)
    return CallGraph(tuple(methods), g.calls, g.entry, g.exit)


def random_callgraph(rng, n_methods: int, pin_prob: float = 0.3, branch_prob: float = 0.3) -> CallGraph:
    """Seeded random acyclic call graph with ``n_methods`` methods.

    Method 0 is the pinned entry and method ``n_methods-1`` the exit. Each
    method is called by at least one earlier method, so all are reachable.
    """
    if n_methods < 1:
        raise ValueError("n_methods must be >= 1")
    methods = []
    for i in range(n_methods):
        methods.append(
            MethodNode(
                id=i,
                name=f"m{i}",
                work_units=float(rng.uniform(1.0, 500.0)),
                bytes_in=int(rng.integers(0, 200_000)),
                bytes_out=int(rng.integers(0, 200_000)),
                pinned_local=(i == 0) or bool(rng.random() < pin_prob),
            )
        )
    calls = []
    for i in range(1, n_methods):
        parent = int(rng.integers(0, i)) if rng.random() < branch_prob else i - 1
        calls.append(CallEdge(parent, i))
    return CallGraph(tuple(methods), tuple(calls), 0, n_methods - 1)
