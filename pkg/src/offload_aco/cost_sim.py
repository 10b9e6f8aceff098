"""Seeded device/server/network cost model and the benchmark workload analogs.

Costs are abstract. A method with ``work`` units takes ``work / cpu_speed``
milliseconds and ``work`` cpu units on the device. Offloaded, it takes
``work / server_speed`` plus transfer time for its payload, and costs the
device ``kappa`` cpu units per marshaled byte. One round trip is charged per
offload burst, i.e. on every local-to-remote transition.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .callgraph import (
    END,
    START,
    ZERO,
    CallEdge,
    CallGraph,
    DualEdge,
    DualPlacementGraph,
    MethodNode,
    ObjectiveVector,
    PathSolution,
    Placement,
    collapse_recursion,
    parse_token,
    transform,
)
from .trace import ExecutionTrace

KAPPA = 1e-3


@dataclass(frozen=True)
class DeviceProfile:
    cpu_speed: float
    label: str = "device"

    def __post_init__(self):
        if not self.cpu_speed > 0:
            raise ValueError("cpu_speed must be positive")


@dataclass(frozen=True)
class NetworkProfile:
    bandwidth: float  # bytes per ms
    rtt_ms: float = 0.0
    jitter: float = 0.0
    label: str = "network"

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.rtt_ms < 0 or self.jitter < 0:
            raise ValueError("rtt_ms and jitter must be non-negative")

    @property
    def mbps(self) -> float:
        return self.bandwidth * 8.0 / 1000.0


DEVICE = DeviceProfile(1.0, "device")
SERVER = DeviceProfile(10.0, "server")
NETWORKS = {
    "good": NetworkProfile(50_000.0, 20.0, 0.05, "good"),
    "medium": NetworkProfile(5_000.0, 60.0, 0.05, "medium"),
    "poor": NetworkProfile(500.0, 200.0, 0.05, "poor"),
}


def network(name: str) -> NetworkProfile:
    try:
        return NETWORKS[name]
    except KeyError:
        raise ValueError(f"unknown network profile {name!r}; choose from {sorted(NETWORKS)}") from None


# -- cost model ---------------------------------------------------------------


def method_cost(m: MethodNode, placement: Placement, dev: DeviceProfile, srv: DeviceProfile,
                net: NetworkProfile, kappa: float = KAPPA) -> ObjectiveVector:
    """Noise-free cost of one method, excluding the round-trip surcharge."""
    if placement is Placement.LOCAL:
        return ObjectiveVector(m.work_units / dev.cpu_speed, m.work_units)
    payload = m.bytes_in + m.bytes_out
    return ObjectiveVector(m.work_units / srv.cpu_speed + payload / net.bandwidth, kappa * payload)


def transition_cost(prev: Placement, nxt: Placement, net: NetworkProfile) -> ObjectiveVector:
    if prev is Placement.LOCAL and nxt is Placement.REMOTE:
        return ObjectiveVector(net.rtt_ms, 0.0)
    return ZERO


def _placement_of(key: str) -> Placement:
    tok = parse_token(key)
    return Placement.LOCAL if tok is None else tok.placement


def weigh(g: CallGraph, dev: DeviceProfile = DEVICE, srv: DeviceProfile = SERVER,
          net: NetworkProfile = NETWORKS["good"], kappa: float = KAPPA) -> DualPlacementGraph:
    """Dual graph of ``g`` with every edge measured at its closed-form cost."""
    d = transform(g)
    edges = []
    for e in d.edges:
        tok = parse_token(e.dst)
        if tok is None:
            edges.append(DualEdge(e.src, e.dst, ZERO, True))
            continue
        w = method_cost(g.method(tok.method), tok.placement, dev, srv, net, kappa)
        w = w + transition_cost(_placement_of(e.src), tok.placement, net)
        edges.append(DualEdge(e.src, e.dst, w, True))
    return DualPlacementGraph(d.nodes, tuple(edges), d.start, d.end)


@functools.lru_cache(maxsize=256)
def _dual(g: CallGraph) -> DualPlacementGraph:
    return transform(g)


def all_local_plan(g: CallGraph) -> PathSolution:
    d = _dual(g)
    nodes = [d.start] + [k for k in d.nodes if k.endswith("@L")] + [d.end]
    return PathSolution(tuple(nodes), ZERO)


def all_remote_plan(g: CallGraph) -> PathSolution:
    """Every offloadable method remote, pinned methods local."""
    d = _dual(g)
    keys = set(d.nodes)
    nodes = [d.start]
    for k in d.nodes:
        tok = parse_token(k)
        if tok is None:
            continue
        remote = f"{tok.method}@R"
        if tok.placement is Placement.LOCAL:
            nodes.append(remote if remote in keys else k)
    nodes.append(d.end)
    return PathSolution(tuple(nodes), ZERO)


def _noise(rng, jitter: float) -> float:
    if jitter <= 0 or rng is None:
        return 1.0
    return max(1.0 + jitter * float(rng.standard_normal()), 1e-3)


# -- workloads ----------------------------------------------------------------

SizeFn = Callable[[float], float]


@dataclass(frozen=True)
class MethodSpec:
    id: int
    name: str
    work: SizeFn
    bytes_in: SizeFn = lambda n: 0
    bytes_out: SizeFn = lambda n: 0
    pinned: bool = False


@dataclass(frozen=True)
class Workload:
    """A benchmark analog: call topology plus size-dependent costs.

    ``methods``/``calls`` describe the raw topology, which may be recursive;
    :attr:`graph` is the recursion-collapsed call graph at ``size``.
    """

    name: str
    methods: tuple[MethodSpec, ...]
    calls: tuple[tuple[int, int], ...]
    entry: int
    exit: int
    series: tuple[float, ...]
    size: float

    def at(self, size: float) -> Workload:
        return replace(self, size=size)

    @functools.cached_property
    def graph(self) -> CallGraph:
        return _instantiate(self, self.size)

    def raw_graph(self, size: float | None = None) -> CallGraph:
        n = self.size if size is None else size
        methods = tuple(
            MethodNode(
                id=m.id,
                name=m.name,
                work_units=float(m.work(n)),
                bytes_in=int(m.bytes_in(n)),
                bytes_out=int(m.bytes_out(n)),
                pinned_local=m.pinned,
            )
            for m in self.methods
        )
        return CallGraph(methods, tuple(CallEdge(a, b) for a, b in self.calls), self.entry, self.exit)

    def total_work(self, size: float | None = None) -> float:
        n = self.size if size is None else size
        return sum(float(m.work(n)) for m in self.methods)


def _instantiate(w: Workload, size: float) -> CallGraph:
    return collapse_recursion(w.raw_graph(size))


def simulate(plan: PathSolution, w: Workload, input: float | None, dev: DeviceProfile = DEVICE,
             srv: DeviceProfile = SERVER, net: NetworkProfile = NETWORKS["good"], rng=None,
             kappa: float = KAPPA) -> ExecutionTrace:
    """Run ``plan`` against the cost model.

    Each method's time (and each round-trip surcharge) is scaled by an
    independent factor ``1 + jitter * N(0, 1)`` clamped positive. CPU cost
    is noise-free. ``rng`` is only consulted when ``net.jitter > 0``.
    """
    g = w.graph if input is None or input == w.size else w.at(input).graph
    d = _dual(g)
    d.path_edges(plan.nodes)  # raises on an invalid plan
    tokens = list(plan.tokens)
    costs = {}
    surcharges = []
    prev = Placement.LOCAL
    for tok in tokens:
        node = parse_token(tok)
        base = method_cost(g.method(node.method), node.placement, dev, srv, net, kappa)
        costs[node.method] = ObjectiveVector(base.time_ms * _noise(rng, net.jitter), base.cpu_units)
        extra = transition_cost(prev, node.placement, net)
        if extra.time_ms:
            extra = ObjectiveVector(extra.time_ms * _noise(rng, net.jitter), extra.cpu_units)
        surcharges.append(extra)
        prev = node.placement
    return ExecutionTrace(tokens=tokens, per_method_costs=costs, surcharges=surcharges)


def success(local_trace: ExecutionTrace, offload_trace: ExecutionTrace) -> bool:
    """Offloading paid off in execution time (strictly)."""
    return offload_trace.total.time_ms < local_trace.total.time_ms


# Topologies. Work is in device-milliseconds at cpu_speed 1.

def _fib() -> tuple:
    methods = (
        MethodSpec(0, "main", lambda n: 0.5, pinned=True),
        MethodSpec(1, "fib", lambda n: 0.004 * n, lambda n: 16, lambda n: math.ceil(0.7 * n / 8)),
        MethodSpec(2, "fib_add", lambda n: 0.002 * n),
    )
    return methods, ((0, 1), (1, 2), (2, 1)), 0, 1, (500, 800, 1200, 1500)


def _matmul() -> tuple:
    methods = (
        MethodSpec(0, "main", lambda n: 1.0, pinned=True),
        MethodSpec(1, "init_matrices", lambda n: 1e-4 * n * n, lambda n: 16, lambda n: 16 * n * n),
        MethodSpec(2, "multiply", lambda n: 2e-5 * n**3, lambda n: 16 * n * n, lambda n: 8 * n * n),
    )
    return methods, ((0, 1), (1, 2)), 0, 2, (50, 60, 70, 80)


def _det() -> tuple:
    # det_recursive <-> minor is the recursion, collapsed into one method
    ops = lambda n: 4.0 * math.factorial(int(n)) * n  # noqa: E731
    methods = (
        MethodSpec(0, "main", lambda n: 1.0, pinned=True),
        MethodSpec(1, "load_matrix", lambda n: 0.5 + 0.1 * n * n, lambda n: 16, lambda n: 8 * n * n),
        MethodSpec(2, "det_recursive", lambda n: 0.35 * ops(n), lambda n: 8 * n * n, lambda n: 8 * n * n),
        MethodSpec(3, "minor", lambda n: 0.2 * ops(n), lambda n: 8 * n * n, lambda n: 8 * n * n),
        MethodSpec(4, "accumulate_cofactors", lambda n: 0.45 * ops(n), lambda n: 8 * n * n, lambda n: 8),
    )
    return methods, ((0, 1), (1, 2), (2, 3), (3, 2), (2, 4)), 0, 4, (3, 4, 5, 6)


def _integrate() -> tuple:
    total = lambda x: 20.0 * math.exp(1.2 * x)  # noqa: E731
    methods = (
        MethodSpec(0, "main", lambda x: 1.0, pinned=True),
        MethodSpec(1, "partition", lambda x: 0.5 + x, lambda x: 24, lambda x: 8 * 64),
        MethodSpec(2, "evaluate_integrand", lambda x: 0.55 * total(x), lambda x: 8 * 64, lambda x: 8 * 64),
        MethodSpec(3, "refine", lambda x: 0.45 * total(x), lambda x: 8 * 64, lambda x: 8),
    )
    return methods, ((0, 1), (1, 2), (2, 3)), 0, 3, (1.0, 1.5, 2.0, 3.0)


MONTECARLO_SERIES = {1: (10, 5), 2: (20, 7), 3: (30, 9), 4: (40, 11)}


def _montecarlo() -> tuple:
    def sd(k):
        return MONTECARLO_SERIES[int(k)]

    def work(share):
        return lambda k: share * 2.0 * sd(k)[0] * sd(k)[1] ** 2

    board = lambda k: 8 * 64  # noqa: E731
    moves = lambda k: 16 * sd(k)[0]  # noqa: E731
    methods = (
        MethodSpec(0, "main", lambda k: 1.0, pinned=True),
        MethodSpec(1, "init_board", lambda k: 1.0, lambda k: 16, board),
        MethodSpec(2, "generate_moves", work(0.05), board, moves),
        MethodSpec(3, "random_playouts", work(0.5), moves, moves),
        MethodSpec(4, "score_positions", work(0.3), moves, moves),
        MethodSpec(5, "backpropagate", work(0.1), moves, moves),
        MethodSpec(6, "select_move", work(0.05), moves, lambda k: 16),
        MethodSpec(7, "show_move", lambda k: 2.0, lambda k: 16, lambda k: 0, pinned=True),
    )
    calls = tuple((i, i + 1) for i in range(7))
    return methods, calls, 0, 7, (1, 2, 3, 4)


def _facerec() -> tuple:
    px = lambda k: 100_000 * k  # noqa: E731

    def work(per_kpx):
        return lambda k: per_kpx * px(k) / 1000.0

    methods = (
        MethodSpec(0, "main", lambda k: 1.0, pinned=True),
        MethodSpec(1, "capture_image", lambda k: 2.0, lambda k: 0, px, pinned=True),
        MethodSpec(2, "preprocess", work(0.5), px, px),
        MethodSpec(3, "normalize", work(0.3), px, px),
        MethodSpec(4, "load_training_set", work(0.2), lambda k: 16, lambda k: 0),
        MethodSpec(5, "mean_face", work(1.0), lambda k: 0, px),
        MethodSpec(6, "covariance", work(6.0), px, lambda k: 4096),
        MethodSpec(7, "eigen_decompose", work(8.0), lambda k: 4096, lambda k: 4096),
        MethodSpec(8, "project_training", work(4.0), lambda k: 4096, lambda k: 2048),
        MethodSpec(9, "project_probe", work(0.5), px, lambda k: 256),
        MethodSpec(10, "match", work(0.5), lambda k: 2048, lambda k: 16),
        MethodSpec(11, "display_result", lambda k: 2.0, lambda k: 16, lambda k: 0, pinned=True),
    )
    calls = tuple((i, i + 1) for i in range(11))
    return methods, calls, 0, 11, (1, 2, 3, 4)


BENCHMARKS = {
    "fib": _fib,
    "matmul": _matmul,
    "det": _det,
    "integrate": _integrate,
    "montecarlo": _montecarlo,
    "facerec": _facerec,
}


def gen_benchmark(name: str, size: float | None = None) -> Workload:
    """Workload analog for one of the six benchmarks.

    ``size`` defaults to the first series entry and must lie within the
    series range (fib n, matmul n, det n, integrate upper bound, montecarlo
    and facerec series index 1-4).
    """
    try:
        methods, calls, entry, exit_, series = BENCHMARKS[name]()
    except KeyError:
        raise ValueError(f"unknown benchmark {name!r}; choose from {sorted(BENCHMARKS)}") from None
    if size is None:
        size = series[0]
    if not series[0] <= size <= series[-1]:
        raise ValueError(f"{name}: size {size} outside series range [{series[0]}, {series[-1]}]")
    if name in ("montecarlo", "facerec", "det") and size != int(size):
        raise ValueError(f"{name}: size must be an integer")
    return Workload(name, methods, calls, entry, exit_, tuple(series), size)


def workload_from_graph(g: CallGraph, name: str = "graph") -> Workload:
    """Fixed-size workload whose costs are the ones written in ``g``."""
    methods = tuple(
        MethodSpec(m.id, m.name, lambda n, v=m.work_units: v, lambda n, v=m.bytes_in: v,
                   lambda n, v=m.bytes_out: v, m.pinned_local)
        for m in g.methods
    )
    calls = tuple((c.caller, c.callee) for c in g.calls)
    return Workload(name, methods, calls, g.entry, g.exit, (1.0,), 1.0)


def random_measured_graph(rng, max_methods: int = 10, net: NetworkProfile | None = None) -> tuple[CallGraph, DualPlacementGraph]:
    """Random call graph with 2..max_methods methods and its closed-form weighted dual graph."""
    from .callgraph import random_callgraph

    g = random_callgraph(rng, int(rng.integers(2, max_methods + 1)))
    return g, weigh(g, DEVICE, SERVER, net or NETWORKS["good"])


__all__ = [
    "DEVICE",
    "END",
    "KAPPA",
    "NETWORKS",
    "SERVER",
    "START",
    "DeviceProfile",
    "MethodSpec",
    "NetworkProfile",
    "Workload",
    "all_local_plan",
    "all_remote_plan",
    "gen_benchmark",
    "method_cost",
    "network",
    "random_measured_graph",
    "simulate",
    "success",
    "transition_cost",
    "weigh",
    "workload_from_graph",
]
