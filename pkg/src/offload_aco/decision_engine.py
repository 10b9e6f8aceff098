"""Online offloading decisions: exploration, weight learning, ACO planning, decision cache.

A fresh engine knows nothing about costs: every edge of the decision graph
starts at (0, 0) and unmeasured. Until every edge has been observed the
engine explores, picking random plans that cover as many unmeasured edges as
possible. Once the graph is fully measured it runs the ant colony and picks
one plan from the resulting front. Plans chosen by the colony are cached per
execution context and reused until the cache entry expires.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .aco_solver import AcoParams, solve_with_stats
from .callgraph import (
    CallGraph,
    DualEdge,
    DualPlacementGraph,
    GraphError,
    ObjectiveVector,
    PathSolution,
    transform,
)
from .pareto import ParetoArchive
from .trace import ExecutionTrace

NETWORK_CLASSES = ("good", "medium", "poor")

RUN_COLUMNS = ("run", "plan", "time_ms", "cpu_units", "decision_ms", "source", "error")


class TraceMismatch(GraphError):
    """An observed trace does not follow a path of the decision graph."""


@dataclass(frozen=True)
class ContextKey:
    app_id: str
    input_bucket: int
    network_bucket: int

    def serialize(self) -> str:
        return f"{self.app_id}|{self.input_bucket}|{self.network_bucket}"


def input_bucket(input_size: float) -> int:
    return int(math.floor(math.log2(input_size))) if input_size >= 1 else 0


def network_bucket(bandwidth_mbps: float) -> int:
    """0 good (>= 50 Mbps), 1 medium (>= 5 Mbps), 2 poor."""
    if bandwidth_mbps >= 50:
        return 0
    if bandwidth_mbps >= 5:
        return 1
    return 2


def context_key(app_id: str, input_size: float, bandwidth_mbps: float) -> ContextKey:
    return ContextKey(app_id, input_bucket(input_size), network_bucket(bandwidth_mbps))


class DecisionCache:
    """Plans keyed by serialized context, with run-count expiry.

    An entry stored at run ``s`` is served at run ``r`` only while
    ``r - s < invalidation_period``; expired entries are evicted on lookup.
    """

    def __init__(self, invalidation_period: int | None = None, enabled: bool = True):
        if invalidation_period is not None and invalidation_period < 1:
            raise ValueError("invalidation_period must be positive or None")
        self.invalidation_period = invalidation_period
        self.enabled = enabled
        self.entries: dict[str, tuple[str, PathSolution, int]] = {}

    def store(self, key: ContextKey, plan: PathSolution, run: int) -> None:
        if self.enabled:
            self.entries[key.serialize()] = (plan.token_string, plan, run)

    def lookup(self, key: ContextKey, run: int) -> PathSolution | None:
        if not self.enabled:
            return None
        hit = self.entries.get(key.serialize())
        if hit is None:
            return None
        _, plan, stored_at = hit
        if self.invalidation_period is not None and run - stored_at >= self.invalidation_period:
            del self.entries[key.serialize()]
            return None
        return plan

    def history(self) -> list[str]:
        """Cached execution strings, in insertion order."""
        return [tokens for tokens, _, _ in self.entries.values()]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class DecisionCostModel:
    """Modeled on-device decision latency, so simulated runs stay reproducible."""

    ant_step_ms: float = 0.002
    cache_lookup_ms: float = 0.05
    random_step_ms: float = 0.01


@dataclass
class RunRecord:
    run: int
    plan: str
    time_ms: float
    cpu_units: float
    decision_ms: float
    source: str
    error: str = ""
    degraded: bool = False


@dataclass
class RunReport:
    records: list[RunRecord] = field(default_factory=list)
    solver_invocations: int = 0
    cache_hits: int = 0
    warmup_runs: int | None = None  # runs before the graph became fully measured
    solver_runs: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def solver_invocations_after_warmup(self) -> int:
        start = self.warmup_runs if self.warmup_runs is not None else len(self.records)
        return sum(1 for r in self.solver_runs if r >= start)

    def write_csv(self, out) -> None:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(RUN_COLUMNS)
        for r in self.records:
            w.writerow([r.run, r.plan, f"{r.time_ms:.6f}", f"{r.cpu_units:.6f}", f"{r.decision_ms:.6f}", r.source, r.error])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    @classmethod
    def read_csv(cls, f) -> RunReport:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != RUN_COLUMNS:
            raise ValueError(f"unexpected run report header {reader.fieldnames}")
        report = cls()
        for row in reader:
            report.records.append(
                RunRecord(
                    run=int(row["run"]),
                    plan=row["plan"],
                    time_ms=float(row["time_ms"]),
                    cpu_units=float(row["cpu_units"]),
                    decision_ms=float(row["decision_ms"]),
                    source=row["source"],
                    error=row["error"],
                )
            )
        report.cache_hits = sum(1 for r in report.records if r.source == "cache")
        report.solver_invocations = sum(1 for r in report.records if r.source == "aco")
        return report


Executor = Callable[[PathSolution], ExecutionTrace]


class OffloadingEngine:
    """Single-writer offloading service for one application."""

    def __init__(
        self,
        app: CallGraph,
        params: AcoParams | None = None,
        *,
        ema_factor: float = 1.0,
        preference: float = 0.5,
        cache_enabled: bool = True,
        invalidation_period: int | None = None,
        seed: int = 0,
        clock: str = "model",
        cost_model: DecisionCostModel = DecisionCostModel(),
    ):
        if not 0.0 < ema_factor <= 1.0:
            raise ValueError("ema_factor must lie in (0, 1]")
        if not 0.0 <= preference <= 1.0:
            raise ValueError("preference must lie in [0, 1]")
        if clock not in ("model", "wall"):
            raise ValueError("clock must be 'model' or 'wall'")
        self.app = app
        base = transform(app)
        self._nodes = base.nodes
        self._edges = list(base.edges)
        self._graph: DualPlacementGraph | None = base
        self.params = params or AcoParams()
        self.ema_factor = ema_factor
        self.preference = preference
        self.cache = DecisionCache(invalidation_period, cache_enabled)
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.clock = clock
        self.cost_model = cost_model
        self.run_counter = 0
        self.solver_invocations = 0
        self.last_source: str | None = None
        self.last_archive: ParetoArchive | None = None
        self.last_decision_ms = 0.0

    @property
    def graph(self) -> DualPlacementGraph:
        if self._graph is None:
            self._graph = DualPlacementGraph(self._nodes, tuple(self._edges))
        return self._graph

    # -- cache ----------------------------------------------------------------

    def cache_store(self, key: ContextKey, plan: PathSolution) -> None:
        self.cache.store(key, plan, self.run_counter)

    def cache_lookup(self, key: ContextKey) -> PathSolution | None:
        return self.cache.lookup(key, self.run_counter)

    # -- decisions ------------------------------------------------------------

    def decide(self, key: ContextKey) -> PathSolution:
        """Plan for the next run in context ``key``. Sets ``last_source`` to cache, random or aco."""
        started = time.perf_counter()
        plan = self.cache_lookup(key)
        if plan is not None:
            self.last_source = "cache"
            modeled = self.cost_model.cache_lookup_ms
        elif not self.graph.fully_measured():
            plan, steps = self._explore()
            self.last_source = "random"
            modeled = steps * self.cost_model.random_step_ms
        else:
            plan, steps = self._plan_with_colony()
            self.last_source = "aco"
            modeled = steps * self.cost_model.ant_step_ms
        wall = (time.perf_counter() - started) * 1000.0
        self.last_decision_ms = modeled if self.clock == "model" else wall
        return plan

    def _explore(self) -> tuple[PathSolution, int]:
        """Uniform random path among those covering the most unmeasured edges."""
        d = self.graph
        succ: dict[str, list[DualEdge]] = {n: [] for n in d.nodes}
        for e in d.edges:
            succ[e.src].append(e)
        best: dict[str, int] = {d.end: 0}
        count: dict[str, int] = {d.end: 1}
        for n in reversed(d.topological_nodes()):
            if n == d.end or not succ[n]:
                continue
            gains = [(not e.measured) + best.get(e.dst, -(10**9)) for e in succ[n]]
            top = max(gains)
            best[n] = top
            count[n] = sum(count.get(e.dst, 0) for e, g in zip(succ[n], gains) if g == top)
        nodes = [d.start]
        node = d.start
        while node != d.end:
            options = [e for e in succ[node] if (not e.measured) + best.get(e.dst, -(10**9)) == best[node]]
            weights = np.array([count[e.dst] for e in options], dtype=np.float64)
            pick = options[int(self.rng.choice(len(options), p=weights / weights.sum()))]
            node = pick.dst
            nodes.append(node)
        return PathSolution(tuple(nodes), d.path_cost(nodes)), len(nodes) - 1

    def _plan_with_colony(self) -> tuple[PathSolution, int]:
        seed = int(np.random.SeedSequence([self.seed, self.solver_invocations]).generate_state(1)[0])
        archive, stats = solve_with_stats(self.graph, replace(self.params, seed=seed))
        self.solver_invocations += 1
        self.last_archive = archive
        return select_plan(archive, self.preference), stats.ant_steps

    # -- learning -------------------------------------------------------------

    def observe(self, trace: ExecutionTrace) -> None:
        """Fold measured costs of ``trace`` into the edges it traversed."""
        self.run_counter += 1
        if not trace.tokens:
            return
        d = self.graph
        nodes = [d.start, *trace.tokens, d.end]
        idx = []
        for a, b in zip(nodes, nodes[1:]):
            if not d.has_edge(a, b):
                bad = b if b != d.end else a
                raise TraceMismatch(f"trace token {bad!r} does not continue a valid path (no edge {a}->{b})")
            idx.append(d.edge_index(a, b))
        for i, cost in zip(idx, trace.step_costs()):
            e = self._edges[i]
            if e.measured:
                k = self.ema_factor
                cost = ObjectiveVector(
                    k * cost.time_ms + (1.0 - k) * e.weight.time_ms,
                    k * cost.cpu_units + (1.0 - k) * e.weight.cpu_units,
                )
            self._edges[i] = DualEdge(e.src, e.dst, cost, True)
        self._graph = None

    # -- online loop ----------------------------------------------------------

    def run_online(self, n_runs: int, executor: Executor, key: ContextKey) -> RunReport:
        """decide -> execute -> observe, ``n_runs`` times. Executor failures are recorded, not raised."""
        report = RunReport()
        if self.graph.fully_measured():
            report.warmup_runs = 0
        for i in range(n_runs):
            plan = self.decide(key)
            source = self.last_source
            if source == "cache":
                report.cache_hits += 1
            elif source == "aco":
                report.solver_invocations += 1
                report.solver_runs.append(i)
                self.cache_store(key, plan)
            try:
                trace = executor(plan)
            except Exception as exc:  # executor failures must not stop the loop
                self.run_counter += 1
                report.records.append(RunRecord(i, plan.token_string, 0.0, 0.0, self.last_decision_ms, source,
                                                error=f"{type(exc).__name__}: {exc}"))
                continue
            self.observe(trace)
            total = trace.total
            report.records.append(
                RunRecord(i, trace.token_string, total.time_ms, total.cpu_units, self.last_decision_ms, source,
                          degraded=trace.degraded)
            )
            if report.warmup_runs is None and self.graph.fully_measured():
                report.warmup_runs = i + 1
        return report


def init(app: CallGraph, params: AcoParams | None = None, **kwargs) -> OffloadingEngine:
    """Engine with an all-zero, unmeasured decision graph and an empty cache."""
    return OffloadingEngine(app, params, **kwargs)


def select_plan(archive: ParetoArchive, preference: float = 0.5) -> PathSolution:
    """Pick one plan from a front by min-max normalized weighted sum.

    ``preference`` weighs time, ``1 - preference`` weighs cpu. Ties go to the
    plan with fewer remote methods, then to the smaller token string.
    """
    sols = archive.solutions
    if not sols:
        raise ValueError("empty archive")
    ts = [s.cost.time_ms for s in sols]
    cs = [s.cost.cpu_units for s in sols]
    t_lo, t_span = min(ts), max(ts) - min(ts)
    c_lo, c_span = min(cs), max(cs) - min(cs)

    def score(s: PathSolution) -> float:
        tn = (s.cost.time_ms - t_lo) / t_span if t_span > 0 else 0.0
        cn = (s.cost.cpu_units - c_lo) / c_span if c_span > 0 else 0.0
        return preference * tn + (1.0 - preference) * cn

    return min(sols, key=lambda s: (score(s), s.remote_count(), s.token_string))


def measure_overhead(report: RunReport) -> float:
    """Share of total time spent deciding: sum(decision) / sum(decision + execution)."""
    if not report.records:
        raise ValueError("overhead of an empty report is undefined")
    dec = sum(r.decision_ms for r in report.records)
    total = dec + sum(r.time_ms for r in report.records)
    if total <= 0:
        raise ValueError("report has no recorded time")
    return dec / total
