"""Bi-objective ant colony over a dual-placement graph.

Two pheromone matrices, one per objective. Every ant carries a scalarization
weight ``lambda`` that mixes the matrices and the edge costs in its
transition rule; with the default ``"spread"`` rule the colony's ants cover
``lambda = 0 .. 1`` evenly so the colony sweeps the whole front.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Union

import numpy as np

from . import _kernels
from .callgraph import DualPlacementGraph, GraphError, ObjectiveVector, PathSolution
from .pareto import ParetoArchive

EPS = 1e-9

LambdaRule = Union[str, float]


class SolverError(RuntimeError):
    """The colony could not build a path."""


class UnmeasuredGraphError(GraphError):
    """The graph still has edges without observed weights."""


@dataclass(frozen=True)
class AcoParams:
    n_ants: int = 10
    n_iterations: int = 200
    alpha: float = 1.0
    beta: float = 2.0
    rho_local: float = 0.1
    rho_global: float = 0.1
    q0: float = 0.9
    tau0: float = 1.0
    deposit_q: float = 1.0
    tau_min: float = 0.01
    tau_max: float = 10.0
    seed: int = 0
    lambda_rule: LambdaRule = "spread"
    # reset both matrices to tau0 after this many iterations without archive change; 0 disables
    restart_after: int = 10

    def __post_init__(self):
        if self.n_ants < 1 or self.n_iterations < 1:
            raise ValueError("n_ants and n_iterations must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        for name in ("rho_local", "rho_global"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if not 0.0 <= self.q0 <= 1.0:
            raise ValueError("q0 must lie in [0, 1]")
        if self.restart_after < 0:
            raise ValueError("restart_after must be >= 0")
        if self.deposit_q <= 0:
            raise ValueError("deposit_q must be positive")
        if not 0.0 < self.tau_min <= self.tau0 <= self.tau_max:
            raise ValueError("need 0 < tau_min <= tau0 <= tau_max")
        if isinstance(self.lambda_rule, str):
            if self.lambda_rule != "spread":
                raise ValueError(f"unknown lambda rule {self.lambda_rule!r}")
        elif not 0.0 <= float(self.lambda_rule) <= 1.0:
            raise ValueError("fixed lambda must lie in [0, 1]")

    def ant_lambdas(self) -> np.ndarray:
        if not isinstance(self.lambda_rule, str):
            return np.full(self.n_ants, float(self.lambda_rule))
        if self.n_ants == 1:
            return np.array([0.5])
        return np.arange(self.n_ants, dtype=np.float64) / (self.n_ants - 1)

    @classmethod
    def from_mapping(cls, values: dict) -> AcoParams:
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ValueError(f"unknown ACO parameter {key!r}")
            kwargs[key] = _coerce(key, raw)
        return cls(**kwargs)


def _coerce(key: str, raw):
    if key in ("n_ants", "n_iterations", "seed", "restart_after"):
        return int(raw)
    if key == "lambda_rule":
        if isinstance(raw, str) and raw.strip().lower() == "spread":
            return "spread"
        return float(raw)
    return float(raw)


def load_params(path, base: AcoParams | None = None) -> AcoParams:
    """Read parameters from ``key=value`` lines or JSON.

    JSON may be a flat object or an experiment file with an ``"aco"`` object.
    Keys absent from the file keep the values of ``base`` (defaults if None).
    """
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        data = json.loads(text)
        if "aco" in data and isinstance(data["aco"], dict):
            data = data["aco"]
    else:
        data = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            data[key.strip()] = value.strip()
    merged = {f.name: getattr(base or AcoParams(), f.name) for f in fields(AcoParams)}
    for key, value in data.items():
        if key not in merged:
            raise ValueError(f"{path}: unknown ACO parameter {key!r}")
        merged[key] = _coerce(key, value)
    return AcoParams(**merged)


@dataclass
class PheromonePair:
    """Per-edge pheromone for the time objective and the cpu objective."""

    tau_time: np.ndarray
    tau_cpu: np.ndarray

    @classmethod
    def initial(cls, n_edges: int, tau0: float) -> PheromonePair:
        return cls(np.full(n_edges, tau0, dtype=np.float64), np.full(n_edges, tau0, dtype=np.float64))

    def copy(self) -> PheromonePair:
        return PheromonePair(self.tau_time.copy(), self.tau_cpu.copy())


@dataclass
class AntState:
    current: str
    visited: list[str] = field(default_factory=list)
    accrued: ObjectiveVector = ObjectiveVector()
    lam: float = 0.5


class CompiledGraph:
    """CSR view of a :class:`DualPlacementGraph` for the kernels.

    Nodes are renumbered in topological order and edges grouped by source;
    ``order[k]`` is the original index of compiled edge ``k``.
    """

    def __init__(self, d: DualPlacementGraph):
        self.graph = d
        topo = d.topological_nodes()
        self.node_keys = topo
        self.node_index = {k: i for i, k in enumerate(topo)}
        src = np.array([self.node_index[e.src] for e in d.edges], dtype=np.int64)
        self.order = np.argsort(src, kind="stable")
        self.position = np.empty_like(self.order)
        self.position[self.order] = np.arange(len(self.order))
        n = len(topo)
        counts = np.bincount(src, minlength=n) if len(src) else np.zeros(n, dtype=np.int64)
        self.out_ptr = np.zeros(n + 1, dtype=np.int64)
        self.out_ptr[1:] = np.cumsum(counts)
        edges = [d.edges[i] for i in self.order]
        self.edge_dst = np.array([self.node_index[e.dst] for e in edges], dtype=np.int64)
        self.w_time = np.array([e.weight.time_ms for e in edges], dtype=np.float64)
        self.w_cpu = np.array([e.weight.cpu_units for e in edges], dtype=np.float64)
        self.start = self.node_index[d.start]
        self.end = self.node_index[d.end]
        self.max_len = self._longest_path()

    def _longest_path(self) -> int:
        depth = np.zeros(len(self.node_keys), dtype=np.int64)
        for v in range(len(self.node_keys)):
            for e in range(self.out_ptr[v], self.out_ptr[v + 1]):
                w = self.edge_dst[e]
                depth[w] = max(depth[w], depth[v] + 1)
        return max(1, int(depth.max()) if len(depth) else 1)

    def to_compiled(self, ph: PheromonePair) -> tuple[np.ndarray, np.ndarray]:
        return ph.tau_time[self.order].copy(), ph.tau_cpu[self.order].copy()

    def from_compiled(self, tau_t: np.ndarray, tau_c: np.ndarray, ph: PheromonePair) -> None:
        ph.tau_time[self.order] = tau_t
        ph.tau_cpu[self.order] = tau_c

    def node_path(self, edge_ids) -> tuple[str, ...]:
        keys = [self.node_keys[self.start]]
        for e in edge_ids:
            keys.append(self.node_keys[self.edge_dst[e]])
        return tuple(keys)


def select_next(ant: AntState, d: DualPlacementGraph, ph: PheromonePair, p: AcoParams, rng) -> str:
    """Next node for ``ant`` under the pseudo-random-proportional rule.

    With probability ``q0`` the best-scoring out-edge is taken, otherwise an
    out-edge is sampled with probability proportional to its score.
    """
    cg = CompiledGraph(d)
    tau_t, tau_c = cg.to_compiled(ph)
    u = rng.random(2)
    e = _kernels.select_edge(
        cg.out_ptr, cg.node_index[ant.current], tau_t, tau_c, cg.w_time, cg.w_cpu,
        float(ant.lam), p.alpha, p.beta, p.q0, EPS, u[0], u[1],
    )
    if e < 0:
        raise SolverError(f"dead end at node {ant.current!r}")
    return cg.node_keys[cg.edge_dst[e]]


def local_update(ph: PheromonePair, edge: int, p: AcoParams) -> None:
    """Pull both matrices on ``edge`` toward ``tau0``, then clamp."""
    for tau in (ph.tau_time, ph.tau_cpu):
        _kernels.relax_toward(tau, edge, p.rho_local, p.tau0, p.tau_min, p.tau_max)


def global_update(ph: PheromonePair, archive: ParetoArchive, d: DualPlacementGraph, p: AcoParams) -> None:
    """Evaporate all entries, deposit ``deposit_q / cost`` along every archive path, clamp."""
    sols = archive.solutions
    width = max((len(s.nodes) - 1 for s in sols), default=1)
    paths = np.zeros((len(sols), max(width, 1)), dtype=np.int64)
    lengths = np.zeros(len(sols), dtype=np.int64)
    for k, s in enumerate(sols):
        idx = d.path_edges(s.nodes)
        paths[k, : len(idx)] = idx
        lengths[k] = len(idx)
    cost_t = np.array([s.cost.time_ms for s in sols], dtype=np.float64)
    cost_c = np.array([s.cost.cpu_units for s in sols], dtype=np.float64)
    _kernels.deposit(
        ph.tau_time, ph.tau_cpu, p.rho_global, paths, lengths, np.ones(len(sols), dtype=np.bool_),
        cost_t, cost_c, p.deposit_q, EPS, p.tau_min, p.tau_max,
    )


@dataclass
class SolveStats:
    iterations: int = 0
    ant_steps: int = 0
    restarts: int = 0


def solve(d: DualPlacementGraph, p: AcoParams | None = None) -> ParetoArchive:
    """Non-dominated paths found by the colony. Deterministic for a fixed seed."""
    return solve_with_stats(d, p)[0]


def solve_with_stats(
    d: DualPlacementGraph,
    p: AcoParams | None = None,
    pheromones: PheromonePair | None = None,
) -> tuple[ParetoArchive, SolveStats]:
    """:func:`solve`, also reporting the work done.

    If ``pheromones`` is given the colony starts from (and leaves its final
    state in) that pair instead of a fresh ``tau0`` matrix.
    """
    p = p or AcoParams()
    missing = d.unmeasured()
    if missing:
        e = d.edges[missing[0]]
        raise UnmeasuredGraphError(f"{len(missing)} unmeasured edges, first {e.src}->{e.dst}")
    cg = CompiledGraph(d)
    if pheromones is None:
        tau_t = np.full(len(d.edges), p.tau0)
        tau_c = np.full(len(d.edges), p.tau0)
    else:
        tau_t, tau_c = cg.to_compiled(pheromones)
    rng = np.random.default_rng(p.seed)
    lams = p.ant_lambdas()
    m = p.n_ants
    paths = np.zeros((m, cg.max_len), dtype=np.int64)
    lengths = np.zeros(m, dtype=np.int64)
    cost_t = np.zeros(m)
    cost_c = np.zeros(m)
    front: dict[tuple, tuple[float, float]] = {}
    stats = SolveStats()
    stale = 0
    for _ in range(p.n_iterations):
        uniforms = rng.random((m, cg.max_len, 2))
        steps = _kernels.construct_colony(
            cg.out_ptr, cg.edge_dst, cg.start, cg.end,
            tau_t, tau_c, cg.w_time, cg.w_cpu, lams,
            p.alpha, p.beta, p.q0, p.rho_local, p.tau0, p.tau_min, p.tau_max, EPS,
            uniforms, paths, lengths, cost_t, cost_c,
        )
        if steps < 0:
            raise SolverError("an ant reached a dead end")
        stats.iterations += 1
        stats.ant_steps += int(steps)
        keep = _kernels.iteration_front(paths, lengths, cost_t, cost_c)
        _kernels.deposit(
            tau_t, tau_c, p.rho_global, paths, lengths, keep, cost_t, cost_c,
            p.deposit_q, EPS, p.tau_min, p.tau_max,
        )
        changed = False
        for k in np.flatnonzero(keep):
            changed |= _merge(front, tuple(paths[k, : lengths[k]].tolist()), float(cost_t[k]), float(cost_c[k]))
        stale = 0 if changed else stale + 1
        if p.restart_after and stale >= p.restart_after:
            tau_t[:] = p.tau0
            tau_c[:] = p.tau0
            stats.restarts += 1
            stale = 0
    if pheromones is not None:
        cg.from_compiled(tau_t, tau_c, pheromones)
    archive = ParetoArchive()
    for edge_ids, (t, c) in front.items():
        archive.insert(PathSolution(cg.node_path(edge_ids), ObjectiveVector(t, c)))
    return archive, stats


def _merge(front: dict, key: tuple, t: float, c: float) -> bool:
    if key in front:
        return False
    for ft, fc in front.values():
        if ft <= t and fc <= c and (ft < t or fc < c):
            return False
    for k in [k for k, (ft, fc) in front.items() if t <= ft and c <= fc and (t < ft or c < fc)]:
        del front[k]
    front[key] = (t, c)
    return True
