"""Benchmark protocol: N runs per input series, offloaded vs local, summarized per series."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .aco_solver import AcoParams
from .cost_sim import (
    DEVICE,
    KAPPA,
    NETWORKS,
    SERVER,
    DeviceProfile,
    NetworkProfile,
    Workload,
    all_local_plan,
    gen_benchmark,
    simulate,
    success,
)
from .decision_engine import OffloadingEngine, RunRecord, RunReport, context_key, measure_overhead

SUMMARY_COLUMNS = (
    "device",
    "benchmark",
    "series",
    "success_pct",
    "time_gain_pct",
    "cpu_gain_pct",
    "overhead_pct",
    "cache_hit_pct",
)


class ExecutorUnavailable(RuntimeError):
    """The requested executor cannot run this experiment."""


@dataclass(frozen=True)
class RpcSettings:
    slowdown: float = 10.0
    delay_ms: float = 5.0
    ms_per_work: float = 0.01
    host: str = "127.0.0.1"
    port: int = 0  # 0 starts a private loopback server
    base_path: str = ""


@dataclass(frozen=True)
class ExperimentSpec:
    benchmark: str
    series: tuple[float, ...] = ()
    runs_per_series: int = 25
    device: DeviceProfile = DEVICE
    server: DeviceProfile = SERVER
    network: NetworkProfile = NETWORKS["good"]
    aco: AcoParams = field(default_factory=AcoParams)
    cache_enabled: bool = True
    invalidation_period: int | None = None
    executor: str = "sim"
    seed: int = 0
    output: str | None = None
    offload: bool = True
    preference: float = 0.5
    ema_factor: float = 1.0
    kappa: float = KAPPA
    rpc: RpcSettings = field(default_factory=RpcSettings)

    def __post_init__(self):
        if self.runs_per_series < 1:
            raise ValueError("runs_per_series must be >= 1")
        if self.executor not in ("sim", "rpc"):
            raise ValueError(f"unknown executor {self.executor!r}")
        if not self.series:
            object.__setattr__(self, "series", gen_benchmark(self.benchmark).series)
        object.__setattr__(self, "series", tuple(self.series))
        if not self.series:
            raise ValueError("series must not be empty")

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentSpec:
        allowed = {"benchmark", "series", "runs_per_series", "profiles", "aco", "cache", "executor", "seed",
                   "output", "offload", "preference", "ema_factor", "kappa", "rpc"}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise ValueError(f"unknown experiment field {unknown[0]!r}")
        if "benchmark" not in data:
            raise ValueError("experiment spec needs a 'benchmark'")
        kw: dict = {"benchmark": data["benchmark"]}
        for name in ("series",):
            if name in data:
                kw[name] = tuple(data[name])
        for name in ("runs_per_series", "seed"):
            if name in data:
                kw[name] = int(data[name])
        for name in ("executor", "output"):
            if name in data:
                kw[name] = data[name]
        for name in ("offload",):
            if name in data:
                kw[name] = bool(data[name])
        for name in ("preference", "ema_factor", "kappa"):
            if name in data:
                kw[name] = float(data[name])
        profiles = data.get("profiles", {})
        if "device" in profiles:
            kw["device"] = DeviceProfile(**profiles["device"])
        if "server" in profiles:
            kw["server"] = DeviceProfile(**{"label": "server", **profiles["server"]})
        if "network" in profiles:
            net = profiles["network"]
            kw["network"] = NETWORKS[net] if isinstance(net, str) else NetworkProfile(**net)
        if "aco" in data:
            kw["aco"] = AcoParams.from_mapping(data["aco"])
        cache = data.get("cache", {})
        if "enabled" in cache:
            kw["cache_enabled"] = bool(cache["enabled"])
        if "invalidation_period" in cache:
            kw["invalidation_period"] = cache["invalidation_period"]
        if "rpc" in data:
            kw["rpc"] = RpcSettings(**data["rpc"])
        return cls(**kw)

    @classmethod
    def load(cls, path) -> ExperimentSpec:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_overrides(self, **changes) -> ExperimentSpec:
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes) if changes else self


@dataclass
class SeriesResult:
    series: int
    size: float
    report: RunReport
    local_times: list[float]
    offload_times: list[float]
    local_cpu: list[float]
    offload_cpu: list[float]

    def row(self, device: str, benchmark: str) -> dict:
        n = len(self.local_times)
        wins = sum(o < loc for o, loc in zip(self.offload_times, self.local_times))
        time_gain = np.mean([(loc - o) / loc * 100.0 for o, loc in zip(self.offload_times, self.local_times)])
        cpu_gain = np.mean([(loc - o) / loc * 100.0 for o, loc in zip(self.offload_cpu, self.local_cpu)])
        return {
            "device": device,
            "benchmark": benchmark,
            "series": self.series,
            "success_pct": 100.0 * wins / n,
            "time_gain_pct": float(time_gain),
            "cpu_gain_pct": float(cpu_gain),
            "overhead_pct": 100.0 * measure_overhead(self.report),
            "cache_hit_pct": 100.0 * self.report.cache_hits / n,
        }


def _series_seed(spec: ExperimentSpec, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([spec.seed, index])


def run_series(spec: ExperimentSpec, index: int, size: float, executor_factory=None) -> SeriesResult:
    """One series: a fresh engine, ``runs_per_series`` online runs, paired with local baselines."""
    w = gen_benchmark(spec.benchmark, size)
    # the engine stream ignores the series index so every series explores the
    # same way (common random numbers); only the simulator noise differs
    engine_ss = np.random.SeedSequence([spec.seed])
    off_ss, loc_ss = _series_seed(spec, index).spawn(2)
    engine = OffloadingEngine(
        w.graph,
        spec.aco,
        ema_factor=spec.ema_factor,
        preference=spec.preference,
        cache_enabled=spec.cache_enabled,
        invalidation_period=spec.invalidation_period,
        seed=int(engine_ss.generate_state(1)[0]),
    )
    key = context_key(spec.benchmark, size, spec.network.mbps)
    local = all_local_plan(w.graph)
    if executor_factory is None:
        run_plan, run_local = _sim_executors(spec, w, np.random.default_rng(off_ss), np.random.default_rng(loc_ss))
    else:
        run_plan, run_local = executor_factory(spec, w)
    pairs = []

    def execute(plan):
        base = run_local(local)
        trace = run_plan(plan) if spec.offload else base
        pairs.append((base, trace))
        return trace

    if spec.offload:
        report = engine.run_online(spec.runs_per_series, execute, key)
    else:
        report = RunReport()
        for i in range(spec.runs_per_series):
            t = execute(local)
            report.records.append(_record(i, t))
    return SeriesResult(
        series=index + 1,
        size=size,
        report=report,
        local_times=[b.total.time_ms for b, _ in pairs],
        offload_times=[t.total.time_ms for _, t in pairs],
        local_cpu=[b.total.cpu_units for b, _ in pairs],
        offload_cpu=[t.total.cpu_units for _, t in pairs],
    )


def _record(i, trace):
    tot = trace.total
    return RunRecord(i, trace.token_string, tot.time_ms, tot.cpu_units, 0.0, "local")


def _sim_executors(spec: ExperimentSpec, w: Workload, rng_off, rng_loc):
    def run_plan(plan):
        return simulate(plan, w, None, spec.device, spec.server, spec.network, rng_off, spec.kappa)

    def run_local(plan):
        return simulate(plan, w, None, spec.device, spec.server, spec.network, rng_loc, spec.kappa)

    return run_plan, run_local


def run_experiment(spec: ExperimentSpec, executor_factory=None) -> list[SeriesResult]:
    if spec.executor == "rpc" and executor_factory is None:
        from .offload_rpc import rpc_executor_factory

        with rpc_executor_factory(spec) as factory:
            return [run_series(spec, i, size, factory) for i, size in enumerate(spec.series)]
    return [run_series(spec, i, size, executor_factory) for i, size in enumerate(spec.series)]


def summary_rows(spec: ExperimentSpec, results: list[SeriesResult]) -> list[dict]:
    rows = [r.row(spec.device.label, spec.benchmark) for r in results]
    return sorted(rows, key=lambda r: (r["device"], r["benchmark"], r["series"]))


def format_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in rows:
        w.writerow(
            [
                r["device"],
                r["benchmark"],
                r["series"],
                *(f"{r[c]:.2f}" for c in SUMMARY_COLUMNS[3:]),
            ]
        )
    return buf.getvalue()


def cmd_bench(spec: ExperimentSpec) -> str:
    """Run the protocol and return the summary CSV text (also written to ``spec.output`` if set)."""
    text = format_csv(summary_rows(spec, run_experiment(spec)))
    if spec.output:
        Path(spec.output).write_text(text)
    return text


__all__ = [
    "SUMMARY_COLUMNS",
    "ExecutorUnavailable",
    "ExperimentSpec",
    "RpcSettings",
    "SeriesResult",
    "cmd_bench",
    "format_csv",
    "run_experiment",
    "run_series",
    "summary_rows",
]
