"""Command line: transform, solve, decide, bench, serve, report.

Exit codes: 0 ok, 1 usage or input error, 2 executor error, 3 graph-state error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import callgraph as cg
from .aco_solver import AcoParams, UnmeasuredGraphError, load_params, solve
from .cost_sim import DEVICE, NETWORKS, SERVER, gen_benchmark, simulate, weigh, workload_from_graph
from .decision_engine import OffloadingEngine, RunReport, context_key, measure_overhead
from .experiments import SUMMARY_COLUMNS, ExecutorUnavailable, ExperimentSpec, cmd_bench
from .pareto import pareto_front

EXIT_OK, EXIT_USAGE, EXIT_EXECUTOR, EXIT_GRAPH = 0, 1, 2, 3

log = logging.getLogger("offload_aco")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _front_lines(archive) -> list[str]:
    sols = sorted(archive.solutions, key=lambda s: (s.cost.time_ms, s.cost.cpu_units, s.nodes))
    return [f"{s.path_string} ({_fmt(s.cost.time_ms)}, {_fmt(s.cost.cpu_units)})" for s in sols]


def _load_decision_graph(path: str, network: str) -> cg.DualPlacementGraph:
    obj = cg.load_any(path)
    if isinstance(obj, cg.CallGraph):
        # a call graph is weighed with the closed-form cost model
        return weigh(cg.collapse_recursion(obj), DEVICE, SERVER, NETWORKS[network])
    return obj


# -- subcommands ----------------------------------------------------------------


def cmd_transform(args) -> int:
    g = cg.load(args.graph)
    if args.collapse:
        g = cg.collapse_recursion(g)
    text = json.dumps(cg.dual_to_dict(cg.transform(g)), indent=2) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    d = _load_decision_graph(args.graph, args.network)
    if not d.fully_measured():
        raise UnmeasuredGraphError(f"{len(d.unmeasured())} edge(s) have no measured weight")
    if args.oracle:
        archive = pareto_front(d)
    else:
        params = load_params(args.params) if args.params else AcoParams()
        if args.seed is not None:
            params = replace(params, seed=args.seed)
        archive = solve(d, params)
    _emit("".join(line + "\n" for line in _front_lines(archive)), None)
    return EXIT_OK


def cmd_decide(args) -> int:
    if (args.graph is None) == (args.benchmark is None):
        raise UsageError("give either a call graph file or --benchmark")
    if args.benchmark:
        w = gen_benchmark(args.benchmark, args.size)
    else:
        w = workload_from_graph(cg.collapse_recursion(cg.load(args.graph)), "graph")
    params = load_params(args.params) if args.params else AcoParams()
    net = NETWORKS[args.network]
    engine = OffloadingEngine(
        w.graph,
        params,
        cache_enabled=args.cache == "on",
        invalidation_period=args.invalidate_every,
        seed=args.seed,
    )
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 1]))
    report = engine.run_online(args.runs, lambda plan: simulate(plan, w, None, DEVICE, SERVER, net, rng),
                               context_key(w.name, w.size, net.mbps))
    _emit(report.to_csv(), args.out)
    return EXIT_OK


def _bench_spec(args) -> ExperimentSpec:
    if args.spec:
        spec = ExperimentSpec.load(args.spec)
        if args.benchmark:
            spec = spec.with_overrides(benchmark=args.benchmark)
    elif args.benchmark:
        spec = ExperimentSpec(args.benchmark)
    else:
        raise UsageError("bench needs --spec or --benchmark")
    cache = None if args.cache is None else args.cache == "on"
    return spec.with_overrides(
        seed=args.seed,
        runs_per_series=args.runs,
        cache_enabled=cache,
        invalidation_period=args.invalidate_every,
        executor=args.executor,
        output=args.out,
        offload=False if args.no_offload else None,
    )


def cmd_bench_cli(args) -> int:
    spec = _bench_spec(args)
    text = cmd_bench(spec)
    if not spec.output:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_serve(args) -> int:
    from .offload_rpc import MethodRegistry, RemoteEndpoint, serve

    reg = MethodRegistry.from_workload(gen_benchmark(args.benchmark), ms_per_work=args.ms_per_work)
    ep = RemoteEndpoint(args.host, args.port, args.base_path, args.slowdown, args.delay_ms)
    try:
        handle = serve(reg, ep)
    except OSError as exc:
        raise ExecutorUnavailable(f"cannot bind {args.host}:{args.port}: {exc}") from exc
    print(f"serving {args.benchmark} on http://{handle.endpoint.host}:{handle.port}{handle.endpoint.base}", flush=True)
    try:
        if args.duration is not None:
            time.sleep(args.duration)
        else:
            while True:
                time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        handle.shutdown()
    return EXIT_OK


def cmd_report(args) -> int:
    with open(args.csv, newline="") as f:
        header = next(csv.reader(f), None)
        f.seek(0)
        if header and tuple(header) == SUMMARY_COLUMNS:
            rows = list(csv.reader(f))
            widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
            for r in rows:
                print("  ".join(v.rjust(w) for v, w in zip(r, widths)))
            return EXIT_OK
        try:
            report = RunReport.read_csv(f)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if not report.records:
        raise UsageError(f"{args.csv}: no runs")
    n = len(report.records)
    print(f"runs: {n}")
    print(f"solver invocations: {report.solver_invocations}")
    print(f"cache hits: {report.cache_hits} ({100.0 * report.cache_hits / n:.2f}%)")
    print(f"errors: {sum(1 for r in report.records if r.error)}")
    print(f"mean time_ms: {sum(r.time_ms for r in report.records) / n:.3f}")
    print(f"mean cpu_units: {sum(r.cpu_units for r in report.records) / n:.3f}")
    print(f"overhead: {100.0 * measure_overhead(report):.2f}%")
    return EXIT_OK


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="offload-aco", description="Bi-objective ant-colony offloading decisions.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("transform", help="call graph JSON -> dual-placement graph JSON")
    t.add_argument("graph")
    t.add_argument("--collapse", action="store_true", help="collapse recursive cycles first")
    t.add_argument("--out")
    t.set_defaults(func=cmd_transform)

    s = sub.add_parser("solve", help="print the Pareto front of a weighted graph")
    s.add_argument("graph", help="dual graph JSON, or a call graph weighed by the cost model")
    s.add_argument("--params", help="ACO parameters (key=value lines or JSON)")
    s.add_argument("--seed", type=int)
    s.add_argument("--oracle", action="store_true", help="exhaustive enumeration instead of the colony")
    s.add_argument("--network", choices=sorted(NETWORKS), default="good")
    s.set_defaults(func=cmd_solve)

    d = sub.add_parser("decide", help="run the online decide/execute/observe loop in the simulator")
    d.add_argument("graph", nargs="?")
    d.add_argument("--benchmark")
    d.add_argument("--size", type=float)
    d.add_argument("--runs", type=int, default=25)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--params")
    d.add_argument("--network", choices=sorted(NETWORKS), default="good")
    d.add_argument("--cache", choices=("on", "off"), default="on")
    d.add_argument("--invalidate-every", type=int)
    d.add_argument("--out")
    d.set_defaults(func=cmd_decide)

    b = sub.add_parser("bench", help="run the 25-run x 4-series protocol, print summary CSV")
    b.add_argument("--spec")
    b.add_argument("--benchmark")
    b.add_argument("--seed", type=int)
    b.add_argument("--runs", type=int)
    b.add_argument("--cache", choices=("on", "off"))
    b.add_argument("--invalidate-every", type=int)
    b.add_argument("--executor", choices=("sim", "rpc"))
    b.add_argument("--no-offload", action="store_true", help="force the all-local plan")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench_cli)

    v = sub.add_parser("serve", help="serve a benchmark's kernels over HTTP")
    v.add_argument("--benchmark", required=True)
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--port", type=int, default=8080)
    v.add_argument("--base-path", default="")
    v.add_argument("--slowdown", type=float, default=10.0)
    v.add_argument("--delay-ms", type=float, default=5.0)
    v.add_argument("--ms-per-work", type=float, default=0.01)
    v.add_argument("--duration", type=float, help="stop after this many seconds")
    v.set_defaults(func=cmd_serve)

    r = sub.add_parser("report", help="summarize a run CSV or pretty-print a summary CSV")
    r.add_argument("csv")
    r.set_defaults(func=cmd_report)
    return p


def _setup_logging() -> None:
    level = os.environ.get("OFFLOAD_ACO_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ExecutorUnavailable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXECUTOR
    except cg.GraphFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except cg.GraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GRAPH
    except (UsageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
