"""Loopback execution harness: run a plan's methods in-process or on an HTTP "cloud" server.

Every method is a pure kernel ``payload -> payload``. A payload is an 8-byte
little-endian float64 input size followed by an opaque body. Kernel cost is
emulated with a sleep of ``work * ms_per_work / speed`` milliseconds, so the
local/remote trade-off is visible on a single desk machine.
"""

from __future__ import annotations

import base64
import contextlib
import functools
import json
import logging
import struct
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable

import numpy as np

from .callgraph import ObjectiveVector, PathSolution, Placement, parse_token
from .cost_sim import KAPPA, Workload, gen_benchmark
from .decision_engine import measure_overhead
from .trace import ExecutionTrace

log = logging.getLogger(__name__)

HEADER = struct.Struct("<d")
DEFAULT_MS_PER_WORK = 0.01


class RpcError(RuntimeError):
    """A remote invocation did not return an ``ok`` envelope."""


def make_payload(size: float, body: bytes = b"") -> bytes:
    return HEADER.pack(float(size)) + body


def split_payload(payload: bytes) -> tuple[float, bytes]:
    if len(payload) < HEADER.size:
        raise ValueError("payload shorter than its size header")
    return HEADER.unpack_from(payload)[0], payload[HEADER.size:]


def _mix(body: bytes, salt: int, out_len: int) -> bytes:
    # deterministic, placement-independent byte transform
    a = np.frombuffer(body, dtype=np.uint8).astype(np.uint32)
    if a.size == 0:
        a = np.zeros(1, dtype=np.uint32)
    a = (a * 33 + np.arange(a.size, dtype=np.uint32) * 7 + salt) % 251
    return np.resize(a.astype(np.uint8), max(out_len, 1)).tobytes()


@dataclass
class Kernel:
    name: str
    fn: Callable[[bytes], bytes]
    work: Callable[[float], float] = lambda size: 0.0
    bytes_in: Callable[[float], int] = lambda size: 0
    bytes_out: Callable[[float], int] = lambda size: 0


@dataclass
class MethodRegistry:
    """Method name -> kernel. Server and client build theirs the same way."""

    kernels: dict[str, Kernel] = field(default_factory=dict)
    ms_per_work: float = DEFAULT_MS_PER_WORK
    kappa: float = KAPPA

    def register(self, kernel: Kernel) -> None:
        if kernel.name in self.kernels:
            raise ValueError(f"method {kernel.name!r} already registered")
        self.kernels[kernel.name] = kernel

    def __contains__(self, name: str) -> bool:
        return name in self.kernels

    def __getitem__(self, name: str) -> Kernel:
        return self.kernels[name]

    def names(self) -> list[str]:
        return sorted(self.kernels)

    def invoke(self, name: str, payload: bytes, speed: float = 1.0, delay_ms: float = 0.0) -> bytes:
        """Run a kernel and burn its emulated time."""
        k = self.kernels[name]
        size = HEADER.unpack_from(payload)[0] if len(payload) >= HEADER.size else 0.0
        ms = k.work(size) * self.ms_per_work / speed + delay_ms
        if ms > 0:
            time.sleep(ms / 1000.0)
        return k.fn(payload)

    @classmethod
    def with_identity(cls, **kw) -> MethodRegistry:
        reg = cls(**kw)
        reg.register(Kernel("identity", lambda p: p))
        return reg

    @classmethod
    def from_workload(cls, w: Workload, **kw) -> MethodRegistry:
        """One kernel per method of the (recursion-collapsed) workload graph."""
        reg = cls.with_identity(**kw)
        for m in w.graph.methods:
            reg.register(_workload_kernel(w, m.id, m.name))
        return reg


@functools.lru_cache(maxsize=256)
def _graph_at(w: Workload, size: float):
    return w.at(size).graph


def _workload_kernel(w: Workload, mid: int, name: str) -> Kernel:
    def fn(payload: bytes) -> bytes:
        size, body = split_payload(payload)
        out_len = _graph_at(w, size).method(mid).bytes_out
        return make_payload(size, _mix(body, mid + 1, out_len))

    return Kernel(
        name,
        fn,
        work=lambda s: _graph_at(w, s).method(mid).work_units,
        bytes_in=lambda s: _graph_at(w, s).method(mid).bytes_in,
        bytes_out=lambda s: _graph_at(w, s).method(mid).bytes_out,
    )


@dataclass(frozen=True)
class RemoteEndpoint:
    host: str = "127.0.0.1"
    port: int = 0
    base_path: str = ""
    artificial_slowdown: float = 10.0  # server speed = device speed * slowdown
    artificial_delay_ms: float = 0.0
    timeout_s: float = 30.0

    def __post_init__(self):
        if self.artificial_slowdown <= 0:
            raise ValueError("artificial_slowdown must be positive")
        if self.artificial_delay_ms < 0:
            raise ValueError("artificial_delay_ms must be >= 0")

    @property
    def base(self) -> str:
        return "/" + self.base_path.strip("/") if self.base_path.strip("/") else ""

    def url(self, method: str) -> str:
        return f"http://{self.host}:{self.port}{self.base}/invoke/{method}"


# -- server -------------------------------------------------------------------


def _envelope(status: str, result: bytes = b"", server_ms: float = 0.0) -> bytes:
    body = {"status": status, "result": base64.b64encode(result).decode("ascii"), "server_ms": server_ms}
    return json.dumps(body).encode()


def _handler(registry: MethodRegistry, endpoint: RemoteEndpoint):
    prefix = endpoint.base + "/invoke/"

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            log.debug("rpc: " + fmt, *args)

        def _reply(self, code: int, body: bytes):
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self):
            t0 = time.perf_counter()
            raw = self.rfile.read(int(self.headers.get("Content-Length", 0)))
            if not self.path.startswith(prefix):
                self._reply(404, _envelope("error"))
                return
            route = self.path[len(prefix):]
            try:
                req = json.loads(raw)
                method = req["method"]
                args = base64.b64decode(req["args"], validate=True)
            except (ValueError, KeyError, TypeError):
                self._reply(400, _envelope("error"))
                return
            if method != route:
                self._reply(400, _envelope("error"))
                return
            if method not in registry:
                self._reply(404, _envelope("unknown-method"))
                return
            try:
                out = registry.invoke(method, args, endpoint.artificial_slowdown, endpoint.artificial_delay_ms)
            except Exception:
                log.exception("kernel %s failed", method)
                self._reply(500, _envelope("error"))
                return
            self._reply(200, _envelope("ok", out, (time.perf_counter() - t0) * 1000.0))

    return Handler


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    request_queue_size = 128  # the default of 5 resets bursts of concurrent clients


class ServerHandle:
    """A running loopback server. Use as a context manager or call :meth:`shutdown`."""

    def __init__(self, httpd: ThreadingHTTPServer, endpoint: RemoteEndpoint):
        self._httpd = httpd
        self.endpoint = endpoint
        self._thread = threading.Thread(target=httpd.serve_forever, name="offload-rpc", daemon=True)
        self._thread.start()

    @property
    def port(self) -> int:
        return self.endpoint.port

    def shutdown(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)

    def __enter__(self) -> ServerHandle:
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()


def serve(registry: MethodRegistry, endpoint: RemoteEndpoint) -> ServerHandle:
    """Expose every kernel at ``POST {base}/invoke/{method}``. Port 0 picks a free port."""
    httpd = _Server((endpoint.host, endpoint.port), _handler(registry, endpoint))
    bound = RemoteEndpoint(
        endpoint.host,
        httpd.server_address[1],
        endpoint.base_path,
        endpoint.artificial_slowdown,
        endpoint.artificial_delay_ms,
        endpoint.timeout_s,
    )
    return ServerHandle(httpd, bound)


# -- client -------------------------------------------------------------------


def invoke_remote(endpoint: RemoteEndpoint, method: str, payload: bytes, run_id: str = "") -> bytes:
    body = json.dumps({"method": method, "args": base64.b64encode(payload).decode("ascii"), "run_id": run_id})
    req = urllib.request.Request(
        endpoint.url(method), data=body.encode(), headers={"Content-Type": "application/json"}, method="POST"
    )
    try:
        with urllib.request.urlopen(req, timeout=endpoint.timeout_s) as resp:
            env = json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        try:
            env = json.loads(exc.read())
        except ValueError:
            raise RpcError(f"{method}: HTTP {exc.code}") from exc
    if env.get("status") != "ok":
        raise RpcError(f"{method}: {env.get('status')}")
    return base64.b64decode(env["result"])


def reachable(endpoint: RemoteEndpoint) -> bool:
    try:
        invoke_remote(endpoint, "identity", make_payload(0.0))
    except (OSError, RpcError, ValueError):
        return False
    return True


def run_plan(plan: PathSolution, registry: MethodRegistry, endpoint: RemoteEndpoint | None,
             payload: bytes, method_names: dict[int, str] | None = None, run_id: str = "",
             device_speed: float = 1.0) -> ExecutionTrace:
    """Execute ``plan`` sequentially and measure wall time per method.

    ``method_names`` maps plan method ids to registry names (default: ``str(id)``).
    If a remote call fails, that method and every later one run locally and the
    trace is marked degraded; trace tokens record where each method actually ran.
    """
    names = method_names or {}
    tokens, costs = [], {}
    data = payload
    requests = 0
    degraded = False
    for tok in plan.tokens:
        node = parse_token(tok)
        name = names.get(node.method, str(node.method))
        size, _ = split_payload(data)
        kernel = registry[name]
        placement = node.placement
        if placement is Placement.REMOTE and not degraded:
            if endpoint is None:
                raise RpcError("plan has remote methods but no endpoint")
            t0 = time.perf_counter()
            try:
                requests += 1
                out = invoke_remote(endpoint, name, data, run_id)
            except (OSError, RpcError, ValueError) as exc:
                log.warning("remote %s failed (%s); finishing locally", name, exc)
                degraded = True
            else:
                ms = (time.perf_counter() - t0) * 1000.0
                cpu = registry.kappa * (len(data) + len(out))
                tokens.append(f"{node.method}@R")
                costs[node.method] = ObjectiveVector(ms, cpu)
                data = out
                continue
        t0 = time.perf_counter()
        out = registry.invoke(name, data, device_speed)
        ms = (time.perf_counter() - t0) * 1000.0
        tokens.append(f"{node.method}@L")
        costs[node.method] = ObjectiveVector(ms, kernel.work(size))
        data = out
    return ExecutionTrace(tokens=tokens, per_method_costs=costs, output=data, degraded=degraded, requests=requests)


def initial_payload(w: Workload, size: float | None = None) -> bytes:
    s = w.size if size is None else size
    g = _graph_at(w, s)
    n = max(g.method(g.entry).bytes_in, 8)
    return make_payload(s, (np.arange(n, dtype=np.uint32) % 251).astype(np.uint8).tobytes())


@contextlib.contextmanager
def rpc_executor_factory(spec):
    """Yield an executor factory for :func:`experiments.run_series` backed by a loopback server.

    With ``spec.rpc.port == 0`` a private server is started and torn down on exit;
    otherwise the configured endpoint must already be serving.
    """
    from .experiments import ExecutorUnavailable

    w0 = gen_benchmark(spec.benchmark)
    registry = MethodRegistry.from_workload(w0, ms_per_work=spec.rpc.ms_per_work, kappa=spec.kappa)
    ep = RemoteEndpoint(spec.rpc.host, spec.rpc.port, spec.rpc.base_path, spec.rpc.slowdown, spec.rpc.delay_ms)
    handle = None
    if ep.port == 0:
        try:
            handle = serve(registry, ep)
        except OSError as exc:
            raise ExecutorUnavailable(f"cannot start loopback server: {exc}") from exc
        ep = handle.endpoint
    elif not reachable(ep):
        raise ExecutorUnavailable(f"no offload server at {ep.host}:{ep.port}")
    counter = iter(range(1 << 62))

    def factory(spec_, w: Workload):
        names = {m.id: m.name for m in w.graph.methods}
        payload = initial_payload(w)

        def run(plan):
            return run_plan(plan, registry, ep, payload, names, f"{w.name}-{next(counter)}", spec_.device.cpu_speed)

        return run, run

    try:
        yield factory
    finally:
        if handle is not None:
            handle.shutdown()


__all__ = [
    "DEFAULT_MS_PER_WORK",
    "Kernel",
    "MethodRegistry",
    "RemoteEndpoint",
    "RpcError",
    "ServerHandle",
    "initial_payload",
    "invoke_remote",
    "make_payload",
    "measure_overhead",
    "reachable",
    "rpc_executor_factory",
    "run_plan",
    "serve",
    "split_payload",
]
