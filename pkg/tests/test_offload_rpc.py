import base64
import json
import socket
import urllib.request
from concurrent.futures import ThreadPoolExecutor

import pytest

from offload_aco import callgraph as cg
from offload_aco.cost_sim import _dual, all_local_plan, gen_benchmark
from offload_aco.offload_rpc import (
    Kernel,
    MethodRegistry,
    RemoteEndpoint,
    RpcError,
    initial_payload,
    invoke_remote,
    make_payload,
    reachable,
    run_plan,
    serve,
    split_payload,
)


@pytest.fixture(scope="module")
def mc():
    w = gen_benchmark("montecarlo", 1)
    reg = MethodRegistry.from_workload(w, ms_per_work=0.0)
    with serve(reg, RemoteEndpoint(artificial_delay_ms=0.0)) as h:
        yield w, reg, h.endpoint


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def names(w):
    return {m.id: m.name for m in w.graph.methods}


def test_payload_header():
    p = make_payload(2.5, b"abc")
    assert split_payload(p) == (2.5, b"abc")
    with pytest.raises(ValueError):
        split_payload(b"123")


def test_identity_round_trip(mc):
    _, _, ep = mc
    p = make_payload(1.0, bytes(range(200)))
    assert invoke_remote(ep, "identity", p) == p


def test_wire_envelope(mc):
    _, _, ep = mc
    body = json.dumps({"method": "identity", "args": base64.b64encode(b"xyz").decode(), "run_id": "r1"}).encode()
    req = urllib.request.Request(ep.url("identity"), data=body, headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req) as resp:
        assert resp.headers["Content-Type"] == "application/json"
        env = json.loads(resp.read())
    assert env["status"] == "ok" and base64.b64decode(env["result"]) == b"xyz"
    assert env["server_ms"] >= 0


def test_unknown_method_keeps_server_up(mc):
    _, _, ep = mc
    with pytest.raises(RpcError, match="unknown-method"):
        invoke_remote(ep, "nope", make_payload(0))
    assert reachable(ep)


def test_route_must_match_method(mc):
    _, _, ep = mc
    body = json.dumps({"method": "other", "args": "", "run_id": ""}).encode()
    req = urllib.request.Request(ep.url("identity"), data=body, headers={"Content-Type": "application/json"})
    with pytest.raises(urllib.error.HTTPError) as exc:
        urllib.request.urlopen(req)
    assert json.loads(exc.value.read())["status"] == "error"


def test_concurrent_invocations(mc):
    w, reg, ep = mc
    name = w.graph.method(3).name
    payloads = [make_payload(1, bytes([i]) * (i + 8)) for i in range(32)]
    with ThreadPoolExecutor(32) as pool:
        got = list(pool.map(lambda p: invoke_remote(ep, name, p), payloads))
    assert got == [reg.invoke(name, p) for p in payloads]


def test_all_local_plan_sends_nothing(mc):
    w, reg, ep = mc
    tr = run_plan(all_local_plan(w.graph), reg, ep, initial_payload(w), names(w))
    assert tr.requests == 0 and not tr.degraded


def test_every_plan_gives_identical_output(mc):
    w, reg, ep = mc
    ref = run_plan(all_local_plan(w.graph), reg, None, initial_payload(w), names(w)).output
    for plan in cg.enumerate_paths(_dual(w.graph)):
        tr = run_plan(plan, reg, ep, initial_payload(w), names(w))
        assert tr.output == ref
        assert tr.token_string == plan.token_string
        assert tr.requests == plan.remote_count()


def test_identity_kernels_return_input():
    reg = MethodRegistry()
    for i in range(3):
        reg.register(Kernel(str(i), lambda p: p))
    reg.register(Kernel("identity", lambda p: p))
    g = cg.CallGraph([cg.MethodNode(0, "a", pinned_local=True), cg.MethodNode(1, "b"), cg.MethodNode(2, "c")],
                     [cg.CallEdge(0, 1), cg.CallEdge(1, 2)], 0, 2)
    payload = make_payload(3.0, b"hello")
    with serve(reg, RemoteEndpoint()) as h:
        for plan in cg.enumerate_paths(cg.transform(g)):
            assert run_plan(plan, reg, h.endpoint, payload).output == payload


def test_unreachable_server_degrades_to_local(mc):
    w, reg, _ = mc
    dead = RemoteEndpoint(port=free_port(), timeout_s=2.0)
    ref = run_plan(all_local_plan(w.graph), reg, None, initial_payload(w), names(w)).output
    plan = cg.enumerate_paths(_dual(w.graph))[-1]
    assert plan.remote_count() > 0
    tr = run_plan(plan, reg, dead, initial_payload(w), names(w))
    assert tr.degraded and tr.output == ref
    assert all(t.endswith("@L") for t in tr.tokens)


def test_mid_plan_failure_finishes_locally():
    w = gen_benchmark("montecarlo", 1)
    full = MethodRegistry.from_workload(w, ms_per_work=0.0)
    partial = MethodRegistry.with_identity(ms_per_work=0.0)
    partial.register(full[w.graph.method(1).name])  # server knows only the first offloadable method
    plan = cg.enumerate_paths(_dual(w.graph))[-1]  # all offloadable methods remote
    ref = run_plan(all_local_plan(w.graph), full, None, initial_payload(w), names(w)).output
    with serve(partial, RemoteEndpoint()) as h:
        tr = run_plan(plan, full, h.endpoint, initial_payload(w), names(w))
    assert tr.degraded and tr.output == ref
    assert tr.tokens[1] == "1@R" and tr.tokens[2] == "2@L"


def test_remote_without_endpoint_is_an_error():
    w = gen_benchmark("montecarlo", 1)
    reg = MethodRegistry.from_workload(w, ms_per_work=0.0)
    plan = cg.enumerate_paths(_dual(w.graph))[-1]
    with pytest.raises(RpcError):
        run_plan(plan, reg, None, initial_payload(w), names(w))


def test_endpoint_validation():
    with pytest.raises(ValueError):
        RemoteEndpoint(artificial_slowdown=0)
    assert RemoteEndpoint(port=9, base_path="/api/").url("x") == "http://127.0.0.1:9/api/invoke/x"


def test_base_path_routing():
    reg = MethodRegistry.with_identity()
    with serve(reg, RemoteEndpoint(base_path="svc")) as h:
        assert invoke_remote(h.endpoint, "identity", make_payload(1)) == make_payload(1)
