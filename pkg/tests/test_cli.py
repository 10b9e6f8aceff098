import json
import subprocess
import sys

import numpy as np
import pytest

from offload_aco import callgraph as cg
from offload_aco.cli import main
from offload_aco.cost_sim import random_measured_graph


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_four_paths(capsys, four_paths_path):
    code, out, _ = run(capsys, "solve", str(four_paths_path))
    assert code == 0
    assert out.splitlines() == ["start-A-C-end (4, 5)", "start-B-E-end (6, 4)"]


def test_solve_single_path(capsys, tmp_path):
    d = cg.DualPlacementGraph(("start", "0@L", "end"), (cg.DualEdge("start", "0@L", cg.ObjectiveVector(2, 3), True),
                                                        cg.DualEdge("0@L", "end", cg.ZERO, True)))
    cg.save_dual(d, tmp_path / "one.json")
    code, out, _ = run(capsys, "solve", str(tmp_path / "one.json"))
    assert code == 0 and out.splitlines() == ["start-0@L-end (2, 3)"]


@pytest.mark.parametrize("seed", range(5))
def test_solve_matches_oracle_flag(capsys, tmp_path, seed):
    _, d = random_measured_graph(np.random.default_rng(seed), 10)
    path = tmp_path / "g.json"
    cg.save_dual(d, path)
    _, colony, _ = run(capsys, "solve", str(path), "--seed", str(seed))
    _, oracle, _ = run(capsys, "solve", str(path), "--oracle")
    assert set(colony.splitlines()) <= set(oracle.splitlines())


def test_solve_unmeasured_exit_3(capsys, fib_path, tmp_path):
    code, out, _ = run(capsys, "transform", str(fib_path))
    assert code == 0
    (tmp_path / "d.json").write_text(out)
    code, _, err = run(capsys, "solve", str(tmp_path / "d.json"))
    assert code == 3 and "measured" in err


def test_transform_cycle_exit_3(capsys, tmp_path):
    data = {"methods": [{"id": i, "name": f"m{i}", "work": 1, "bytes_in": 0, "bytes_out": 0, "pinned": i == 0}
                        for i in range(3)], "calls": [[0, 1], [1, 2], [2, 1]], "entry": 0, "exit": 2}
    (tmp_path / "c.json").write_text(json.dumps(data))
    code, _, err = run(capsys, "transform", str(tmp_path / "c.json"))
    assert code == 3 and "cyclic" in err
    code, out, _ = run(capsys, "transform", str(tmp_path / "c.json"), "--collapse")
    assert code == 0
    assert json.loads(out)["nodes"] == ["start", "0@L", "1@L", "1@R", "end"]


def test_bad_file_exit_1(capsys, tmp_path):
    (tmp_path / "x.json").write_text("{not json")
    code, _, _ = run(capsys, "solve", str(tmp_path / "x.json"))
    assert code == 1
    code, _, _ = run(capsys, "solve", str(tmp_path / "missing.json"))
    assert code == 1


def test_usage_error_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bench", "--runs", "many"])
    assert exc.value.code == 1
    code, _, _ = run(capsys, "bench")
    assert code == 1


def test_rpc_unavailable_exit_2(capsys, tmp_path):
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps({"benchmark": "fib", "runs_per_series": 1, "executor": "rpc",
                                "rpc": {"port": 1}}))
    code, _, err = run(capsys, "bench", "--spec", str(spec))
    assert code == 2 and "no offload server" in err


def test_decide_writes_run_csv(capsys, fib_path, tmp_path):
    out = tmp_path / "runs.csv"
    code, _, _ = run(capsys, "decide", str(fib_path), "--runs", "6", "--out", str(out))
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "run,plan,time_ms,cpu_units,decision_ms,source,error" and len(lines) == 7
    code, text, _ = run(capsys, "report", str(out))
    assert code == 0 and "runs: 6" in text


def test_bench_csv_byte_identical(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert run(capsys, "bench", "--benchmark", "det", "--runs", "6", "--seed", "4", "--out", str(p))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    head = a.read_text().splitlines()[0]
    assert head == "device,benchmark,series,success_pct,time_gain_pct,cpu_gain_pct,overhead_pct,cache_hit_pct"


def test_bench_no_offload_zero_gain(capsys):
    code, out, _ = run(capsys, "bench", "--benchmark", "integrate", "--runs", "3", "--no-offload")
    assert code == 0
    rows = [line.split(",") for line in out.splitlines()[1:]]
    assert len(rows) == 4 and all(r[4] == "0.00" for r in rows)


def test_bench_spec_file_and_overrides(capsys, tmp_path):
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps({"benchmark": "matmul", "series": [50, 80], "runs_per_series": 2,
                                "profiles": {"network": "medium"}, "aco": {"n_iterations": 20},
                                "cache": {"enabled": False}}))
    code, out, _ = run(capsys, "bench", "--spec", str(spec), "--runs", "3", "--cache", "on", "--invalidate-every", "2")
    assert code == 0 and len(out.splitlines()) == 3


def test_report_pretty_prints_summary(capsys, tmp_path):
    out = tmp_path / "s.csv"
    run(capsys, "bench", "--benchmark", "fib", "--runs", "2", "--out", str(out))
    code, text, _ = run(capsys, "report", str(out))
    assert code == 0 and "success_pct" in text


def test_module_entry_point(four_paths_path):
    res = subprocess.run([sys.executable, "-m", "offload_aco", "solve", str(four_paths_path)], capture_output=True, text=True)
    assert res.returncode == 0 and "(6, 4)" in res.stdout


def test_log_level_env(four_paths_path):
    env_run = subprocess.run([sys.executable, "-m", "offload_aco", "solve", str(four_paths_path)],
                             capture_output=True, text=True, env={"OFFLOAD_ACO_LOG": "debug", "PATH": ""})
    assert env_run.returncode == 0
