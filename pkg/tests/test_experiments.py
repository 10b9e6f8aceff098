import pytest

from offload_aco.aco_solver import AcoParams
from offload_aco.cost_sim import NETWORKS
from offload_aco.experiments import SUMMARY_COLUMNS, ExperimentSpec, cmd_bench, format_csv, run_experiment, summary_rows


def test_spec_defaults_follow_benchmark_series():
    spec = ExperimentSpec("fib")
    assert spec.series == (500, 800, 1200, 1500) and spec.runs_per_series == 25


def test_spec_from_dict():
    spec = ExperimentSpec.from_dict({
        "benchmark": "det", "series": [3, 4], "runs_per_series": 5,
        "profiles": {"device": {"cpu_speed": 2.0, "label": "phone"}, "network": "poor"},
        "aco": {"n_ants": 6}, "cache": {"enabled": False, "invalidation_period": 4}, "seed": 9,
    })
    assert spec.series == (3, 4) and spec.device.label == "phone" and spec.network == NETWORKS["poor"]
    assert spec.aco == AcoParams(n_ants=6) and not spec.cache_enabled and spec.invalidation_period == 4


@pytest.mark.parametrize("bad", [{"benchmark": "fib", "color": 1}, {"series": [1]},
                                 {"benchmark": "fib", "runs_per_series": 0}, {"benchmark": "fib", "executor": "gpu"}])
def test_spec_rejects(bad):
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict(bad)


def test_overrides_ignore_none():
    spec = ExperimentSpec("fib")
    assert spec.with_overrides(seed=None) is spec
    assert spec.with_overrides(seed=3).seed == 3


def test_rows_sorted_and_formatted():
    spec = ExperimentSpec("integrate", series=(3.0, 1.0), runs_per_series=3)
    rows = summary_rows(spec, run_experiment(spec))
    assert [r["series"] for r in rows] == [1, 2]
    text = format_csv(rows)
    assert text.splitlines()[0] == ",".join(SUMMARY_COLUMNS)
    assert all(len(line.split(",")) == 8 for line in text.splitlines())


def test_disabled_offload_has_zero_gain():
    spec = ExperimentSpec("det", runs_per_series=4, offload=False)
    for r in summary_rows(spec, run_experiment(spec)):
        assert r["time_gain_pct"] == 0.0 and r["success_pct"] == 0.0


def test_output_file_written(tmp_path):
    out = tmp_path / "x.csv"
    spec = ExperimentSpec("fib", runs_per_series=2, output=str(out))
    assert cmd_bench(spec) == out.read_text()


def test_rpc_executor_small_run():
    spec = ExperimentSpec("montecarlo", series=(2,), runs_per_series=4, executor="rpc")
    res = run_experiment(spec)[0]
    assert len(res.offload_times) == 4
    assert all(not r.degraded and not r.error for r in res.report.records)
