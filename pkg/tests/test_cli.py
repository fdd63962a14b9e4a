"""Command-line interface: every subcommand, wire formats, exit codes."""

import json

import numpy as np
import pytest

from cvar_ldm.cli import main
from cvar_ldm.fading import Rayleigh, sample_gains
from cvar_ldm.ldm import LayerAllocation


@pytest.fixture()
def gains_csv(tmp_path):
    path = tmp_path / "gains.csv"
    sample_gains(Rayleigh(1.0), 60, 12).to_csv(path)
    return str(path)


def _run(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_baseline_closed_form(capsys, tmp_path):
    out_file = tmp_path / "base.json"
    code, out, _ = _run(
        capsys, ["baseline", "--power-db", "20", "--out", str(out_file)]
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["method"] == "closed-form"
    assert payload["expected_rate"] == pytest.approx(3.97659973760885, abs=1e-3)
    assert json.loads(out_file.read_text()) == payload


def test_baseline_quadrature_model(capsys):
    code, out, _ = _run(
        capsys, ["baseline", "--model", '{"kind": "rician", "nu": 2.0, "var": 1.0}']
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["method"] == "quadrature"
    assert payload["u1"] > payload["u0"] > 0
    assert payload["expected_rate"] > 0


def test_optimize_outputs_allocation_and_trace(capsys, gains_csv, tmp_path):
    trace = tmp_path / "trace.csv"
    alloc_file = tmp_path / "alloc.json"
    code, out, _ = _run(
        capsys,
        [
            "optimize", "--data", gains_csv, "--m", "2", "--beta", "0.5",
            "--config", '{"max_iters": 500}',
            "--trace", str(trace), "--out", str(alloc_file),
        ],
    )
    assert code == 0
    alloc = LayerAllocation.from_json(out)
    assert alloc.s.size == 2 and abs(alloc.lam.sum() - 1.0) < 1e-12
    assert trace.read_text().splitlines()[0] == "iter,objective"
    assert LayerAllocation.from_json(alloc_file.read_text()).s.size == 2


def test_optimize_seeded_random_init_reproducible(capsys, gains_csv):
    argv = [
        "optimize", "--data", gains_csv, "--m", "2", "--seed", "7",
        "--config", '{"init": "random", "max_iters": 200}',
    ]
    code1, out1, _ = _run(capsys, argv)
    code2, out2, _ = _run(capsys, argv)
    assert code1 == code2 == 0
    assert out1 == out2


def test_evaluate_with_data_and_model(capsys, gains_csv, tmp_path):
    _, alloc_json, _ = _run(
        capsys, ["optimize", "--data", gains_csv, "--m", "2", "--beta", "1.0"]
    )
    alloc_file = tmp_path / "alloc.json"
    alloc_file.write_text(alloc_json)

    code, out, _ = _run(
        capsys, ["evaluate", "--alloc", str(alloc_file), "--data", gains_csv, "--beta", "0.2"]
    )
    assert code == 0
    report = json.loads(out)
    assert report["oracle"] == "empirical" and report["n_used"] == 12
    assert 0.0 <= report["cvar_rate"] <= report["outage_rate"] + 1e-9

    code, out, _ = _run(
        capsys,
        [
            "evaluate", "--alloc", str(alloc_file),
            "--model", '{"kind": "rayleigh", "var": 1.0}',
            "--beta", "0.2", "--format", "csv",
        ],
    )
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "mean_rate,outage_rate,cvar_rate,beta,n_used,oracle"
    assert lines[1].endswith("analytic")


def test_evaluate_requires_exactly_one_population(capsys, gains_csv, tmp_path):
    alloc_file = tmp_path / "alloc.json"
    alloc_file.write_text(
        LayerAllocation(s=np.array([1.0]), lam=np.array([1.0])).to_json()
    )
    code, _, err = _run(capsys, ["evaluate", "--alloc", str(alloc_file)])
    assert code == 2 and "exactly one" in err
    code, _, err = _run(
        capsys,
        [
            "evaluate", "--alloc", str(alloc_file), "--data", gains_csv,
            "--model", '{"kind": "rayleigh", "var": 1.0}',
        ],
    )
    assert code == 2


def test_meta_train_from_directory(capsys, tmp_path):
    task_dir = tmp_path / "tasks"
    task_dir.mkdir()
    for i in range(2):
        sample_gains(Rayleigh(1.0), 12, 100 + i).to_csv(task_dir / f"task_{i}.csv")
    trace = tmp_path / "meta_trace.csv"
    code, out, _ = _run(
        capsys,
        [
            "meta-train", "--tasks", str(task_dir), "--m", "2", "--beta", "0.5",
            "--config", '{"meta_iters": 20, "seed": 3}', "--trace", str(trace),
        ],
    )
    assert code == 0
    payload = json.loads(out)
    assert len(payload["u"]) == 2 and len(payload["lambda"]) == 2
    assert abs(sum(payload["lambda"]) - 1.0) < 1e-9
    assert np.isfinite(payload["objective"])
    assert trace.read_text().splitlines()[0] == "iter,objective"


def test_meta_train_from_task_json(capsys):
    tasks = '{"n": 10, "seed": 2, "models": [{"kind": "rayleigh", "var": 1.0}, {"kind": "rician", "nu": 2.0, "var": 1.0}]}'
    code, out, _ = _run(
        capsys,
        ["meta-train", "--tasks", tasks, "--m", "2", "--config", '{"meta_iters": 10, "seed": 1}'],
    )
    assert code == 0
    assert len(json.loads(out)["u"]) == 2


def test_bound_kinds(capsys):
    code, out, _ = _run(
        capsys,
        ["bound", "--n", "1000", "--delta", "0.05", "--beta", "0.1", "--s", "10"],
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["kind"] == "cvar_gap" and payload["n"] == 1000
    assert payload["bound_value"] > 0

    code, out, _ = _run(
        capsys,
        [
            "bound", "--n", "1000", "--delta", "0.05", "--beta", "0.1", "--s", "10",
            "--kind", "ccdf-deviation",
        ],
    )
    assert json.loads(out)["kind"] == "ccdf_deviation"
    assert json.loads(out)["bound_value"] <= 1.0

    code, out, _ = _run(
        capsys,
        [
            "bound", "--n", "1000", "--delta", "0.05", "--beta", "0.1", "--s", "10",
            "--kind", "expected-gap",
        ],
    )
    assert json.loads(out)["kind"] == "expected_gap"


def test_experiment_writes_csv_and_png(capsys, tmp_path):
    out_csv = tmp_path / "sweep.csv"
    config = json.dumps(
        {
            "scenario": "custom",
            "grid": [12, 25],
            "n": 12,
            "m": 2,
            "replications": 2,
            "seed": 3,
            "optim": {"max_iters": 200},
        }
    )
    code, out, _ = _run(capsys, ["experiment", "--config", config, "--out", str(out_csv)])
    assert code == 0
    assert out.splitlines()[0] == "arm,sweep,mean,stderr,reps"
    lines = out_csv.read_text().splitlines()
    assert lines[0] == "sweep,mean,stderr,reps" and len(lines) == 3
    png = out_csv.with_suffix(".png")
    assert png.exists() and png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_experiment_no_plot_and_json_format(capsys, tmp_path):
    out_csv = tmp_path / "sweep.csv"
    config = '{"scenario": "custom", "grid": [10], "n": 10, "m": 1, "replications": 1, "seed": 1, "optim": {"max_iters": 100}}'
    code, out, _ = _run(
        capsys,
        ["experiment", "--config", config, "--out", str(out_csv), "--no-plot", "--format", "json"],
    )
    assert code == 0
    assert not out_csv.with_suffix(".png").exists()
    rows = json.loads(out)
    assert rows[0]["arm"] == "optimize" and rows[0]["reps"] == 1


def test_experiment_seed_override_changes_output(capsys):
    config = '{"scenario": "custom", "grid": [10], "n": 10, "m": 1, "replications": 1, "optim": {"max_iters": 100}}'
    _, out_a, _ = _run(capsys, ["experiment", "--config", config, "--seed", "1"])
    _, out_b, _ = _run(capsys, ["experiment", "--config", config, "--seed", "1"])
    _, out_c, _ = _run(capsys, ["experiment", "--config", config, "--seed", "2"])
    assert out_a == out_b
    assert out_a != out_c


def test_config_errors_exit_2(capsys, gains_csv):
    code, _, err = _run(capsys, ["optimize", "--data", "/does/not/exist.csv"])
    assert code == 2
    code, _, err = _run(
        capsys, ["optimize", "--data", gains_csv, "--m", "2", "--beta", "1.5"]
    )
    assert code == 2 and "beta" in err
    code, _, _ = _run(
        capsys, ["optimize", "--data", gains_csv, "--config", '{"bogus": 1}']
    )
    assert code == 2
    code, _, _ = _run(capsys, ["experiment", "--config", '{"scenario": "fig99"}'])
    assert code == 2
    code, _, _ = _run(capsys, ["experiment", "--config", "{broken json"])
    assert code == 2


def test_usage_errors_exit_2(capsys):
    assert main(["optimize"]) == 2  # missing required --data
    assert main(["no-such-command"]) == 2
    assert main(["optimize", "--data", "x.csv", "--unknown-flag"]) == 2
    capsys.readouterr()


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert main(["optimize", "--help"]) == 0
    capsys.readouterr()


def test_numerical_failure_exits_3(capsys, gains_csv):
    # a catastrophically large step overflows exp(u) and the run aborts
    code, _, err = _run(
        capsys,
        ["optimize", "--data", gains_csv, "--m", "2", "--config", '{"eta": 1e300, "max_iters": 5}'],
    )
    assert code == 3
    assert "numerical" in err.lower()
