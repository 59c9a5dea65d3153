import csv
import json

import pytest

from switchocp.cli import ORACLE_MAX_N, RunConfig, bench_scaling, main, run


def _read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def ex1_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("ex1")
    code = main(["run", "example1_alt", "--on-indefinite", "continue", "--emit-trajectory", "--out", str(out)])
    return code, out


def test_run_writes_outputs(ex1_out):
    code, out = ex1_out
    assert code == 0
    info = json.loads((out / "summary.json").read_text())
    assert info["schema_version"] == 1 and info["status"] == "Converged" and info["converged"]
    assert info["t_s"][0] == pytest.approx(0.19213, abs=1e-4)
    assert info["i_s"] == [16]
    assert {"wall_s", "per_iteration_ms", "median_backward_ns", "median_forward_ns"} <= set(info["timings"])
    assert info["config"]["on_indefinite"] == "continue"
    rows = _read_csv(out / "convergence.csv")
    assert len(rows) == info["iterations"]
    assert float(rows[-1]["opt_error"]) > 1e-8 >= info["opt_error"]


def test_trajectory_is_time_ordered(ex1_out):
    _, out = ex1_out
    rows = _read_csv(out / "trajectory.csv")
    kinds = [r["kind"] for r in rows]
    assert kinds.count("switch") == 1 and kinds.count("stage") == 176
    ts = [float(r["t"]) for r in rows]
    assert ts == sorted(ts)
    sw = kinds.index("switch")
    assert rows[sw - 1]["mode"] == "1" and rows[sw]["mode"] == "2"


def test_nonconverged_exit_code(tmp_path):
    # abort mode stops at the first indefinite Newton system
    assert main(["run", "example1_alt", "--out", str(tmp_path)]) == 1
    info = json.loads((tmp_path / "summary.json").read_text())
    assert info["status"] == "AssumptionViolated" and info["detail"].startswith("iteration 1")


@pytest.mark.parametrize("argv", [
    ["run", "nosuch"],
    ["run", "example1", "--t-init", "5.0"],
    ["run", "example1", "--oracle-check"],
    ["run", "example1", "--config", "/nonexistent.json"],
])
def test_usage_errors_exit_2(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)]) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_config_file_and_overrides(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"problem": "example1_alt", "N": 40, "max_iters": 3,
                                    "on_indefinite": "continue"}))
    cfg = RunConfig.from_file(cfg_path, max_iters=5, N=None)
    assert (cfg.problem, cfg.N, cfg.max_iters) == ("example1_alt", 40, 5)
    cfg_path.write_text(json.dumps({"problem": "example1", "colour": "red"}))
    with pytest.raises(ValueError, match="colour"):
        RunConfig.from_file(cfg_path)


def test_oracle_check_column(tmp_path):
    code = main(["run", "example1_alt", "--N", "40", "--max-iters", "5", "--on-indefinite", "continue",
                 "--oracle-check", "--out", str(tmp_path)])
    assert code in (0, 1)
    rows = _read_csv(tmp_path / "convergence.csv")
    assert rows and all(float(r["oracle_dev"]) <= 1e-8 for r in rows)


def test_oracle_check_size_limit(tmp_path):
    cfg = RunConfig(problem="example1_alt", N=ORACLE_MAX_N + 1, oracle_check=True, out=str(tmp_path))
    with pytest.raises(ValueError, match="oracle"):
        run(cfg)


def test_bench_scaling_table(tmp_path):
    table, slope = bench_scaling("example1", [50, 100, 200], reps=5, dense_max_N=60)
    assert [r["N"] for r in table] == [50, 100, 200]
    assert table[0]["dense_ns"] != "" and table[-1]["dense_ns"] == ""
    assert 0.5 < slope < 1.6
    assert main(["run", "example1", "--bench-scaling", "20,40", "--bench-reps", "3", "--out", str(tmp_path)]) == 0
    rows = _read_csv(tmp_path / "scaling.csv")
    assert [r["N"] for r in rows] == ["20", "40"]


@pytest.mark.slow
def test_grid_refinement(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for N, out in ((175, a), (350, b)):
        assert main(["run", "example1_alt", "--N", str(N), "--on-indefinite", "continue", "--out", str(out)]) == 0
    ta = json.loads((a / "summary.json").read_text())["t_s"][0]
    tb = json.loads((b / "summary.json").read_text())["t_s"][0]
    assert abs(ta - tb) <= 5e-3
