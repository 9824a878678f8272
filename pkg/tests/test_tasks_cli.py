import csv
import json

import numpy as np
import pytest

from cito import bench, cli, tasks
from cito.report import SolverReport

# a box that is already at its goal with the virtual forces switched off
QUIET = ["contact.k_init=0", "horizon=0.2"]


class TestResolve:
    @pytest.mark.parametrize("task, disp", [("1a", [-0.1, 0.0]), ("2a", [0.0, -0.1]), ("3a", [0.0, 0.1])])
    def test_presets(self, task, disp):
        cfg = tasks.resolve(task=task)
        spec = tasks.TaskSpec.from_config(cfg)
        assert list(spec.displacement) == disp
        assert spec.horizon == 1.0 and spec.n_steps == 10
        assert spec.control_period == pytest.approx(0.1)

    def test_layer_order(self, tmp_path):
        f = tmp_path / "c.json"
        f.write_text(json.dumps({"box": {"mass": 0.3}, "horizon": 2.0}))
        cfg = tasks.resolve(task="1a", file=f, overrides=["box.mass=0.4"], horizon=0.5)
        assert cfg["box"]["mass"] == 0.4
        assert cfg["horizon"] == 0.5
        assert cfg["box"]["mu"] == tasks.DEFAULTS["box"]["mu"]

    def test_unknown_keys_listed_together(self):
        with pytest.raises(tasks.ConfigError) as exc:
            tasks.resolve(overrides=["box.colour=1", "scvx.speed=2", "banana=3"])
        msg = str(exc.value)
        for key in ("box.colour", "scvx.speed", "banana"):
            assert key in msg

    @pytest.mark.parametrize("override", ["horizon=-1", "n_steps=0", "solver=\"newton\"", "box.mass=-1",
                                          "scvx.kappa=-5", "displacement=[1,2,3]"])
    def test_invalid_values(self, override):
        with pytest.raises(tasks.ConfigError):
            tasks.resolve(overrides=[override])

    def test_malformed_override(self):
        with pytest.raises(tasks.ConfigError):
            tasks.parse_override("no-equals-sign")

    def test_override_parsing(self):
        assert tasks.parse_override("scvx.kappa=500") == {"scvx": {"kappa": 500}}
        assert tasks.parse_override("task=1a") == {"task": "1a"}
        assert tasks.parse_override("robot.q0=[1,2,3,4]") == {"robot": {"q0": [1, 2, 3, 4]}}

    @pytest.mark.parametrize("horizon, n", [(0.75, 8), (1.0, 10), (2.0, 20)])
    def test_step_count_follows_control_period(self, horizon, n):
        cfg = tasks.resolve(horizon=horizon)
        assert tasks.n_steps(cfg) == n
        world = tasks.build_world(cfg)
        assert world.dt_inner * world.substeps * n == pytest.approx(horizon)

    def test_velocity_penalty_only_for_ilqr(self):
        p_s = tasks.build_problem(tasks.resolve(solver="scvx"))
        p_i = tasks.build_problem(tasks.resolve(solver="ilqr"))
        assert np.all(p_s.cost.state_weights == 0.0)
        assert np.all(p_i.cost.state_weights[p_i.cost.state_weights > 0] == 1e-3)

    def test_initial_guess(self):
        cfg = tasks.resolve()
        U = tasks.initial_controls(cfg, tasks.build_problem(cfg))
        assert np.all(U[:, :4] == 0.0) and np.all(U[:, 4:] == 5.0)


class TestBench:
    @pytest.mark.parametrize("solver", ["scvx", "ilqr"])
    def test_zero_displacement_converges_immediately(self, solver, tmp_path):
        cfg = tasks.resolve(task="custom", overrides=QUIET, solver=solver)
        art = bench.run(cfg, tmp_path / solver)
        m = art.metrics
        assert m["status"] == "converged"
        assert m["iterations"] == 1
        assert m["psi[N s]"] == 0.0
        assert m["final_cost"] == 0.0
        for name in ("config.json", "convergence.csv", "trajectory.json", "metrics.json",
                     "convergence.png", "trajectory.png"):
            assert (tmp_path / solver / name).stat().st_size > 0

    def test_snapshot_reproduces_outputs(self, tmp_path):
        cfg = tasks.resolve(task="custom", overrides=["horizon=0.2", "displacement=[-0.01,0]"])
        a = bench.run(cfg, tmp_path / "a", figures=False)
        snap = json.loads((tmp_path / "a" / "config.json").read_text())
        b = bench.run(snap, tmp_path / "b", figures=False)
        assert np.array_equal(a.report.U, b.report.U)
        ta = json.loads((tmp_path / "a" / "trajectory.json").read_text())
        tb = json.loads((tmp_path / "b" / "trajectory.json").read_text())
        assert ta == tb
        timing = {k for k in a.metrics if k.startswith("t_")}
        assert {k: v for k, v in a.metrics.items() if k not in timing} == \
               {k: v for k, v in b.metrics.items() if k not in timing}

    def _fake(self, task, solver, cost=0.5):
        metrics = {c: 0.0 for c in bench.COMPARISON_COLUMNS}
        metrics.update(task=task, solver=solver, final_cost=cost)
        metrics["horizon[s]"] = 1.0
        return bench.RunArtifact(config={}, metrics=metrics, report=SolverReport(solver))

    def test_comparison_against_itself_has_zero_differences(self):
        arts = [self._fake("1a", "scvx")]
        rows_a, rows_b = bench.comparison_rows(arts), bench.comparison_rows(arts)
        assert rows_a == rows_b

    def test_mismatched_task_sets_rejected(self):
        arts = [self._fake("1a", "scvx"), self._fake("1a", "ilqr"), self._fake("2a", "scvx")]
        with pytest.raises(bench.ComparisonError):
            bench.comparison_rows(arts)

    def test_timing_table_averages_over_tasks(self):
        arts = [self._fake("1a", "scvx"), self._fake("2a", "scvx")]
        arts[0].metrics["t_t[s]"], arts[1].metrics["t_t[s]"] = 2.0, 4.0
        arts[0].metrics["t_bp[s]"] = arts[1].metrics["t_bp[s]"] = np.nan
        table = bench.timing_table(arts)
        assert table[0]["t_t[s]"] == 3.0
        assert np.isnan(table[0]["t_bp[s]"])

    def test_write_comparison(self, tmp_path):
        arts = [self._fake("1a", "scvx"), self._fake("1a", "ilqr", cost=2.0)]
        path = bench.write_comparison(arts, tmp_path / "comparison.csv")
        with path.open() as fh:
            rows = list(csv.DictReader(fh))
        assert [r["solver"] for r in rows] == ["scvx", "ilqr"]
        assert float(rows[1]["final_cost"]) == 2.0

    def test_sweep_rejects_non_positive_horizons(self):
        with pytest.raises(tasks.ConfigError):
            bench.sweep_horizon(tasks.resolve(), [1.0, 0.0])


class TestCli:
    def test_run_writes_artifacts(self, tmp_path, capsys):
        code = cli.main(["run", "--task", "custom", "--out-dir", str(tmp_path), "--params", *QUIET])
        assert code == cli.EXIT_OK
        assert (tmp_path / "metrics.json").exists() and (tmp_path / "trajectory.png").exists()
        assert "status=converged" in capsys.readouterr().out

    def test_single_element_sweep_matches_run(self, tmp_path):
        code = cli.main(["sweep", "--task", "custom", "--horizons", "0.2", "--out-dir", str(tmp_path),
                         "--no-figures", "--params", "contact.k_init=0"])
        assert code == cli.EXIT_OK
        with (tmp_path / "horizon_sweep.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1 and rows[0]["status"] == "converged"
        cfg = tasks.resolve(task="custom", overrides=QUIET)
        assert float(rows[0]["final_cost"]) == bench.run(cfg, figures=False).metrics["final_cost"]

    def test_unknown_key_exit_code(self, capsys):
        code = cli.main(["run", "--params", "box.colour=red"])
        assert code == cli.EXIT_CONFIG
        assert "box.colour" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert cli.main(["run", "--config", str(tmp_path / "nope.json")]) == cli.EXIT_CONFIG

    def test_solver_error_exit_code(self, tmp_path, monkeypatch):
        def boom(*a, **k):
            raise bench.ComparisonError("no artifacts")

        monkeypatch.setattr(bench, "run", boom)
        assert cli.main(["run", "--out-dir", str(tmp_path)]) == cli.EXIT_SOLVER

    def test_bad_choice_exits_through_argparse(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["run", "--solver", "newton"])
        assert exc.value.code == 2
