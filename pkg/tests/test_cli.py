"""Command-line layer: exit codes, the CSV log format, summary
round-trips, gain printing, and stand-up feasibility checks."""

import filecmp
import json
import math
import subprocess
import sys
from dataclasses import replace

import pytest

from rwusim.cli import (
    CSV_COLUMNS,
    RunSummary,
    build_parser,
    main,
    read_log_csv,
    summarize,
    summary_path,
    write_log_csv,
)
from rwusim.control import PAPER_K1, PAPER_K2
from rwusim.params import default_params, save_params
from rwusim.simloop import ConfigError, ScenarioConfig, run_scenario

DEG = math.pi / 180.0


@pytest.fixture(scope="module")
def params_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("params") / "robot.json"
    save_params(default_params(), path)
    return str(path)


@pytest.fixture(scope="module")
def weak_params_file(tmp_path_factory):
    # torque bound halved; the current limit scales with it so the
    # motor envelope stays self-consistent
    p = default_params()
    path = tmp_path_factory.mktemp("params") / "weak.json"
    save_params(p.with_changes(tau_max=0.5, i_max=0.5 / p.K_T), path)
    return str(path)


def write_config(tmp_path, name="scenario.json", **kw):
    doc = {"schema-version": 1, "maneuver": "balance", "duration": 1.0}
    doc.update(kw)
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


class TestSimulateExitCodes:
    def test_valid_balance_config(self, tmp_path, capsys):
        cj = write_config(tmp_path, initial={"q": [0.05, 0.05, 0, 0, 0],
                                             "dq": [0] * 5})
        out = tmp_path / "run.csv"
        assert main(["simulate", "--config", cj, "--out", str(out)]) == 0
        header = out.read_text().splitlines()[0]
        assert header == ",".join(CSV_COLUMNS)
        assert summary_path(out).exists()

    def test_malformed_config_names_bad_key(self, tmp_path, capsys):
        cj = write_config(tmp_path, torqueee=3)
        rc = main(["simulate", "--config", cj, "--out",
                   str(tmp_path / "x.csv")])
        assert rc == 1
        assert "torqueee" in capsys.readouterr().err

    def test_missing_schema_version(self, tmp_path, capsys):
        cj = tmp_path / "c.json"
        cj.write_text(json.dumps({"maneuver": "balance"}))
        rc = main(["simulate", "--config", str(cj), "--out",
                   str(tmp_path / "x.csv")])
        assert rc == 1
        assert "schema-version" in capsys.readouterr().err

    def test_unreadable_config(self, tmp_path, capsys):
        rc = main(["simulate", "--config", str(tmp_path / "nope.json"),
                   "--out", str(tmp_path / "x.csv")])
        assert rc == 1

    def test_invalid_json(self, tmp_path, capsys):
        cj = tmp_path / "c.json"
        cj.write_text("{not json")
        rc = main(["simulate", "--config", str(cj), "--out",
                   str(tmp_path / "x.csv")])
        assert rc == 1

    def test_weak_motor_standup_exits_2_with_clean_log(
            self, tmp_path, weak_params_file):
        # the bound sits below the static pivot requirement, so the
        # frame never lifts; the run still logs every tick
        cj = write_config(tmp_path, maneuver="standup", duration=3.0)
        out = tmp_path / "su.csv"
        rc = main(["simulate", "--config", cj, "--out", str(out),
                   "--params", weak_params_file])
        assert rc == 2
        rows = read_log_csv(out)
        assert len(rows) == 300
        assert rows[-1].t == pytest.approx(2.99)
        summ = json.loads(summary_path(out).read_text())
        assert summ["success"] is False

    def test_usage_error_exits_1_not_2(self, capsys):
        # argparse would exit 2 by default, colliding with the
        # controlled-failure code
        with pytest.raises(SystemExit) as ei:
            main(["simulate", "--config", "only.json"])
        assert ei.value.code == 1

    def test_unknown_subcommand_exits_1(self, capsys):
        with pytest.raises(SystemExit) as ei:
            main(["frobnicate"])
        assert ei.value.code == 1


class TestCsvFormat:
    def test_column_order(self):
        assert CSV_COLUMNS == (
            "t", "q1", "q2", "q3", "q4", "q5",
            "dq1", "dq2", "dq3", "dq4", "dq5",
            "x", "y", "q1A", "q2A", "q1G", "q2G", "q3G",
            "q1_hat", "q2_hat", "pivot_ax",
            "u1", "u2", "i1", "i2", "phase", "dist_flag")

    def test_floats_round_trip_exactly(self, tmp_path):
        cfg = ScenarioConfig(duration=0.5,
                             initial_q=(0.03, 0.02, 0, 0, 0))
        log = run_scenario(cfg)
        path = tmp_path / "log.csv"
        write_log_csv(log, path)
        rows = read_log_csv(path)
        assert len(rows) == len(log.rows)
        for a, b in zip(log.rows, rows):
            assert a.t == b.t
            assert a.q == b.q
            assert a.dq == b.dq
            assert (a.q1_hat, a.q2_hat, a.u1, a.u2) == \
                   (b.q1_hat, b.q2_hat, b.u1, b.u2)
            assert (a.phase, a.dist_flag) == (b.phase, b.dist_flag)

    def test_rejects_foreign_header(self, tmp_path):
        path = tmp_path / "alien.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ConfigError):
            read_log_csv(path)

    def test_rejects_short_row(self, tmp_path):
        path = tmp_path / "short.csv"
        path.write_text(",".join(CSV_COLUMNS) + "\n0.0,1.0\n")
        with pytest.raises(ConfigError):
            read_log_csv(path)


class TestDeterminism:
    def test_same_seed_byte_identical(self, tmp_path):
        cj = write_config(tmp_path, initial={"q": [0.05, 0.03, 0, 0, 0],
                                             "dq": [0] * 5})
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["simulate", "--config", cj, "--out", str(a),
                     "--seed", "11"]) == 0
        assert main(["simulate", "--config", cj, "--out", str(b),
                     "--seed", "11"]) == 0
        assert filecmp.cmp(a, b, shallow=False)
        assert summary_path(a).read_bytes() == summary_path(b).read_bytes()

    def test_seed_override_changes_log(self, tmp_path):
        cj = write_config(tmp_path, initial={"q": [0.05, 0.03, 0, 0, 0],
                                             "dq": [0] * 5})
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["simulate", "--config", cj, "--out", str(a), "--seed", "1"])
        main(["simulate", "--config", cj, "--out", str(b), "--seed", "2"])
        assert not filecmp.cmp(a, b, shallow=False)


class TestSummary:
    def test_round_trip_reproduces_summary_exactly(self, tmp_path):
        cj = write_config(
            tmp_path, duration=2.0,
            initial={"q": [0.05, 0.05, 0, 0, 0], "dq": [0] * 5},
            disturbances=[{"t_start": 0.8, "duration": 0.1,
                           "force": [0, 3, 0], "point": [0, 0, 0.114]}])
        out = tmp_path / "run.csv"
        main(["simulate", "--config", cj, "--out", str(out), "--seed", "3"])
        emitted = json.loads(summary_path(out).read_text())
        cfg = replace(ScenarioConfig.from_dict(
            json.loads(open(cj).read())), seed=3)
        recomputed = summarize(read_log_csv(out), cfg).to_dict()
        assert recomputed == emitted

    def test_phase_timeline_records_transitions(self, tmp_path):
        cj = write_config(tmp_path, maneuver="standup", duration=3.0)
        out = tmp_path / "su.csv"
        assert main(["simulate", "--config", cj, "--out", str(out)]) == 0
        summ = json.loads(summary_path(out).read_text())
        names = [p for p, _ in summ["phase_timeline"]]
        assert names == ["StandupSpin", "StandupStep1", "StandupStep2",
                         "BalanceRollOnly", "BalanceFull"]
        times = [t for _, t in summ["phase_timeline"]]
        assert times == sorted(times)

    def test_recovery_time_none_when_fallen(self, tmp_path):
        cj = write_config(tmp_path, duration=2.0,
                          initial={"q": [1.0, 0, 0, 0, 0], "dq": [0] * 5})
        out = tmp_path / "fall.csv"
        rc = main(["simulate", "--config", cj, "--out", str(out)])
        assert rc == 2
        summ = json.loads(summary_path(out).read_text())
        assert summ["recovery_time"] is None
        assert summ["phase_timeline"][-1][0] == "Fallen"

    def test_summary_fields(self, tmp_path):
        cj = write_config(tmp_path)
        out = tmp_path / "r.csv"
        main(["simulate", "--config", cj, "--out", str(out)])
        summ = json.loads(summary_path(out).read_text())
        assert set(summ) == {"scenario", "success", "peak_q1_deg",
                             "peak_q2_deg", "peak_u", "recovery_time",
                             "phase_timeline"}
        assert summ["scenario"] == "balance"

    def test_empty_rows_summary(self):
        s = summarize([], ScenarioConfig())
        assert isinstance(s, RunSummary)
        assert s.peak_u == 0.0 and not s.success


class TestBatch:
    def test_directory_of_configs(self, tmp_path):
        cfgdir = tmp_path / "cfgs"
        cfgdir.mkdir()
        for name, man in [("one", "balance"), ("two", "estimator-ablation")]:
            (cfgdir / f"{name}.json").write_text(json.dumps(
                {"schema-version": 1, "maneuver": man, "duration": 0.5}))
        outdir = tmp_path / "out"
        rc = main(["simulate", "--config", str(cfgdir),
                   "--out", str(outdir), "--jobs", "2"])
        assert rc == 0
        produced = sorted(p.name for p in outdir.iterdir())
        assert produced == ["one.csv", "one.summary.json",
                            "two.csv", "two.summary.json"]

    def test_batch_propagates_failure_code(self, tmp_path):
        cfgdir = tmp_path / "cfgs"
        cfgdir.mkdir()
        (cfgdir / "ok.json").write_text(json.dumps(
            {"schema-version": 1, "maneuver": "balance", "duration": 0.5}))
        (cfgdir / "falls.json").write_text(json.dumps(
            {"schema-version": 1, "maneuver": "balance", "duration": 0.5,
             "initial": {"q": [1.0, 0, 0, 0, 0], "dq": [0] * 5}}))
        rc = main(["simulate", "--config", str(cfgdir),
                   "--out", str(tmp_path / "out")])
        assert rc == 2

    def test_empty_directory_is_usage_error(self, tmp_path, capsys):
        cfgdir = tmp_path / "cfgs"
        cfgdir.mkdir()
        rc = main(["simulate", "--config", str(cfgdir),
                   "--out", str(tmp_path / "out")])
        assert rc == 1


class TestLqr:
    def run_lqr(self, capsys, *argv):
        rc = main(["lqr", *argv])
        out = capsys.readouterr().out
        return rc, json.loads(out)

    def test_paper_preset_rows(self, params_file, capsys):
        rc, doc = self.run_lqr(capsys, "--params", params_file,
                               "--preset", "paper")
        assert rc == 0
        assert [abs(k) for k in doc["K1"]] == pytest.approx(PAPER_K1)
        assert [abs(k) for k in doc["K2"]] == pytest.approx(PAPER_K2)

    def test_structure(self, params_file, capsys):
        rc, doc = self.run_lqr(capsys, "--params", params_file)
        assert rc == 0
        assert set(doc) == {"Ts", "Ad1", "Bd1", "Ad2", "Bd2", "K1", "K2"}
        for blk in ("Ad1", "Ad2"):
            assert len(doc[blk]) == 4 and all(len(r) == 4 for r in doc[blk])
        assert len(doc["K1"]) == 4 and len(doc["K2"]) == 4
        assert doc["Ts"] == 0.01

    def test_synthesized_same_magnitude_ballpark(self, params_file, capsys):
        rc, doc = self.run_lqr(capsys, "--params", params_file)
        assert rc == 0
        # synthesized tilt gains land within order of magnitude of the
        # published rows
        assert 0.45 < abs(doc["K1"][0]) < 45.0
        assert 0.16 < abs(doc["K2"][0]) < 16.0

    def test_custom_weights_change_gains(self, params_file, capsys):
        _, base = self.run_lqr(capsys, "--params", params_file)
        _, hot = self.run_lqr(capsys, "--params", params_file,
                              "--q1", "900,1,0.00001,0.0001")
        assert abs(hot["K1"][0]) > abs(base["K1"][0])
        assert hot["K2"] == base["K2"]

    def test_bad_weight_count(self, params_file, capsys):
        rc = main(["lqr", "--params", params_file, "--q1", "1,2"])
        assert rc == 1
        assert "4" in capsys.readouterr().err

    def test_missing_params_file(self, tmp_path, capsys):
        rc = main(["lqr", "--params", str(tmp_path / "nope.json")])
        assert rc == 1


class TestStandupCheck:
    def run_check(self, capsys, params, torque, omega0):
        rc = main(["standup-check", "--params", params,
                   "--torque", str(torque), "--omega0", str(omega0)])
        return rc, json.loads(capsys.readouterr().out)

    def test_nominal_pair_feasible(self, params_file, capsys):
        rc, doc = self.run_check(capsys, params_file, 1.2, -280.0)
        assert rc == 0
        assert doc["feasible"] is True
        assert doc["step_sweeps_deg"][0] == pytest.approx(58.0, abs=3.0)
        assert doc["step_sweeps_deg"][1] == pytest.approx(32.0, abs=3.0)
        assert doc["assist_sweep_deg"] == pytest.approx(36.0, abs=3.0)

    def test_static_bound_infeasible(self, params_file, capsys):
        rc, doc = self.run_check(capsys, params_file, 0.83, -280.0)
        assert rc == 2
        assert doc["feasible"] is False
        assert "reason" in doc

    def test_zero_zero_infeasible(self, params_file, capsys):
        rc, doc = self.run_check(capsys, params_file, 0.0, 0.0)
        assert rc == 2
        assert doc["feasible"] is False

    def test_over_envelope_reports_infeasible(self, params_file, capsys):
        # torque above the motor bound is refused, not simulated
        rc, doc = self.run_check(capsys, params_file, 1.5, -280.0)
        assert rc == 2
        assert doc["feasible"] is False


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        cj = write_config(tmp_path, duration=0.2)
        out = tmp_path / "m.csv"
        proc = subprocess.run(
            [sys.executable, "-m", "rwusim.cli", "simulate",
             "--config", cj, "--out", str(out)],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert out.exists()

    def test_help_exits_zero(self):
        with pytest.raises(SystemExit) as ei:
            build_parser().parse_args(["--help"])
        assert ei.value.code == 0
