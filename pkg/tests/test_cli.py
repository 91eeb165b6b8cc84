"""Command-line contract: exit codes, report serialization, plot CSVs,
config-file defaults, reproducibility."""
import json

import pytest

from symgap.cli import (
    EXPERIMENTS,
    ExperimentConfig,
    emit_plot_data,
    main,
    run,
)


def run_main(args, tmp_path, name="out.json"):
    out = tmp_path / name
    code = main(args + ["--out", str(out)])
    return code, out


class TestExitCodes:
    def test_pass_is_zero(self, tmp_path):
        code, out = run_main(["inequalities", "--grid", "2000"], tmp_path)
        assert code == 0
        assert json.loads(out.read_text())["passed"] is True

    def test_assertion_failure_is_two(self, tmp_path):
        # two blocks are far too few for near-saturated endpoints
        code, out = run_main(["gap955", "--blocks", "2", "--alpha", "0.5"], tmp_path)
        assert code == 2
        rep = json.loads(out.read_text())
        assert rep["passed"] is False
        assert rep["assertions"]["endpoints_near_one"] is False

    def test_usage_errors_are_one(self, capsys):
        assert main([]) == 1
        assert main(["symgap", "--ell", "3"]) == 1
        assert main(["chernoff", "--m", "101", "--beta", "0.1", "--trials", "50"]) == 1
        capsys.readouterr()

    def test_unknown_subcommand_exits_one(self):
        with pytest.raises(SystemExit) as exc:
            main(["not-an-experiment"])
        assert exc.value.code == 1

    def test_bad_flag_value_exits_one(self):
        with pytest.raises(SystemExit) as exc:
            main(["gap955", "--blocks", "many"])
        assert exc.value.code == 1


class TestReproducibility:
    def test_byte_identical_reruns(self, tmp_path):
        args = ["chernoff", "--m", "100", "--beta", "0.2", "--trials", "2000", "--seed", "5"]
        _, a = run_main(args, tmp_path, "a.json")
        _, b = run_main(args, tmp_path, "b.json")
        assert a.read_bytes() == b.read_bytes()

    def test_seed_changes_stochastic_output(self, tmp_path):
        base = ["basic-count", "--n", "2", "--m", "8", "--trials", "500"]
        _, a = run_main(base + ["--seed", "1"], tmp_path, "a.json")
        _, b = run_main(base + ["--seed", "2"], tmp_path, "b.json")
        ja, jb = json.loads(a.read_text()), json.loads(b.read_text())
        assert ja["empirical_mean"] != jb["empirical_mean"]
        assert ja["expected"] == jb["expected"]

    def test_stdout_when_no_out_flag(self, capsys):
        code = main(["inequalities", "--grid", "1000"])
        assert code == 0
        text = capsys.readouterr().out
        assert json.loads(text)["experiment"] == "scalar_inequalities"


class TestCsvOutput:
    def test_psi_tilde_grid_rows(self, tmp_path):
        code, out = run_main(
            ["psi-tilde-check", "--grid", "40", "--format", "csv"], tmp_path, "g.csv"
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "x,y,psi,psi_tilde"
        assert len(lines) == 1 + 101 * 101

    def test_inequalities_figure_rows(self, tmp_path):
        code, out = run_main(
            ["inequalities", "--grid", "2000", "--figure-delta", "0.05", "--format", "csv"],
            tmp_path,
            "f.csv",
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "x,f1_ramp,f2_quad_plus_delta,f3_quad"
        assert len(lines) == 1 + 501

    def test_gap955_segment_rows(self, tmp_path):
        code, out = run_main(
            ["gap955", "--blocks", "50", "--format", "csv"], tmp_path, "s.csv"
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "t,value"
        assert len(lines) == 22


class TestEmitPlotData:
    def test_empty_report_header_only(self):
        assert emit_plot_data({}) == [["key", "value"]]

    def test_default_scalar_rows_sorted(self):
        rows = emit_plot_data({"b": 2, "a": 1, "nested": {"x": 1}, "s": "ok"})
        assert rows[0] == ["key", "value"]
        assert rows[1:] == [["a", 1], ["b", 2], ["s", "ok"]]

    def test_symmetry_gap_rows(self):
        rep = {
            "experiment": "symmetry_gap",
            "mechanisms": [
                {
                    "mechanism": "greedy",
                    "value_mean": 0.8,
                    "X_mean": 0.5,
                    "unbalanced_rate": 0.01,
                    "chernoff_bound": 0.5,
                }
            ],
        }
        rows = emit_plot_data(rep)
        assert rows[0][0] == "mechanism"
        assert rows[1] == ["greedy", 0.8, 0.5, 0.01, 0.5]

    def test_scaling_probe_rows(self):
        rep = {
            "experiment": "scaling_probe",
            "trace": [{"alpha": 0.5, "value": 0.9, "stderr": 0.01}],
        }
        assert emit_plot_data(rep)[1] == [0.5, 0.9, 0.01]


class TestConfigFile:
    def test_file_defaults_and_flag_override(self, tmp_path):
        cfgfile = tmp_path / "cfg.json"
        cfgfile.write_text(json.dumps({"blocks": 4, "alpha": 1.0}))
        _, out = run_main(
            ["gap955", "--config", str(cfgfile)], tmp_path, "a.json"
        )
        rep = json.loads(out.read_text())
        assert rep["params"] == {"blocks": 4, "alpha": 1.0}
        _, out2 = run_main(
            ["gap955", "--config", str(cfgfile), "--blocks", "8"], tmp_path, "b.json"
        )
        assert json.loads(out2.read_text())["params"]["blocks"] == 8

    def test_common_keys_from_file(self, tmp_path):
        cfgfile = tmp_path / "cfg.json"
        cfgfile.write_text(json.dumps({"seed": 42, "grid": 1500}))
        _, out = run_main(["inequalities", "--config", str(cfgfile)], tmp_path)
        rep = json.loads(out.read_text())
        assert rep["params"]["grid"] == 1500

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        cfgfile = tmp_path / "cfg.json"
        cfgfile.write_text(json.dumps({"blocs": 4}))
        assert main(["gap955", "--config", str(cfgfile)]) == 1
        assert "unknown config keys" in capsys.readouterr().err

    def test_missing_config_file_exits_one(self, capsys):
        assert main(["gap955", "--config", "/nonexistent/cfg.json"]) == 1
        capsys.readouterr()


class TestRunApi:
    def test_all_experiments_registered(self):
        expected = {
            "gap955",
            "concavity",
            "submod-check",
            "product-compose",
            "psi-tilde-check",
            "chernoff",
            "bisect-uniformity",
            "greedy-ratio",
            "poisson-midr",
            "vcg-audit",
            "symgap",
            "menu-separation",
            "amplify",
            "inequalities",
            "basic-count",
            "scaling-probe",
            "suite",
        }
        assert set(EXPERIMENTS) == expected

    def test_run_returns_code_and_report(self):
        code, rep = run(ExperimentConfig("inequalities", {"grid": 1000}))
        assert code == 0
        assert rep["experiment"] == "scalar_inequalities"

    def test_suite_fast_smoke(self):
        code, rep = run(ExperimentConfig("suite", {"all": True, "fast": True}, seed=0))
        assert code == 0
        assert rep["passed"] is True
        assert rep["byte_identical_reruns"] is True
        assert len(rep["reports"]) >= 20
