"""CLI contract: subcommands, config-file handling, and exit codes."""

import numpy as np
import pytest

from pstorm.cli import main

NPCA_CFG = """\
problem = npca-random
method = pstorm
schedule = varying
eta = 0.1
m = 5
samples = 2000          # tiny budget keeps this fast
eval_samples = 400
seed = 3
"""


@pytest.fixture
def npca_cfg(tmp_path):
    path = tmp_path / "npca.cfg"
    path.write_text(NPCA_CFG)
    return path


class TestRun:
    def test_run_writes_csv_and_summary(self, npca_cfg, tmp_path, capsys):
        out = tmp_path / "run.csv"
        code = main(["run", "--config", str(npca_cfg), "--set", f"out={out}"])
        assert code == 0
        captured = capsys.readouterr()
        assert captured.out.startswith("summary: method=pstorm")
        header = out.read_text().splitlines()[0]
        assert header == "epoch,samples,objective,obj_error,stationarity,density_pct,wall_ms"

    def test_run_streams_csv_without_out(self, npca_cfg, capsys):
        assert main(["run", "--config", str(npca_cfg)]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith("epoch,")
        assert lines[-1].startswith("summary:")

    def test_cli_overrides_file(self, npca_cfg, capsys):
        assert main(["run", "--config", str(npca_cfg), "--set", "samples=1000"]) == 0
        lines = [l for l in capsys.readouterr().out.splitlines() if not l.startswith(("epoch", "summary"))]
        assert int(lines[-1].split(",")[1]) <= 1000

    def test_unknown_key_is_config_error(self, npca_cfg):
        assert main(["run", "--config", str(npca_cfg), "--set", "bogus=1"]) == 2

    def test_missing_config_file_is_config_error(self):
        assert main(["run", "--config", "/nonexistent/path.cfg"]) == 2

    def test_strict_refusal_and_force(self, npca_cfg):
        args = ["run", "--config", str(npca_cfg), "--set", "eta=0.21", "--set", "strict=true"]
        assert main(args) == 4
        assert main(args + ["--set", "force=true"]) == 0


class TestCompare:
    def test_compare_prints_table_and_writes_csv(self, npca_cfg, tmp_path, capsys):
        other = tmp_path / "proxsgd.cfg"
        other.write_text(NPCA_CFG.replace("method = pstorm", "method = proxsgd"))
        out = tmp_path / "cmp.csv"
        code = main(["compare", str(npca_cfg), str(other), "--seeds", "1,2,3",
                     "--out", str(out)])
        assert code == 0
        table = capsys.readouterr().out.splitlines()
        assert table[0].split("\t") == ["method", "train", "test", "grad", "density"]
        assert {row.split("\t")[0] for row in table[1:]} == {"pstorm", "proxsgd"}
        assert out.read_text().startswith("method,epoch,samples,")

    def test_mismatched_problem_is_config_error(self, npca_cfg, tmp_path):
        other = tmp_path / "other.cfg"
        other.write_text(NPCA_CFG.replace("eval_samples = 400", "eval_samples = 500"))
        assert main(["compare", str(npca_cfg), str(other), "--seeds", "1"]) == 2


class TestValidateSchedule:
    def test_feasible(self, capsys):
        assert main(["validate-schedule", "--schedule", "varying",
                     "--eta", "0.1", "--K", "500"]) == 0
        assert "ok" in capsys.readouterr().out

    def test_constant_ii_reports_discount_constants(self, capsys):
        assert main(["validate-schedule", "--schedule", "constant-ii",
                     "--eta", "0.25", "--K", "200"]) == 0
        out = capsys.readouterr().out
        assert "discounted-sum" in out

    def test_infeasible_exits_4(self, capsys):
        assert main(["validate-schedule", "--schedule", "varying",
                     "--eta", "0.3", "--K", "100"]) == 4
        assert "infeasible" in capsys.readouterr().out


class TestParseCheck:
    def test_libsvm_ok(self, tmp_path, capsys):
        path = tmp_path / "ok.libsvm"
        path.write_text("1 1:0.5 3:2.0\n-1 2:1.0\n")
        assert main(["parse-check", "--format", "libsvm", str(path)]) == 0
        assert "2 rows" in capsys.readouterr().out

    def test_libsvm_malformed_exits_3(self, tmp_path, capsys):
        path = tmp_path / "bad.libsvm"
        path.write_text("1 3:0.5 1:2.0\n")
        assert main(["parse-check", "--format", "libsvm", str(path)]) == 3
        assert "line 1" in capsys.readouterr().err

    def test_idx_ok_and_corrupt(self, tmp_path, capsys):
        import struct

        good = tmp_path / "labels.idx"
        good.write_bytes(struct.pack(">II", 0x00000801, 3) + bytes([1, 2, 3]))
        assert main(["parse-check", "--format", "idx", str(good)]) == 0
        bad = tmp_path / "bad.idx"
        bad.write_bytes(struct.pack(">II", 0x00000801, 3) + bytes([1]))
        assert main(["parse-check", "--format", "idx", str(bad)]) == 3


def test_weighted_output_rule_through_harness(npca_cfg, capsys):
    assert main(["run", "--config", str(npca_cfg), "--set", "output_rule=weighted"]) == 0
