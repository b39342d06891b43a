import csv
import io
import subprocess
import sys
import xml.etree.ElementTree as ET

import pytest

from pmqkd import output, rates
from pmqkd.cli import main
from pmqkd.config import ConfigError, parse_config, parse_grid, read_config_file
from pmqkd.errors import TooFewPoints


def run_cli(*args):
    return main([str(a) for a in args])


class TestGrid:
    def test_forms(self):
        assert parse_grid("0:1:0.5") == [0, 0.5, 1]
        assert parse_grid("0.1, 0.2") == [0.1, 0.2]
        assert parse_grid("3") == [3.0]

    @pytest.mark.parametrize("bad", ["1:2", "a", "0:1:0", "2:1:0.5"])
    def test_bad(self, bad):
        with pytest.raises(Exception):
            parse_grid(bad)


class TestParse:
    def test_fig4a_preset(self, tmp_path):
        cfg = parse_config(["rates", "--fig4a", "--output-dir", str(tmp_path)])
        assert cfg.preset == "fig4a" and len(cfg.points) == 100

    def test_db_grid(self, tmp_path):
        cfg = parse_config(["rates", "--eta-db", "0:50:0.5", "--mu", "0.05", "--output-dir", str(tmp_path)])
        assert len(cfg.points) == 101 and cfg.points[-1].eta == pytest.approx(1e-5)

    def test_verify_defaults(self, tmp_path):
        cfg = parse_config(["verify", "--output-dir", str(tmp_path)])
        assert (cfg.circuit.mu_a, cfg.circuit.d, cfg.circuit.cutoff) == (0.05, 16, 12)

    def test_simulate_defaults(self, tmp_path):
        cfg = parse_config(["simulate", "--output-dir", str(tmp_path)])
        assert cfg.protocol.eta == 0.1 and cfg.protocol.rounds == 10**6

    def test_simulate_db(self, tmp_path):
        cfg = parse_config(["simulate", "--eta-db", "10", "--output-dir", str(tmp_path)])
        assert cfg.protocol.eta == pytest.approx(0.1)

    @pytest.mark.parametrize("argv", [
        ["rates", "--eta", "0.1", "--eta-db", "10"],
        ["rates", "--fig4a", "--fig4b"],
        ["rates", "--fig4a", "--mu", "0.1"],
        ["rates", "--mu", "0.1,0.2", "--eta", "0.1,0.2"],
        ["rates", "--eta", "1.5"],
        ["simulate", "--d", "15"],
        ["simulate", "--adversary", "photon-number-splitting"],
        ["simulate", "--workers", "0"],
        ["verify", "--cutoff", "0", "--mu", "0.5"],
        ["rates", "--precision", "40"],
    ])
    def test_config_errors(self, tmp_path, argv):
        with pytest.raises(ConfigError):
            parse_config(argv + ["--output-dir", str(tmp_path)])

    def test_env_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PMQKD_OUTPUT_DIR", str(tmp_path / "env"))
        cfg = parse_config(["rates"])
        assert cfg.output_dir == tmp_path / "env" and cfg.output_dir.is_dir()
        cfg = parse_config(["rates", "--output-dir", str(tmp_path / "flag")])
        assert cfg.output_dir == tmp_path / "flag"


class TestConfigFile:
    def test_values_and_override(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# sweep settings\n[common]\nprecision = 8\n\n[rates]\nmu = 0.01,0.02\neta-db = 20\n"
            "[simulate]\nrounds = 5\n"
        )
        cfg = parse_config(["rates", "--config", str(path), "--output-dir", str(tmp_path)])
        assert cfg.csv_precision == 8 and [p.mu for p in cfg.points] == [0.01, 0.02]
        cfg = parse_config(["rates", "--config", str(path), "--precision", "5", "--output-dir", str(tmp_path)])
        assert cfg.csv_precision == 5

    def test_unknown_key_location(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("[rates]\nmu = 0.1\n  colour = blue\n")
        with pytest.raises(ConfigError, match=r"bad\.cfg:3:3: unknown key 'colour'"):
            read_config_file(path, "rates")

    def test_bad_value_location(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("[simulate]\nrounds = many\n")
        with pytest.raises(ConfigError, match=r":2:10: bad value"):
            read_config_file(path, "simulate")

    @pytest.mark.parametrize("text,where", [
        ("[nope]\n", ":1:2:"), ("[rates\n", ":1:1:"), ("mu = 1\n", ":1:1:"), ("[rates]\nmu\n", ":2:1:"),
    ])
    def test_structure_errors(self, tmp_path, text, where):
        path = tmp_path / "bad.cfg"
        path.write_text(text)
        with pytest.raises(ConfigError, match=where):
            read_config_file(path, "rates")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            read_config_file(tmp_path / "absent.cfg", "rates")


class TestExitCodes:
    def test_no_command(self, capsys):
        assert run_cli() == 2

    def test_help(self, capsys):
        assert run_cli("--help") == 0
        assert "verify" in capsys.readouterr().out

    def test_usage_error(self, capsys):
        assert run_cli("simulate", "--rounds", "x") == 2

    def test_config_error(self, tmp_path, capsys):
        assert run_cli("simulate", "--rounds", "0", "--output-dir", tmp_path) == 2
        assert "rounds" in capsys.readouterr().err

    def test_verify_pass(self, tmp_path, capsys):
        assert run_cli("verify", "--d", "4", "--cutoff", "8", "--output-dir", tmp_path) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out and "all checks passed" in out
        assert (tmp_path / "verify_report.txt").read_text() == out
        rows = list(csv.DictReader((tmp_path / "parity.csv").open()))
        assert tuple(rows[0]) == output.PARITY_COLUMNS
        assert all(int(r["N"]) % 4 == int(r["k"]) for r in rows)

    def test_module_entry_point(self, tmp_path):
        res = subprocess.run(
            [sys.executable, "-m", "pmqkd", "rates", "--mu", "0.05", "--eta", "0.01", "--output-dir", str(tmp_path)],
            capture_output=True, text=True,
        )
        assert res.returncode == 0 and (tmp_path / "sweep.csv").exists()


class TestRatesCommand:
    def test_csv_roundtrip(self, tmp_path, capsys):
        assert run_cli("rates", "--fig4b", "--output-dir", tmp_path, "--precision", "17") == 0
        with (tmp_path / "sweep.csv").open() as fh:
            back = output.read_sweep_csv(fh)
        rows, _ = rates.sweep(rates.fig4b_points())
        assert len(back) == 101
        for a, b in zip(rows, back):
            assert a.ep_upper == b.ep_upper and a.gap_ratio == b.gap_ratio and a.point.eta == b.point.eta

    def test_negative_rates_unclamped(self, tmp_path, capsys):
        args = ("rates", "--mu", "0.05", "--eta", "0.01", "--e-bit", "0.2", "--output-dir", tmp_path)
        run_cli(*args)
        rec = next(csv.DictReader((tmp_path / "sweep.csv").open()))
        assert float(rec["rate_lower"]) < 0
        run_cli(*args, "--clamp-rates")
        rec = next(csv.DictReader((tmp_path / "sweep.csv").open()))
        assert float(rec["rate_lower"]) == 0

    def test_svg_written(self, tmp_path, capsys):
        assert run_cli("rates", "--fig4a", "--svg", "--output-dir", tmp_path) == 0
        root = ET.parse(tmp_path / "figure4a.svg").getroot()
        assert root.tag.endswith("svg")
        assert len([e for e in root.iter() if e.tag.endswith("polyline")]) == 3

    def test_skipped_points_warn(self, tmp_path, capsys):
        assert run_cli("rates", "--mu", "0,0.05", "--eta", "0.1", "--output-dir", tmp_path) == 0
        assert "grid point 0 skipped" in capsys.readouterr().err
        assert len((tmp_path / "sweep.csv").read_text().splitlines()) == 2


class TestOutputFormat:
    def test_fmt(self):
        assert output.fmt(0.1 + 0.2) == "0.3"
        assert output.fmt(-0.0) == "0.0"
        assert output.fmt(1 / 3, 4) == "0.3333"
        assert output.fmt(float("nan")) == "nan"

    def test_svg_deterministic(self):
        rows, _ = rates.sweep(rates.fig4a_points())
        assert output.emit_svg(rows, output.MU_AXES) == output.emit_svg(rows, output.MU_AXES)

    def test_svg_needs_two_points(self):
        rows, _ = rates.sweep([rates.ChannelPoint.from_eta(0.05, 0.01)])
        with pytest.raises(TooFewPoints):
            output.emit_svg(rows, output.MU_AXES)

    def test_generic_table(self):
        buf = io.StringIO()
        output.write_table_csv(("a", "b"), [{"a": 1, "b": 0.5}], buf)
        assert buf.getvalue() == "a,b\n1,0.5\n"


class TestSimulateCommands:
    def test_simulate_files(self, tmp_path, capsys):
        assert run_cli("simulate", "--rounds", "5000", "--seed", "3", "--log", "--adversary", "beamsplit",
                       "--output-dir", tmp_path) == 0
        text = (tmp_path / "sim_stats.txt").read_text()
        assert "adversary = beamsplit" in text and "ep_lower_estimate" in text
        assert len((tmp_path / "rounds.csv").read_text().splitlines()) == 5001

    def test_attack_sweep(self, tmp_path, capsys):
        assert run_cli("attack-sweep", "--eta-db", "0:10:5", "--rounds", "20000", "--output-dir", tmp_path) == 0
        rows = list(csv.DictReader((tmp_path / "attack_sweep.csv").open()))
        assert [float(r["eta_db"]) for r in rows] == [0, 5, 10]
        assert float(rows[0]["p_usd"]) == 0 and float(rows[0]["usd_success_fraction"]) == 0

    def test_byte_identical_reruns(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            assert run_cli("simulate", "--rounds", "20000", "--seed", "42", "--log", "--output-dir", d) == 0
        assert (a / "rounds.csv").read_bytes() == (b / "rounds.csv").read_bytes()
        assert (a / "sim_stats.txt").read_bytes() == (b / "sim_stats.txt").read_bytes()
