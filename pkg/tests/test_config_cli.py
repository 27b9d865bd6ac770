import json
import math

import pytest

from heralded_cz.cli import EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, main
from heralded_cz.config import (
    ParseError,
    config_hash,
    format_config,
    load_config,
    parse_config,
)
from heralded_cz.errors import ConfigError
from heralded_cz.report import decode_complex, dumps, jsonable

MINIMAL = """
[waveforms]
buffer_rabi = [10.0, 1.0]
buffer_detuning = [2.0]
qubit_rabi = [5.0]
"""


class TestParse:
    def test_minimal_defaults(self):
        rc = parse_config(MINIMAL)
        assert rc.system.tau == 0.25
        assert rc.system.B0 == pytest.approx(2 * math.pi * 100)
        assert rc.settings.method == "dop853"
        assert rc.eta == 0.0 and rc.compensate is False

    def test_units(self):
        rc = parse_config(MINIMAL + '[system]\nB0 = "inf"\nB1 = 50\nbuffer_shift = 0.2\n')
        assert math.isinf(rc.system.B0)
        assert rc.system.B1 == pytest.approx(2 * math.pi * 50)
        assert rc.system.buffer_shift == pytest.approx(2 * math.pi * 0.2)

    def test_unknown_key_line(self):
        with pytest.raises(ParseError) as info:
            parse_config(MINIMAL + "[system]\nlayout = \"chain_no_qq\"\nblokade = 3\n")
        assert info.value.line == 8
        assert "blokade" in str(info.value)

    def test_unknown_section(self):
        with pytest.raises(ParseError, match="section"):
            parse_config(MINIMAL + "[noise]\nx = 1\n")

    def test_missing_required(self):
        with pytest.raises(ParseError, match="qubit_rabi"):
            parse_config("[waveforms]\nbuffer_rabi = [1.0]\nbuffer_detuning = [0.0]\n")

    def test_qubit_detuning_rejected(self):
        with pytest.raises(ParseError) as info:
            parse_config(MINIMAL + "qubit_detuning = [0.5]\n")
        assert info.value.line == 6

    @pytest.mark.parametrize(
        "extra",
        [
            '[protocol]\neta = "best"\n',
            "[protocol]\ncompensate = 1\n",
            '[waveforms.x]\n',
            "[integrator]\nmax_step = 0.01\n",
            '[system]\nB0 = "big"\n',
            "[readout]\nq_fp = 2.0\n",
        ],
    )
    def test_invalid_values(self, extra):
        with pytest.raises(ConfigError):
            parse_config(MINIMAL + extra)

    def test_malformed_toml(self):
        with pytest.raises(ParseError, match="malformed"):
            parse_config("[waveforms\n")

    @pytest.mark.parametrize("name", ["fig2", "fig4"])
    def test_bundled_roundtrip(self, name):
        rc = load_config(name)
        again = parse_config(format_config(rc))
        assert again.system.buffer_pulse == rc.system.buffer_pulse
        assert again.system.qubit_pulse == rc.system.qubit_pulse
        assert again.system.B0 == pytest.approx(rc.system.B0, rel=1e-15)
        assert again.eta == rc.eta and again.settings == rc.settings

    def test_hash_sensitive(self, fig2):
        assert config_hash(fig2) == config_hash(load_config("fig2"))
        assert config_hash(fig2) != config_hash(fig2.replace(eta=0.1))

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("/nonexistent/run.toml")


class TestReport:
    def test_complex_and_specials(self):
        out = jsonable({"a": 1 + 2j, "b": math.inf, "c": math.nan, "d": True, "e": 0.1234567890123456})
        assert out == {"a": [1.0, 2.0], "b": "inf", "c": None, "d": True, "e": 0.123456789012}

    def test_decode(self):
        assert list(decode_complex([[1, 2], [0, -1]])) == [1 + 2j, -1j]

    def test_dumps_sorted(self):
        assert dumps({"b": 1, "a": 2}).index('"a"') < dumps({"b": 1, "a": 2}).index('"b"')


class TestCli:
    def test_herald_fig4(self, tmp_path, capsys):
        out = tmp_path / "h.json"
        code = main(["herald", "--config", "fig4", "--method", "magnus4", "--out", str(out)])
        assert code == EXIT_OK
        data = json.loads(out.read_text())
        assert data["F_herald"] >= 1 - 1e-9
        assert len(data["config_hash"]) == 64
        assert capsys.readouterr().out == out.read_text()

    def test_overrides_change_hash(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        main(["herald", "--config", "fig2", "--method", "magnus4", "--B0", "inf", "--B1", "inf", "--out", str(a)])
        main(["herald", "--config", "fig2", "--method", "magnus4", "--eta", "auto", "--B0", "inf", "--B1", "inf", "--out", str(b)])
        assert json.loads(a.read_text())["config_hash"] != json.loads(b.read_text())["config_hash"]

    def test_sweep_outputs(self, tmp_path):
        csv_path = tmp_path / "s.csv"
        args = ["sweep", "--config", "fig4", "--method", "magnus4", "--param", "detuning_offset",
                "--target", "buffer", "--min", "-0.2", "--max", "0.2", "--points", "3", "--out", str(csv_path)]
        assert main(args) == EXIT_OK
        lines = csv_path.read_text().splitlines()
        assert lines[0].startswith("detuning_offset_buffer,")
        # frequencies on the command line are in 2π×MHz
        assert float(lines[1].split(",")[0]) == pytest.approx(-0.4 * math.pi)
        meta = json.loads(csv_path.with_suffix(".json").read_text())
        assert meta["integrator"]["method"] == "magnus4" and meta["rows"] == 3

    def test_simulate(self, tmp_path):
        assert main(["simulate", "--config", "fig4", "--method", "magnus4", "--points", "4", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "basis.json").exists()
        assert len(list(tmp_path.glob("trajectory_rail*_q*.csv"))) == 8

    def test_optimize_writes_loadable_config(self, tmp_path, capsys):
        cfg, hist = tmp_path / "o.toml", tmp_path / "h.csv"
        code = main(["optimize", "--config", "fig2", "--B0", "inf", "--B1", "inf", "--evals", "20",
                     "--steps-opt", "200", "--out-config", str(cfg), "--out-history", str(hist)])
        assert code == EXIT_OK
        rc = load_config(cfg)
        assert rc.eta == "calibrated" and rc.compensate
        assert hist.read_text().startswith("evaluation,best_cost\n")
        assert json.loads(capsys.readouterr().out)["evaluations"] <= 20

    def test_pt_check(self, capsys):
        assert main(["pt-check", "--config", "fig4", "--method", "magnus4"]) == EXIT_OK
        rep = json.loads(capsys.readouterr().out)
        assert all(r["is_cz"] for r in rep["rails"])

    def test_dress_check(self, capsys):
        T = 0.1
        args = ["dress-check", "--omega", str(math.sqrt(12) * math.pi / T), "--delta", str(2 * math.pi / T),
                "--time", str(T), "--integrate"]
        assert main(args) == EXIT_OK
        rep = json.loads(capsys.readouterr().out)
        assert rep["amplitude"] == pytest.approx([-1.0, 0.0], abs=1e-9)
        assert rep["amplitude_integrated"] == pytest.approx([-1.0, 0.0], abs=1e-9)

    @pytest.mark.parametrize(
        "argv",
        [
            ["herald", "--config", "/nonexistent.toml"],
            ["herald", "--config", "fig2", "--B0", "-1"],
            ["sweep", "--config", "fig4", "--param", "rabi_scale", "--min", "1", "--max", "0"],
            ["frobnicate"],
        ],
    )
    def test_invalid_exit_code(self, argv):
        assert main(argv) == EXIT_INVALID

    def test_numerical_exit_code(self, tmp_path):
        # identical rails recombined at η = π leave nothing in the herald branch
        bad = tmp_path / "bad.toml"
        bad.write_text(
            "[waveforms]\nbuffer_rabi = [0.0]\nbuffer_detuning = [0.0]\nqubit_rabi = [0.0]\n"
            "[system]\nB0 = \"inf\"\nB1 = \"inf\"\n[protocol]\neta = 3.141592653589793\n"
        )
        assert main(["herald", "--config", str(bad), "--method", "magnus4"]) == EXIT_NUMERICAL

    def test_version(self, capsys):
        assert main(["--version"]) == EXIT_OK
