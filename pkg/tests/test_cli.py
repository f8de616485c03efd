import math

import numpy as np
import pytest

from jscc_lqg.cli import build_parser, main
from jscc_lqg.config import ExperimentConfig, build_config, load_config, parse_config_text
from jscc_lqg.csv_output import DIVERGES, format_value, render, sibling, to_db
from jscc_lqg.errors import ConfigError


class TestConfigFile:
    def test_flat_keys(self):
        values = parse_config_text("alpha = 3\nsnr_db = 10, 13 16\nlambda = 0.5\nsteady = yes\n")
        assert values == {"alpha": 3.0, "snr_db": (10.0, 13.0, 16.0), "lam": 0.5, "steady": True}

    def test_comments(self):
        assert parse_config_text("# plant\nalpha = 2.5\n; done\n") == {"alpha": 2.5}

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            parse_config_text("gain = 2\n")

    def test_bad_value(self):
        with pytest.raises(ConfigError, match="bad value for trials"):
            parse_config_text("trials = many\n")

    def test_bad_flag(self):
        with pytest.raises(ConfigError):
            parse_config_text("steady = maybe\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.cfg")

    def test_load(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("codec = repetition\nseed = 9\n", encoding="utf-8")
        assert load_config(path) == {"codec": "repetition", "seed": 9}


class TestBuildConfig:
    def test_defaults(self):
        cfg = build_config({}, {})
        assert cfg == ExperimentConfig()

    def test_flags_override_file(self):
        cfg = build_config({"alpha": 3.0, "trials": 5}, {"alpha": 4.0})
        assert (cfg.alpha, cfg.trials) == (4.0, 5)

    def test_snr_list_becomes_tuple(self):
        assert build_config({}, {"snr_db": [1.0, 2.0]}).snr_db == (1.0, 2.0)

    @pytest.mark.parametrize(
        "overrides",
        [
            {"alpha": 1.0},
            {"codec": "hilbert"},
            {"codec": "linear", "lam": 0.5},
            {"beta": 0.5},
            {"samples": 10},
            {"seed": -1},
            {"command": "preset", "preset": "fig9"},
            {"q": 0.0, "f": 0.0},
            {"snr_db": ()},
        ],
    )
    def test_invalid(self, overrides):
        with pytest.raises(ConfigError):
            build_config({}, overrides)

    def test_unknown_setting(self):
        with pytest.raises(ConfigError, match="unknown settings"):
            build_config({"colour": "blue"}, {})


class TestCsvOutput:
    @pytest.mark.parametrize(
        "value, text",
        [
            (math.inf, DIVERGES),
            (np.float64(math.inf), DIVERGES),
            (math.nan, "nan"),
            (True, "1"),
            (np.bool_(False), "0"),
            (3, "3"),
            (0.25, "0.25"),
            (None, ""),
            ("spiral", "spiral"),
        ],
    )
    def test_format_value(self, value, text):
        assert format_value(value) == text

    def test_render(self):
        text = render([{"a": 1, "b": math.inf}, {"a": 2}], ["a", "b"])
        assert text == "a,b\n1,diverges\n2,\n"

    def test_to_db(self):
        assert to_db(100.0) == pytest.approx(20.0)
        assert to_db(math.inf) == math.inf
        assert to_db(0.0) == -math.inf

    def test_sibling(self, tmp_path):
        assert sibling(tmp_path / "loop.csv", "summary") == tmp_path / "loop_summary.csv"
        assert sibling("runs/loop", "summary").name == "loop_summary.csv"


class TestParser:
    def test_only_explicit_flags_are_set(self):
        args = vars(build_parser().parse_args(["sdr", "--alpha", "3"]))
        assert args["alpha"] == 3.0
        assert "delta" not in args
        assert "steady" not in args

    def test_preset_name(self):
        args = vars(build_parser().parse_args(["preset", "fig4", "--trials", "2"]))
        assert (args["command"], args["preset"], args["trials"]) == ("preset", "fig4", 2)

    def test_lambda_flag(self):
        assert vars(build_parser().parse_args(["sdr", "--lambda", "0.5"]))["lam"] == 0.5

    def test_unknown_preset(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["preset", "fig9"])


class TestMain:
    def test_bad_config_exits_with_two(self, capsys):
        assert main(["sdr", "--alpha", "0.5"]) == 2
        assert "error: alpha must exceed 1" in capsys.readouterr().err

    def test_bad_config_file(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("nonsense = 1\n", encoding="utf-8")
        assert main(["bounds", "--config", str(path)]) == 2
        assert "unknown config key" in capsys.readouterr().err

    def test_sdr_is_deterministic(self, capsys):
        argv = ["sdr", "--codec", "repetition", "--snr-db", "10", "--samples", "10000", "--seed", "4"]
        assert main(argv) == 0
        first = capsys.readouterr().out
        assert main(argv) == 0
        assert capsys.readouterr().out == first
        header, row = first.strip().splitlines()
        assert header.startswith("snr_db,family,")
        assert row.startswith("10.0,repetition,")

    def test_bounds_file_and_divergence_marker(self, tmp_path):
        out = tmp_path / "bounds.csv"
        config = tmp_path / "run.cfg"
        config.write_text("alpha = 3\nv = 0\nr = 0\ncodec = repetition\nsamples = 100000\n", encoding="utf-8")
        assert main(["bounds", "--config", str(config), "--snr-db", "3", "20", "--out", str(out)]) == 0
        lines = out.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 3
        assert DIVERGES in lines[1]
        assert DIVERGES not in lines[2].split(",")[1:3]

    def test_loop_writes_trace_and_summary(self, tmp_path):
        out = tmp_path / "loop.csv"
        argv = ["loop", "--codec", "linear", "--snr-db", "6", "--horizon", "20", "--trials", "3",
                "--samples", "100000", "--out", str(out)]
        assert main(argv) == 0
        assert len(out.read_text(encoding="utf-8").splitlines()) == 21
        summary = sibling(out, "summary").read_text(encoding="utf-8").splitlines()
        assert summary[0].startswith("snr_db,trial,avg_stage_cost,diverged")
        assert len(summary) == 4

    def test_preset_csv_is_byte_identical_for_a_seed(self, tmp_path):
        outputs = [tmp_path / "first.csv", tmp_path / "second.csv"]
        for out in outputs:
            argv = ["preset", "fig4", "--horizon", "30", "--trials", "2", "--samples", "100000",
                    "--seed", "3", "--out", str(out)]
            assert main(argv) == 0
        assert outputs[0].read_bytes() == outputs[1].read_bytes()
        assert len(outputs[0].read_bytes().splitlines()) == 61

    def test_loop_summary_to_stdout(self, capsys):
        argv = ["loop", "--codec", "linear", "--snr-db", "6", "--horizon", "20", "--samples", "100000"]
        assert main(argv) == 0
        assert len(capsys.readouterr().out.strip().splitlines()) == 2
