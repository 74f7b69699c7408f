"""Tests for the JSON experiment files."""

import io

import pytest

from neurocalib import Parameters_Template
from neurocalib.Modules import Config_Handler as ch
from neurocalib.Modules.General_Functions import ConfigError, dbm_to_watt


# ============================================================================
# PARSING
# ============================================================================


class TestParseConfig:
    """Tests for parse_config."""

    def test_empty_object_gives_defaults(self):
        """Every section is optional."""
        cfg = ch.parse_config("{}")
        assert (cfg.system.M, cfg.system.K, cfg.system.L) == (16, 4, 4)
        assert cfg.system.P_DL == pytest.approx(dbm_to_watt(5.0))
        assert cfg.system.sigma0_sq == pytest.approx(dbm_to_watt(-85.0))
        assert cfg.methods == ["mrt", "zf", "wmmse", "neural_calibration"]
        assert cfg.sweep.values == [4]

    def test_template_parses(self):
        """The shipped template is a valid experiment."""
        cfg = ch.parse_config(Parameters_Template.template)
        assert cfg.sweep.values == [2, 4, 6, 8]
        assert cfg.system.reference_path_loss_db == 40.0
        assert cfg.hyper.hidden_zf == (128, 512, 512)
        assert cfg.output_path == "results/report.csv"
        assert cfg.use_multiple_CPU_cores is True

    def test_unknown_key_position(self):
        """Unknown keys are reported with their line and dotted field."""
        text = '{\n  "system": {\n    "antenas": 8\n  }\n}'
        with pytest.raises(ConfigError) as info:
            ch.parse_config(text)
        assert info.value.line == 3
        assert info.value.field == "system.antenas"

    def test_unknown_section(self):
        """Unknown sections are rejected."""
        with pytest.raises(ConfigError) as info:
            ch.parse_config('{"sistem": {}}')
        assert info.value.field == "sistem"

    def test_wrong_type(self):
        """A string where an integer is expected is reported with its field."""
        text = '{\n  "training": {\n    "epochs": "ten"\n  }\n}'
        with pytest.raises(ConfigError) as info:
            ch.parse_config(text)
        assert info.value.field == "training.epochs"
        assert info.value.line == 3

    def test_invalid_json(self):
        """Syntax errors carry the line of the problem."""
        with pytest.raises(ConfigError) as info:
            ch.parse_config('{\n  "system": {\n    "antennas": 8,\n  }\n}')
        assert info.value.line is not None

    def test_more_users_than_antennas(self):
        """An invalid system is reported on the system section."""
        with pytest.raises(ConfigError) as info:
            ch.parse_config('{"system": {"antennas": 2, "users": 4}}')
        assert info.value.field == "system"

    def test_dataset_seed_follows_system_seed(self):
        """Without its own seed the dataset uses the system seed."""
        cfg = ch.parse_config('{"system": {"seed": 7}}')
        assert cfg.dataset.seed == 7
        assert ch.parse_config('{"system": {"seed": 7}, "dataset": {"seed": 2}}').dataset.seed == 2

    def test_null_dataset_path(self):
        """A null dataset path means generate."""
        assert ch.parse_config('{"dataset": {"path": null}}').dataset.path is None

    def test_number_cores(self):
        """number_cores is 'all' or a positive integer."""
        assert ch.parse_config('{"running_modes": {"number_cores": 3}}').number_cores == 3
        with pytest.raises(ConfigError):
            ch.parse_config('{"running_modes": {"number_cores": "many"}}')

    def test_sweep_errors_carry_the_line(self):
        """A sweep value giving K > M is reported at the line of the values."""
        text = '{\n  "system": {"antennas": 8},\n  "sweep": {\n    "parameter": "users",\n    "values": [2, 9]\n  }\n}'
        with pytest.raises(ConfigError) as info:
            ch.parse_config(text)
        assert info.value.line == 5
        assert info.value.field == "sweep.values"

    def test_method_errors_carry_the_line(self):
        """Unknown methods and train_at values are reported where they are written."""
        with pytest.raises(ConfigError) as info:
            ch.parse_config('{\n  "methods": ["zf", "magic"]\n}')
        assert (info.value.line, info.value.field) == (2, "methods")
        with pytest.raises(ConfigError) as info:
            ch.parse_config('{\n  "sweep": {\n    "train_at": "sometimes"\n  }\n}')
        assert (info.value.line, info.value.field) == (3, "sweep.train_at")

    def test_system_key_errors_keep_their_field(self):
        """A bad key inside the system section isn't reported as the whole section."""
        with pytest.raises(ConfigError) as info:
            ch.parse_config('{\n  "system": {\n    "antennas": 0\n  }\n}')
        assert (info.value.line, info.value.field) == (3, "system.antennas")

    def test_hidden_widths(self):
        """Hidden widths must be positive integers."""
        assert ch.parse_config('{"training": {"hidden_zf": [16, 32]}}').hyper.hidden_zf == (16, 32)
        with pytest.raises(ConfigError):
            ch.parse_config('{"training": {"hidden_zf": [16, 0]}}')

    def test_ranges(self):
        """Out-of-range optimizer settings are rejected."""
        with pytest.raises(ConfigError):
            ch.parse_config('{"training": {"beta1": 1.0}}')
        with pytest.raises(ConfigError):
            ch.parse_config('{"training": {"held_out_fraction": 0}}')
        with pytest.raises(ConfigError):
            ch.parse_config('{"wmmse": {"init": "random"}}')


# ============================================================================
# FILES
# ============================================================================


class TestFiles:
    """Tests for config_handler and write_template."""

    def test_template_round_trip(self, tmp_path):
        """A written template can be read back."""
        path = ch.write_template(tmp_path/"params.json")
        assert ch.config_handler(path).methods == ["mrt", "zf", "wmmse", "blackbox_mlp", "neural_calibration"]

    def test_missing_file(self, tmp_path):
        """A missing file is a ConfigError."""
        with pytest.raises(ConfigError):
            ch.config_handler(tmp_path/"nothing.json")

    def test_reads_piped_stdin(self, monkeypatch):
        """Without a path the configuration comes from stdin."""
        monkeypatch.setattr("sys.stdin", io.StringIO('{"system": {"users": 2}}'))
        assert ch.config_handler().system.K == 2
