from dataclasses import replace

import pytest
import yaml

from hspsmux.config import (
    ConfigError,
    ExperimentConfig,
    dump_yaml,
    from_dict,
    load_config,
    load_preset,
    parse_yaml,
    to_dict,
)
from hspsmux.source import Pulsed


class TestRoundTrip:
    def test_default_config(self):
        cfg = ExperimentConfig()
        assert parse_yaml(dump_yaml(cfg)) == cfg

    def test_preset(self, preset):
        assert parse_yaml(dump_yaml(preset)) == preset
        assert dump_yaml(parse_yaml(dump_yaml(preset))) == dump_yaml(preset)

    def test_pulsed_pump_survives(self, preset):
        cfg = preset.replace(source=replace(preset.source, pump_mode=Pulsed()))
        back = parse_yaml(dump_yaml(cfg))
        assert back.source.pump_mode == Pulsed()

    def test_file_loading(self, tmp_path, preset):
        path = tmp_path / "c.yaml"
        path.write_text(dump_yaml(preset.replace(seed=77)))
        assert load_config(path).seed == 77

    def test_missing_sections_take_defaults(self):
        cfg = from_dict({"scenario": "hom_scan"})
        assert cfg.scenario == "hom_scan" and cfg.hom == ExperimentConfig().hom


class TestPreset:
    def test_loads(self, preset):
        assert preset.source.mode_count == 3
        assert len(preset.detectors) == 5
        assert preset.sweep.pump_powers[-1] == pytest.approx(16.98)

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            load_preset("nonexistent")


class TestRejection:
    @pytest.mark.parametrize(
        "data",
        [
            {"colour": "blue"},
            {"source": {"wavelength": 1}},
            {"sweep": {"pump_powers": [-1.0]}},
            {"sweep": {"hom_g2_source": "guess"}},
            {"scenario": "nope"},
            {"seed": -1},
            {"run_id": "../escape"},
            {"acquisition_bins": 0},
            {"source": {"pump_mode": {"kind": "comb"}}},
            {"feedforward": {"shift_efficiency": 2.0}},
            {"hom": {"bandwidth_factor": 1.5}},
        ],
    )
    def test_bad_values(self, data):
        with pytest.raises(ConfigError):
            from_dict(data)

    @pytest.mark.parametrize("text", ["a: [1, 2", "- 1\n- 2\n", "just text"])
    def test_malformed_text(self, text):
        with pytest.raises(ConfigError):
            parse_yaml(text)

    def test_config_error_is_a_value_error(self):
        assert issubclass(ConfigError, ValueError)


def test_dict_is_plain_yaml():
    data = to_dict(ExperimentConfig())
    assert yaml.safe_load(yaml.safe_dump(data)) == data
