import json

import pytest

from touchmap.config import (ConfigError, PipelineConfig, config_from_dict, config_to_dict,
                             dump_config, load_config)


def test_defaults():
    cfg = PipelineConfig()
    assert cfg.detection.sigma_k == 1.25 and cfg.detection.m == 0.98
    assert cfg.detection.upsample == 7 and cfg.detection.blur_sigma == 3.0
    assert cfg.tracking.k_d == 50.0 and cfg.tracking.entry_cost == 8.0
    assert cfg.workspace.array().by_index((0, 1)).center == (37.0, 0.0)
    assert cfg.render.cutoff == 4.0 and cfg.render.order == 5


def test_round_trip():
    cfg = config_from_dict({"input": "x.csv", "tracking": {"k_d": 40.0},
                            "workspace": {"translations": [[1.0, 2.0]]}})
    again = config_from_dict(json.loads(dump_config(cfg)))
    assert again == cfg
    assert config_to_dict(again)["workspace"]["translations"] == [[1.0, 2.0]]


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown keys"):
        config_from_dict({"tracking": {"kd": 1}})
    with pytest.raises(ConfigError):
        config_from_dict({"speed": 1})


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({"detection": {"m": 1.5}})
    with pytest.raises(ConfigError):
        config_from_dict({"jobs": 0})
    with pytest.raises(ConfigError):
        config_from_dict({"render": {"cutoff": 12.0}})
    with pytest.raises(ConfigError):
        config_from_dict({"tracking": []})


def test_load_resolves_input_relative_to_file(tmp_path):
    d = tmp_path / "cfgs"
    d.mkdir()
    (d / "c.json").write_text(json.dumps({"input": "data/s.csv"}))
    cfg = load_config(d / "c.json")
    assert cfg.input == str(d / "data" / "s.csv")


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{oops")
    with pytest.raises(ConfigError, match="line 1"):
        load_config(tmp_path / "bad.json")


def test_transform_grid_anchor_on_pixel_centres():
    cfg = PipelineConfig()
    g = cfg.workspace.transform_grid(25.4 / 7)
    assert g.step == pytest.approx(25.4 / 7)
    assert g.anchor == pytest.approx((25.4 / 14, 25.4 / 14))
