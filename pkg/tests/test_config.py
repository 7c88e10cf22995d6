"""Config loading, overrides and validation."""

import json

import pytest

from boxlift.config import ENV_CONFIG_PATH, config_from_dict, default_config, load_config


class TestDefaults:
    def test_reference_constants(self):
        cfg = default_config()
        assert cfg.priors.aspect("Car") == (2.8, 1.1)
        assert cfg.loss_weights.w_class == 2.0
        assert cfg.loss_weights.w_depth == 0.5
        assert cfg.iou_threshold("Car") == 0.7
        assert cfg.cd_thresholds == (0.5, 1.0, 2.0, 4.0)
        assert cfg.ap_variant == "paper40"

    def test_unknown_class_falls_back_to_default_threshold(self):
        assert default_config().iou_threshold("Pedestrian") == 0.7


class TestLoading:
    def test_file_values_override_defaults(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"iou_thresholds": {"Car": 0.5},
                                    "ap_variant": "deployed40"}))
        cfg = load_config(path)
        assert cfg.iou_threshold("Car") == 0.5
        assert cfg.ap_variant == "deployed40"
        # Untouched keys keep their defaults.
        assert cfg.loss_weights.w_class == 2.0

    def test_env_var_fallback(self, tmp_path, monkeypatch):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"jobs": 3}))
        monkeypatch.setenv(ENV_CONFIG_PATH, str(path))
        assert load_config().jobs == 3

    def test_overrides_beat_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"jobs": 3}))
        assert load_config(path, overrides={"jobs": 1}).jobs == 1

    def test_extra_priors_merge(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"class_priors": {
            "Van": {"length_over_height": 2.4, "width_over_height": 1.0}}}))
        cfg = load_config(path)
        assert cfg.priors.aspect("Van") == (2.4, 1.0)
        assert cfg.priors.aspect("Car") == (2.8, 1.1)


class TestValidation:
    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            config_from_dict({"not_a_key": 1})

    def test_bad_variant_rejected(self):
        with pytest.raises(ValueError):
            config_from_dict({"ap_variant": "eleven"})

    def test_bad_version_rejected(self):
        with pytest.raises(ValueError):
            config_from_dict({"version": 99})

    def test_missing_default_threshold_rejected(self):
        with pytest.raises(ValueError):
            config_from_dict({"iou_thresholds": {"Car": 0.7, "default": None}})

    def test_reserved_flag_accepted(self):
        assert config_from_dict({"cos_iou_scaled": True}).cos_iou_scaled is True
