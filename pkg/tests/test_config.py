import json

import pytest
import yaml

from collapse_audit.advisory import BASELINE, WEB_SEARCH
from collapse_audit.config import RunConfig, load_config, load_config_dict
from collapse_audit.errors import ConfigError


class TestLoad:
    def test_defaults(self):
        cfg = load_config(None)
        assert cfg.sampling.n_samples == 1000
        assert cfg.seeds.sampling == 42
        assert cfg.conditions() == [BASELINE, WEB_SEARCH]
        assert cfg.thresholds.r2_min == 0.5 and cfg.thresholds.fc_high == 0.5

    def test_yaml_and_json_agree(self, tmp_path):
        data = {"sampling": {"n_samples": 50}, "advisors": {"baseline": {"mock": "planted_noise"}}}
        (tmp_path / "c.yaml").write_text(yaml.safe_dump(data))
        (tmp_path / "c.json").write_text(json.dumps(data))
        a, b = load_config(tmp_path / "c.yaml"), load_config(tmp_path / "c.json")
        assert a == b and a.sampling.n_samples == 50 and a.conditions() == [BASELINE]

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.yaml")

    @pytest.mark.parametrize(
        "data",
        [
            {"unknown": 1},
            {"sampling": {"n_samples": 0}},
            {"advisors": {"baseline": {"mock": "nonexistent"}}},
            {"advisors": {"baseline": {"kind": "http"}}},
            {"advisors": {"sideways": {}}},
            {"advisors": {}},
            {"judging": {"judges": [{"name": "x"}, {"name": "x"}]}},
            {"asset_class_mapping": {"Growth Stocks": "Equities"}},
        ],
    )
    def test_rejects(self, data):
        with pytest.raises(ConfigError):
            load_config_dict(data)

    def test_condition_alias(self):
        cfg = load_config_dict({"advisors": {"web_search": {}}})
        assert list(cfg.advisors) == [WEB_SEARCH]


class TestHash:
    def test_stable_and_sensitive(self):
        a = RunConfig()
        assert a.config_hash() == RunConfig().config_hash()
        assert a.config_hash() != a.with_overrides(seed=43).config_hash()

    def test_round_trip_preserves_types(self):
        a = RunConfig()
        b = load_config_dict(json.loads(json.dumps(a.model_dump(mode="json"))))
        assert a == b and a.config_hash() == b.config_hash()
        assert a.plan().dimension("annual_income").values == b.plan().dimension("annual_income").values

    def test_run_dir_excluded(self):
        assert RunConfig(run_dir="/x").config_hash() == RunConfig(run_dir="/y").config_hash()


class TestOverrides:
    def test_mock_for_one_condition(self):
        cfg = RunConfig().with_overrides(advisor="mock:planted_noise", condition="web_search")
        assert cfg.advisors[WEB_SEARCH].mock == "planted_noise"
        assert cfg.advisors[BASELINE].mock == "planted_heuristic_continuous"

    def test_bad_advisor(self):
        with pytest.raises(ConfigError):
            RunConfig().with_overrides(advisor="psychic")

    def test_http_override_needs_endpoint(self):
        with pytest.raises(ConfigError):
            RunConfig().with_overrides(advisor="http")


class TestCredentials:
    def test_missing_variable_reported(self, monkeypatch):
        monkeypatch.delenv("ADVISOR_TEST_KEY", raising=False)
        cfg = load_config_dict(
            {"advisors": {"baseline": {"kind": "http", "endpoint": "https://x.test", "model": "m", "api_key_env": "ADVISOR_TEST_KEY"}}}
        )
        assert cfg.check_credentials() == ["ADVISOR_TEST_KEY"]
        monkeypatch.setenv("ADVISOR_TEST_KEY", "v")
        assert cfg.check_credentials() == []

    def test_no_secret_field(self):
        with pytest.raises(ConfigError):
            load_config_dict({"advisors": {"baseline": {"kind": "http", "endpoint": "e", "model": "m", "api_key": "s"}}})
