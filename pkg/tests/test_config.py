import json

import pytest

from safegen.config import RunConfig, data_path, load_config
from safegen.errors import ConfigError


def write(tmp_path, doc):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


class TestLoadConfig:
    def test_minimal(self, tmp_path):
        config = load_config(write(tmp_path, {"workdir": "w"}))
        assert config.workdir == "w"
        assert config.backend.kind == "replay"

    def test_unknown_top_level_key(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            load_config(write(tmp_path, {"wrokdir": "w"}))
        assert "wrokdir" in str(exc.value)

    def test_unknown_backend_key(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write(tmp_path, {"backend": {"kidn": "replay"}}))

    def test_cxx_flags_become_tuple(self, tmp_path):
        config = load_config(
            write(tmp_path, {"toolchain": {"cxx_flags": ["-std=c++17"]}})
        )
        assert config.toolchain.cxx_flags == ("-std=c++17",)

    def test_not_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("workdir: w\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.json")

    def test_root_must_be_object(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("[1]", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(path)


class TestResolutionAndValidation:
    def test_packaged_defaults_exist(self):
        config = RunConfig().resolved()
        config.backend.replay_dir = str(data_path("replay_staged"))
        config.validate()  # every default path must point at packaged data

    def test_ledger_defaults_into_workdir(self):
        config = RunConfig(workdir="exp1").resolved()
        assert config.ledger_path == "exp1/ledger.jsonl"

    def test_replay_backend_needs_directory(self):
        config = RunConfig().resolved()
        config.backend.replay_dir = None
        with pytest.raises(ConfigError):
            config.validate()

    def test_http_backend_needs_url(self):
        config = RunConfig().resolved()
        config.backend.kind = "http"
        config.backend.url = None
        with pytest.raises(ConfigError):
            config.validate()

    def test_budget_bounds(self):
        config = RunConfig(max_static_iterations=0).resolved()
        config.backend.replay_dir = str(data_path("replay_staged"))
        with pytest.raises(ConfigError):
            config.validate()

    def test_missing_design_path(self, tmp_path):
        config = RunConfig(design_path=str(tmp_path / "gone.json")).resolved()
        config.backend.replay_dir = str(data_path("replay_staged"))
        with pytest.raises(ConfigError):
            config.validate()
