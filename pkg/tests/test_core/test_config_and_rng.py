from __future__ import annotations

import numpy as np
import pytest

from src.core.errors import ConfigError
from src.core.rng import Rng, derive_seed, splitmix64
from src.utils.config_loader import ConfigLoader, parse_run_config, set_dotted
from src.utils.parallel import ordered_map, worker_count


class TestRng:
    def test_same_seed_same_stream(self):
        a, b = Rng(42), Rng(42)
        assert [a.next_u64() for _ in range(16)] == [b.next_u64() for _ in range(16)]

    def test_splitmix_reference_value(self):
        # first splitmix64 output for state 0
        _, out = splitmix64(0)
        assert out == 0xE220A8397B1DCDAF

    def test_random_in_unit_interval(self):
        r = Rng(5)
        values = [r.random() for _ in range(1000)]
        assert min(values) >= 0.0 and max(values) < 1.0

    def test_permutation_is_a_permutation(self):
        assert sorted(Rng(9).permutation(50)) == list(range(50))

    def test_derive_seed_separates_labels(self):
        assert derive_seed(1, "phantom", "train-0000") != derive_seed(1, "noise", "train-0000")
        assert derive_seed(1, "phantom", "train-0000") == derive_seed(1, "phantom", "train-0000")

    def test_numpy_generator_is_seed_pure(self):
        x = Rng(3).numpy_generator().normal(size=8)
        y = Rng(3).numpy_generator().normal(size=8)
        np.testing.assert_array_equal(x, y)


class TestRunConfigParsing:
    def test_scalars_lists_and_comments(self):
        entries = parse_run_config(
            "# experiment\n"
            "seed = 7\n"
            "noise.enabled = false   # noiseless\n"
            "noise.incident_photons = 2e7\n"
            "net.stage_channels = 4, 8, 8, 8\n"
            "net.block.attention = none\n"
            "eval.sweep_views = 45,\n"
        )
        assert entries == {
            "seed": 7,
            "noise.enabled": False,
            "noise.incident_photons": 2e7,
            "net.stage_channels": [4, 8, 8, 8],
            "net.block.attention": None,
            "eval.sweep_views": [45],
        }

    def test_line_without_equals_is_rejected(self):
        with pytest.raises(ConfigError):
            parse_run_config("seed 7\n")

    def test_unknown_key_names_the_key(self):
        tree = {"seed": 0, "views": {"full": 180}}
        with pytest.raises(ConfigError) as info:
            set_dotted(tree, "views.fulll", 90)
        assert info.value.key == "views.fulll"

    def test_none_literal_kept_for_text_fields(self):
        tree = {"net": {"block": {"attention": "CA"}}}
        set_dotted(tree, "net.block.attention", None)
        assert tree["net"]["block"]["attention"] == "none"


class TestGlobalConfig:
    def test_defaults_when_file_missing(self, tmp_path, monkeypatch):
        monkeypatch.delenv("CT_SPARSE_THREADS", raising=False)
        monkeypatch.delenv("CT_SPARSE_RUNS_DIR", raising=False)
        cfg = ConfigLoader.load_global_config(tmp_path / "absent.yaml")
        assert cfg["runtime"]["runs_dir"] == "runs"
        assert cfg["logging"]["dir"] == "logs"

    def test_environment_overrides(self, tmp_path, monkeypatch):
        path = tmp_path / "g.yaml"
        path.write_text("runtime:\n  threads: 2\n  runs_dir: a\n", encoding="utf-8")
        monkeypatch.setenv("CT_SPARSE_THREADS", "5")
        monkeypatch.setenv("CT_SPARSE_RUNS_DIR", "elsewhere")
        monkeypatch.setenv("LOG_LEVEL", "DEBUG")
        cfg = ConfigLoader.load_global_config(path)
        assert cfg["runtime"] == {"threads": "5", "runs_dir": "elsewhere"}
        assert cfg["logging"]["level"] == "DEBUG"

    def test_partial_file_fills_missing_sections(self, tmp_path, monkeypatch):
        for var in ("ENVIRONMENT", "LOG_LEVEL", "CT_SPARSE_THREADS", "CT_SPARSE_RUNS_DIR"):
            monkeypatch.delenv(var, raising=False)
        path = tmp_path / "g.yaml"
        path.write_text("logging:\n  level: WARNING\nruntime:\n", encoding="utf-8")
        cfg = ConfigLoader.load_global_config(path)
        assert cfg["system"] == {"environment": "development"}
        assert cfg["logging"]["level"] == "WARNING"
        assert cfg["runtime"] == {"runs_dir": "runs"}

    @pytest.mark.parametrize("text", ["- a\n- b\n", "logging: 3\n"])
    def test_non_mapping_content_is_a_config_error(self, tmp_path, text):
        path = tmp_path / "g.yaml"
        path.write_text(text, encoding="utf-8")
        with pytest.raises(ConfigError):
            ConfigLoader.load_global_config(path)

    def test_experiment_section_must_be_mapping(self, tmp_path):
        path = tmp_path / "g.yaml"
        path.write_text("experiment: 3\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            ConfigLoader.load_global_config(path)


class TestOrderedMap:
    @pytest.mark.parametrize("workers", [1, 3, 8])
    def test_results_in_input_order(self, workers):
        assert ordered_map(lambda x: x * x, range(20), workers=workers) == [x * x for x in range(20)]

    def test_worker_count_from_environment(self, monkeypatch):
        monkeypatch.setenv("CT_SPARSE_THREADS", "3")
        assert worker_count() == 3
        assert worker_count(5) == 5

    def test_nested_maps_run_inline(self):
        result = ordered_map(lambda x: ordered_map(lambda y: x + y, range(3), workers=4), range(4), workers=4)
        assert result == [[x + y for y in range(3)] for x in range(4)]
