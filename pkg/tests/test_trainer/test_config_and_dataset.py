from __future__ import annotations

import json

import numpy as np
import pytest

from src.core.errors import ConfigError, FormatError, IncompatibleCheckpointError, MissingArtifactError
from src.sino.pipeline import crop_views
from src.trainer.config import (
    ExperimentConfig,
    dump_experiment_config,
    experiment_from_entries,
    load_experiment_config,
)
from src.trainer.dataset import MANIFEST_NAME, build_dataset, ensure_dataset, load_dataset, read_manifest, stack
from src.utils.config_loader import parse_run_config


class TestExperimentConfig:
    def test_dump_and_parse_round_trip(self, toy_config):
        text = dump_experiment_config(toy_config)
        again = experiment_from_entries(parse_run_config(text))
        assert again == toy_config
        assert again.hash() == toy_config.hash()

    def test_file_round_trip(self, toy_run_config, toy_config):
        assert load_experiment_config(toy_run_config) == toy_config

    def test_overrides_win_over_file(self, toy_run_config):
        cfg = load_experiment_config(toy_run_config, overrides={"seed": 11})
        assert cfg.seed == 11

    def test_global_section_sits_under_file(self, toy_run_config):
        cfg = load_experiment_config(toy_run_config, global_cfg={"experiment": {"fbp_window": "hann", "seed": 99}})
        assert cfg.fbp_window == "hann"
        assert cfg.seed == 3

    def test_hash_tracks_content(self, toy_entries):
        a = experiment_from_entries(toy_entries)
        b = experiment_from_entries({**toy_entries, "noise.incident_photons": 1e5})
        assert a.hash() != b.hash()
        assert a.run_dir("runs").name == a.hash()[:12]

    def test_unknown_key(self, toy_entries):
        with pytest.raises(ConfigError) as info:
            experiment_from_entries({**toy_entries, "views.fulll": 16})
        assert info.value.key == "views.fulll"

    @pytest.mark.parametrize(
        "override",
        [
            {"views.sparse": 7},
            {"views.padded": 48},
            {"phantom.size": 24},
            {"schedules.radon.switch_epoch": 2},
            {"net.block.shuffle_groups": 3},
            {"eval.roi": [10, 10, 8]},
        ],
    )
    def test_invalid_values(self, toy_entries, override):
        with pytest.raises(ConfigError):
            experiment_from_entries({**toy_entries, **override})

    def test_missing_run_config(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            load_experiment_config(tmp_path / "absent.cfg")

    def test_schedule_learning_rate_switch(self):
        schedule = ExperimentConfig().schedules.radon
        assert schedule.lr(0) == schedule.lr_initial
        assert schedule.lr(schedule.switch_epoch) == schedule.lr_late


class TestDataset:
    def test_counts_and_shapes(self, toy_config):
        ds = build_dataset(toy_config, workers=1)
        assert [len(ds[s]) for s in ("train", "val", "test")] == [4, 2, 2]
        sample = ds["train"][0]
        assert sample.phantom.shape == (16, 16)
        assert sample.r_gt.samples.shape == (16, 16)
        assert sample.r_sv.views == 8
        assert sample.r_fv.views == 16
        assert stack(ds["train"], "r_fv").shape == (4, 1, 16, 16)

    def test_deterministic_across_worker_counts(self, toy_config):
        a = build_dataset(toy_config, workers=1)
        b = build_dataset(toy_config, workers=4)
        assert a.mu_scale == b.mu_scale
        for x, y in zip(a, b):
            assert x.sample_id == y.sample_id
            np.testing.assert_array_equal(x.phantom, y.phantom)
            np.testing.assert_array_equal(x.r_fv.samples, y.r_fv.samples)

    def test_seed_changes_phantoms(self, toy_entries):
        a = build_dataset(experiment_from_entries(toy_entries), workers=1)
        b = build_dataset(experiment_from_entries({**toy_entries, "seed": 4}), workers=1)
        assert not np.array_equal(a["train"][0].phantom, b["train"][0].phantom)

    def test_noiseless_interpolation_keeps_sampled_views(self, toy_entries):
        cfg = experiment_from_entries({**toy_entries, "noise.enabled": False})
        sample = build_dataset(cfg, workers=1)["test"][0]
        full = crop_views(sample.r_fv, cfg.views.full)
        np.testing.assert_allclose(full.samples[::2], sample.r_sv.samples)
        np.testing.assert_allclose(sample.r_sv.samples, sample.r_gt.samples[::2])

    def test_peak_attenuation_scale(self, toy_config):
        ds = build_dataset(toy_config, workers=1)
        peak = max(float(s.r_gt.samples.max()) for s in ds["train"])
        assert ds.mu_scale * peak == pytest.approx(toy_config.noise.peak_attenuation)

    def test_write_and_load(self, toy_config, tmp_path):
        built = build_dataset(toy_config, tmp_path / "data", workers=1)
        manifest = read_manifest(tmp_path / "data")
        assert manifest["config_hash"] == toy_config.hash()
        assert len(manifest["samples"]) == 8
        loaded = load_dataset(tmp_path / "data", toy_config)
        assert loaded.mu_scale == built.mu_scale
        for x, y in zip(built, loaded):
            np.testing.assert_array_equal(x.r_sv.samples, y.r_sv.samples)
            np.testing.assert_array_equal(x.r_fv.angles, y.r_fv.angles)

    def test_load_single_split(self, toy_config, tmp_path):
        build_dataset(toy_config, tmp_path, workers=1)
        ds = load_dataset(tmp_path, toy_config, splits=("test",))
        assert len(ds["test"]) == 2 and not ds["train"]

    def test_config_mismatch(self, toy_config, toy_entries, tmp_path):
        build_dataset(toy_config, tmp_path, workers=1)
        other = experiment_from_entries({**toy_entries, "seed": 8})
        with pytest.raises(IncompatibleCheckpointError):
            load_dataset(tmp_path, other)

    def test_tampered_sample(self, toy_config, tmp_path):
        build_dataset(toy_config, tmp_path, workers=1)
        victim = tmp_path / "samples" / "val-0001.tnsr"
        data = bytearray(victim.read_bytes())
        data[-1] ^= 0xFF
        victim.write_bytes(bytes(data))
        with pytest.raises(FormatError):
            load_dataset(tmp_path, toy_config)

    def test_manifest_schema_enforced(self, toy_config, tmp_path):
        build_dataset(toy_config, tmp_path, workers=1)
        path = tmp_path / MANIFEST_NAME
        manifest = json.loads(path.read_text(encoding="utf-8"))
        del manifest["mu_scale"]
        path.write_text(json.dumps(manifest), encoding="utf-8")
        with pytest.raises(FormatError):
            read_manifest(tmp_path)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            read_manifest(tmp_path)

    def test_ensure_reuses_written_dataset(self, toy_config, tmp_path):
        build_dataset(toy_config, tmp_path, workers=1)
        ds = ensure_dataset(toy_config, tmp_path)
        assert ds.root == tmp_path
