import json

import numpy as np
import pytest

from cogpatterns.cli import PipelineConfig, main, run_pipeline
from cogpatterns.errors import ConfigError
from cogpatterns.util import file_sha256


def tiny_config(out_dir, **overrides):
    obj = {
        "seed": 7,
        "out_dir": str(out_dir),
        "generate": {"n_samples": 160, "n_clusters": 2, "features_per_domain": 1,
                     "impaired_domains": [["M"], ["A", "E"]], "shift": 1.5,
                     "center_spacing_sd": 9.0},
        "select": {"k_folds": 4, "min_gain": 0.005,
                   "kinds": ["LDA", "NB", "KNN"]},
        "embed": {"perplexity": 30, "n_iter": 500, "exaggeration_iters": 200,
                  "momentum_switch_iter": 200, "record_every": 25},
        "segment": {"closing_radius": 2, "min_cluster_size": 12},
    }
    for key, value in overrides.items():
        section, _, name = key.partition(".")
        if name:
            obj.setdefault(section, {})[name] = value
        else:
            obj[section] = value
    return obj


def write_config(tmp_path, obj):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(obj))
    return path


class TestStages:
    def test_generate_is_hash_stable(self, tmp_path):
        cfg_path = write_config(tmp_path, tiny_config(tmp_path / "a"))
        assert main(["generate", "--config", str(cfg_path)]) == 0
        first = {
            name: file_sha256(tmp_path / "a" / name)
            for name in ("cohort.csv", "schema.json", "ground_truth.json")
        }
        assert main(["generate", "--config", str(cfg_path)]) == 0
        second = {
            name: file_sha256(tmp_path / "a" / name)
            for name in ("cohort.csv", "schema.json", "ground_truth.json")
        }
        assert first == second

    def test_ground_truth_lists_domain_sets(self, tmp_path):
        obj = tiny_config(tmp_path / "b")
        obj["generate"]["n_clusters"] = 2
        cfg_path = write_config(tmp_path, obj)
        assert main(["generate", "--config", str(cfg_path)]) == 0
        truth = json.loads((tmp_path / "b" / "ground_truth.json").read_text())
        assert len(truth["impaired_domains"]) == 2
        assert truth["impaired_domains"]["0"] == ["M"]

    def test_generated_csv_feeds_select(self, tmp_path):
        cfg_path = write_config(tmp_path, tiny_config(tmp_path / "c"))
        assert main(["generate", "--config", str(cfg_path)]) == 0
        assert main(["select", "--config", str(cfg_path)]) == 0
        report = json.loads((tmp_path / "c" / "selection_report.json").read_text())
        assert report["consensus"]

    def test_select_reports_baselines_for_all_configured_kinds(self, tmp_path):
        obj = tiny_config(tmp_path / "d")
        obj["select"]["kinds"] = ["LDA", "QDA", "NB", "KNN", "SLI", "SRBF", "RF"]
        cfg_path = write_config(tmp_path, obj)
        assert main(["generate", "--config", str(cfg_path)]) == 0
        assert main(["select", "--config", str(cfg_path)]) == 0
        report = json.loads((tmp_path / "d" / "selection_report.json").read_text())
        assert set(report["classifiers"]) == {
            "LDA", "QDA", "NB", "KNN", "SLI", "SRBF", "RF"
        }
        for entry in report["classifiers"].values():
            assert 0.0 <= entry["baseline_accuracy"] <= 1.0

    def test_empty_consensus_fails_with_message(self, tmp_path, capsys):
        obj = tiny_config(tmp_path / "e", **{"select.min_gain": 1e9})
        cfg_path = write_config(tmp_path, obj)
        assert main(["generate", "--config", str(cfg_path)]) == 0
        assert main(["select", "--config", str(cfg_path)]) == 1
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert "empty consensus" in err["message"]

    def test_svg_has_one_point_per_sample(self, tmp_path):
        cfg_path = write_config(tmp_path, tiny_config(tmp_path / "f"))
        for cmd in ("generate", "select", "embed"):
            assert main([cmd, "--config", str(cfg_path)]) == 0
        svg = (tmp_path / "f" / "scatter.svg").read_text()
        assert svg.count("<circle") == 160

    def test_marker_on_background_fails_with_coordinates(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path, tiny_config(tmp_path / "g"))
        for cmd in ("generate", "select", "embed"):
            assert main([cmd, "--config", str(cfg_path)]) == 0
        rc = main(["segment", "--config", str(cfg_path),
                   "--marker", "99999,99999"])
        assert rc == 1
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert err["error"] == "InvalidMarkerError"
        assert "99999" in err["message"]

    def test_missing_inputs_reported(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path, tiny_config(tmp_path / "h"))
        assert main(["embed", "--config", str(cfg_path)]) == 1
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert err["error"] == "ConfigError"


class TestRun:
    def test_full_run_and_manifest_determinism(self, tmp_path):
        obj = tiny_config(tmp_path / "r1")
        cfg_path = write_config(tmp_path, obj)
        m1 = run_pipeline(PipelineConfig.from_dict(obj))
        m2 = run_pipeline(PipelineConfig.from_dict(obj))
        hashes1 = {k: v["outputs"] for k, v in m1["stages"].items()}
        hashes2 = {k: v["outputs"] for k, v in m2["stages"].items()}
        assert hashes1 == hashes2
        assert set(m1["stages"]) == {"generate", "select", "embed", "segment",
                                     "profile"}
        manifest_on_disk = json.loads((tmp_path / "r1" / "manifest.json").read_text())
        assert manifest_on_disk["config"]["seed"] == 7

    def test_seed_changes_outputs(self, tmp_path):
        obj1 = tiny_config(tmp_path / "r2")
        obj2 = dict(tiny_config(tmp_path / "r3"), seed=8)
        m1 = run_pipeline(PipelineConfig.from_dict(obj1))
        m2 = run_pipeline(PipelineConfig.from_dict(obj2))
        assert (
            m1["stages"]["generate"]["outputs"]["cohort.csv"]
            != m2["stages"]["generate"]["outputs"]["cohort.csv"]
        )

    def test_skip_select_reuses_report(self, tmp_path):
        obj = tiny_config(tmp_path / "r4")
        config = PipelineConfig.from_dict(obj)
        run_pipeline(config)
        report_path = tmp_path / "r4" / "selection_report.json"
        before = file_sha256(report_path)
        manifest = run_pipeline(config, skip_select=True)
        assert "select" not in manifest["stages"]
        assert file_sha256(report_path) == before

    def test_skip_select_requires_existing_report(self, tmp_path):
        obj = tiny_config(tmp_path / "r5")
        config = PipelineConfig.from_dict(obj)
        with pytest.raises(ConfigError):
            run_pipeline(config, skip_select=True)

    def test_run_recovers_planted_structure(self, tmp_path):
        from sklearn.metrics import adjusted_rand_score

        obj = tiny_config(tmp_path / "r6")
        obj["generate"]["n_samples"] = 240
        run_pipeline(PipelineConfig.from_dict(obj))
        truth = json.loads((tmp_path / "r6" / "ground_truth.json").read_text())
        clusters = json.loads((tmp_path / "r6" / "clusters.json").read_text())
        ari = adjusted_rand_score(truth["cluster_of"], clusters["cluster_of"])
        assert ari >= 0.8
        profiles = json.loads((tmp_path / "r6" / "profiles.json").read_text())
        assert {p["cluster"] for p in profiles} == set(range(clusters["n_clusters"]))


class TestConfig:
    def test_unknown_top_level_key(self, tmp_path):
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({"sneed": 1})

    def test_unknown_section_key(self, tmp_path):
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({"select": {"folds": 10}})

    def test_missing_input_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({"cohort_csv": str(tmp_path / "nope.csv")})

    def test_flags_override_config(self, tmp_path):
        obj = tiny_config(tmp_path / "o1")
        cfg_path = write_config(tmp_path, obj)
        assert main(["generate", "--config", str(cfg_path),
                     "--out-dir", str(tmp_path / "o2"), "--seed", "99"]) == 0
        assert (tmp_path / "o2" / "cohort.csv").exists()
        assert not (tmp_path / "o1" / "cohort.csv").exists()

    def test_external_cohort_skips_generate(self, tmp_path):
        obj = tiny_config(tmp_path / "x1")
        run_pipeline(PipelineConfig.from_dict(obj))
        obj2 = tiny_config(tmp_path / "x2")
        obj2["cohort_csv"] = str(tmp_path / "x1" / "cohort.csv")
        obj2["schema"] = str(tmp_path / "x1" / "schema.json")
        manifest = run_pipeline(PipelineConfig.from_dict(obj2))
        assert "generate" not in manifest["stages"]
        assert (tmp_path / "x2" / "clusters.json").exists()
