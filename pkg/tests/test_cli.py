"""End-to-end pipeline orchestration: stages, artifacts, exit codes."""

import json
import os

import pytest

from rolespace.cli import main

TINY_CONFIG = """\
[global]
seed = 0

[synth]
users = 60
quarters = 6
roles = 2
terms = 6
hazard_base = 0.15
hazard_slope = 4.0
skip_prob = 0.05
join_max_quarter = 1
edits_mean = 15.0

[dtm]
topics = 2
iterations = 20
burn_in = 10

[nmf]
clusters = 2
eligible_min_quarters = 2
max_iter = 50

[churn]
window = 2
eligible_min_quarters = 2

[forest]
trees = 10

[eval]
folds = 3
"""

STAGES = ("synth", "ingest", "corpus", "fit-dtm", "profiles", "cluster",
          "dataset", "train", "eval", "ablate", "report")

EXPECTED_ARTIFACTS = (
    "events.tsv", "namespaces.txt", "ground_truth.json",
    "records.csv", "lifespan.csv",
    "corpus", "dtm", "theta.csv",
    "profiles.csv", "nmf", "clusters.csv",
    "cluster_report.csv", "cluster_report.json",
    "dataset.csv", "dataset.features.json",
    "model.json", "eval.json", "lift.csv", "windows.csv",
    "ablation.csv", "figures",
)


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    """Run every stage once on a tiny population; yield (out_dir, cfg_path)."""
    root = tmp_path_factory.mktemp("pipeline")
    cfg = root / "cfg.ini"
    cfg.write_text(TINY_CONFIG)
    out = root / "out"
    for stage in STAGES:
        code = main([stage, "--config", str(cfg), "--out", str(out)])
        assert code == 0, f"stage {stage} failed"
    return out, cfg


class TestPipeline:
    def test_all_artifacts_present(self, pipeline):
        out, _ = pipeline
        for name in EXPECTED_ARTIFACTS:
            assert (out / name).exists(), name

    def test_figures_rendered(self, pipeline):
        out, _ = pipeline
        figures = sorted(p.name for p in (out / "figures").iterdir())
        assert "lifespan.svg" in figures
        assert "role_0.svg" in figures and "role_1.svg" in figures
        assert "metrics.svg" in figures
        assert "lift.svg" in figures
        for p in (out / "figures").iterdir():
            assert p.read_text().startswith("<svg")

    def test_manifest_records_every_stage(self, pipeline):
        out, _ = pipeline
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest["stages"]) == set(STAGES)
        hashes = {entry["config_sha256"] for entry in manifest["stages"].values()}
        assert len(hashes) == 1
        assert all(entry["seed"] == 0 for entry in manifest["stages"].values())
        assert len(hashes.pop()) == 64

    def test_eval_report_well_formed(self, pipeline):
        out, _ = pipeline
        report = json.loads((out / "eval.json").read_text())
        assert report["tp"] + report["fp"] + report["tn"] + report["fn"] > 0
        assert 0.0 <= report["roc_auc"] <= 1.0
        lift_lines = (out / "lift.csv").read_text().strip().splitlines()
        assert lift_lines[0] == "fraction,lift"

    def test_rerun_stage_byte_identical(self, pipeline):
        out, cfg = pipeline
        before = {name: (out / name).read_bytes()
                  for name in ("dataset.csv", "eval.json", "lift.csv",
                               "clusters.csv")}
        for stage in ("dataset", "cluster", "eval"):
            assert main([stage, "--config", str(cfg), "--out", str(out)]) == 0
        for name, content in before.items():
            assert (out / name).read_bytes() == content, name

    def test_report_toggles_select_figures(self, pipeline):
        out, cfg = pipeline
        restricted = cfg.parent / "restricted.ini"
        restricted.write_text(TINY_CONFIG + "\n[report]\ntopics = false\n"
                              "metrics = false\nlift = false\n")
        assert main(["report", "--config", str(restricted),
                     "--out", str(out)]) == 0
        assert sorted(p.name for p in (out / "figures").iterdir()) == \
            ["lifespan.svg"]
        assert main(["report", "--config", str(cfg), "--out", str(out)]) == 0
        assert len(list((out / "figures").iterdir())) >= 4


class TestExitCodes:
    def test_unknown_subcommand_is_usage_error(self, capsys):
        assert main(["frobnicate", "--out", "/tmp/x"]) == 2

    def test_no_subcommand_is_usage_error(self, capsys):
        assert main([]) == 2
        assert "usage" in capsys.readouterr().err.lower()

    def test_missing_out_is_usage_error(self, capsys, monkeypatch):
        monkeypatch.delenv("ROLESPACE_OUT", raising=False)
        assert main(["synth"]) == 2
        assert "--out" in capsys.readouterr().err

    def test_missing_input_names_path(self, tmp_path, capsys):
        assert main(["ingest", "--out", str(tmp_path)]) == 1
        err = capsys.readouterr().err
        assert "missing input" in err
        assert "events.tsv" in err

    def test_report_without_eval_outputs(self, tmp_path, capsys):
        assert main(["report", "--out", str(tmp_path)]) == 1
        assert "missing input" in capsys.readouterr().err

    def test_config_violation_cites_invariant(self, tmp_path, capsys):
        cfg = tmp_path / "bad.ini"
        cfg.write_text("[synth]\nhazard_base = 1.5\n")
        assert main(["synth", "--config", str(cfg),
                     "--out", str(tmp_path / "out")]) == 1
        err = capsys.readouterr().err
        assert "hazard_base must be in [0, 1]" in err

    def test_unknown_section_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "bad.ini"
        cfg.write_text("[nonsense]\nx = 1\n")
        assert main(["synth", "--config", str(cfg),
                     "--out", str(tmp_path / "out")]) == 1
        assert "unknown section" in capsys.readouterr().err

    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "bad.ini"
        cfg.write_text("[dtm]\nbananas = 7\n")
        assert main(["synth", "--config", str(cfg),
                     "--out", str(tmp_path / "out")]) == 1
        assert "unknown" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["synth", "--config", str(tmp_path / "absent.ini"),
                     "--out", str(tmp_path / "out")]) == 1
        assert "absent.ini" in capsys.readouterr().err


class TestSeedAndEnv:
    SMALL = "[synth]\nusers = 10\nquarters = 4\nroles = 2\nterms = 4\n"

    def test_out_env_fallback(self, tmp_path, monkeypatch):
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(self.SMALL)
        target = tmp_path / "env_out"
        monkeypatch.setenv("ROLESPACE_OUT", str(target))
        assert main(["synth", "--config", str(cfg)]) == 0
        assert (target / "events.tsv").is_file()

    def test_seed_flag_changes_stream_and_manifest(self, tmp_path):
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(self.SMALL)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["synth", "--config", str(cfg), "--out", str(out_a),
                     "--seed", "1"]) == 0
        assert main(["synth", "--config", str(cfg), "--out", str(out_b),
                     "--seed", "2"]) == 0
        assert (out_a / "events.tsv").read_bytes() != \
            (out_b / "events.tsv").read_bytes()
        manifest = json.loads((out_a / "manifest.json").read_text())
        assert manifest["stages"]["synth"]["seed"] == 1
