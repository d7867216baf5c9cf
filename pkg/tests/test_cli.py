"""CLI surface: stage sequencing, exit codes, config handling, artifacts."""

import json

import pytest

from outagegraph.cli import EXIT_CONFIG, EXIT_MISSING, EXIT_OK, SEED_ENV, main
from outagegraph.pipeline import ConfigError, PipelineConfig


def small_config(outdir, **overrides):
    doc = {
        "outdir": str(outdir), "seed": 0, "windows": [60], "k_folds": 3,
        "n_substations": 60, "rate_per_day": 0.08, "planted_positive_rate": 0.15,
        "hidden_dim": 16, "heads": 2, "max_epochs": 10, "embed_epochs": 20,
        "embed_hidden_dim": 16, "min_cluster_size": 10, "scenario_seed": 7,
    }
    doc.update(overrides)
    return doc


def write_config(tmp_path, doc):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return str(path)


STAGES = ["synth", "ingest", "build-graph", "label", "train",
          "baselines", "embed", "cluster", "report"]


@pytest.fixture(scope="module")
def completed_run(tmp_path_factory):
    outdir = tmp_path_factory.mktemp("run")
    cfg_path = outdir / "config.json"
    cfg_path.write_text(json.dumps(small_config(outdir)))
    for stage in STAGES:
        assert main(["--config", str(cfg_path), stage]) == EXIT_OK, stage
    return outdir, str(cfg_path)


class TestPipelineSequence:
    def test_all_stages_succeed_and_emit_artifacts(self, completed_run):
        outdir, _ = completed_run
        for name in ["incidents.csv", "clean_incidents.csv", "rejects.csv",
                     "graph.json", "labels_060.csv", "train_metrics.json",
                     "baseline_metrics.json", "embeddings.json", "clusters.json",
                     "clusters.csv", "cluster_profiles.csv", "report.json",
                     "pdm_metrics.csv"]:
            assert (outdir / name).exists(), name

    def test_report_has_all_four_metrics_per_window(self, completed_run):
        outdir, _ = completed_run
        report = json.loads((outdir / "report.json").read_text())["payload"]
        rows = report["tables"]["pdm_metrics"]
        gnn_rows = [r for r in rows if r["model"] == "multilayer_gnn"]
        assert {r["window_days"] for r in gnn_rows} == {60}
        for r in gnn_rows:
            for metric in ("accuracy", "precision", "recall", "f1"):
                assert "±" in r[metric]

    def test_figures_rendered_alongside_tables(self, completed_run):
        outdir, _ = completed_run
        figures = list((outdir / "figures").glob("*.svg"))
        assert len(figures) >= 2
        assert (outdir / "pdm_metrics.csv").exists()

    def test_artifacts_embed_config_hash(self, completed_run):
        outdir, cfg_path = completed_run
        cfg = PipelineConfig.from_dict(json.loads(open(cfg_path).read()))
        for name in ["train_metrics.json", "baseline_metrics.json", "clusters.json"]:
            doc = json.loads((outdir / name).read_text())
            assert doc["config_hash"] == cfg.hash
            assert doc["config"]["seed"] == cfg.seed  # effective config echoed

    def test_checkpoint_carries_optimizer_state(self, completed_run):
        outdir, _ = completed_run
        doc = json.loads((outdir / "model_060.json").read_text())["payload"]
        assert doc["parameters"]
        opt = doc["optimizer"]
        assert opt["epoch"] > 0
        assert set(opt["first_moments"]) == set(doc["parameters"])


class TestExitCodes:
    def test_missing_artifact_exit_2(self, tmp_path):
        cfg = write_config(tmp_path, small_config(tmp_path / "empty"))
        assert main(["--config", cfg, "train"]) == EXIT_MISSING

    def test_unknown_config_key_exit_1(self, tmp_path):
        cfg = write_config(tmp_path, {"outdir": str(tmp_path), "no_such_key": 1})
        assert main(["--config", cfg, "synth"]) == EXIT_CONFIG

    def test_unknown_scenario_exit_1(self, tmp_path):
        cfg = write_config(tmp_path, small_config(tmp_path, scenario="nope"))
        assert main(["--config", cfg, "synth"]) == EXIT_CONFIG

    def test_report_refuses_mixed_hashes(self, completed_run, tmp_path):
        outdir, cfg_path = completed_run
        doc = json.loads(open(cfg_path).read())
        doc["seed"] = 999  # different config, same artifacts
        other = write_config(tmp_path, doc)
        assert main(["--config", other, "report"]) == EXIT_CONFIG


class TestConfigPlumbing:
    def test_cli_flag_overrides_config(self, tmp_path):
        cfg = write_config(tmp_path, small_config(tmp_path / "o1", n_substations=25))
        assert main(["--config", cfg, "synth", "--n-substations", "30"]) == EXIT_OK
        truth = json.loads((tmp_path / "o1" / "ground_truth.json").read_text())
        assert len(truth["substation_ids"]) == 30

    def test_env_seed_override(self, tmp_path, monkeypatch):
        doc = small_config(tmp_path / "o2", seed=0)
        cfg = write_config(tmp_path, doc)
        monkeypatch.setenv(SEED_ENV, "1234")
        assert main(["--config", cfg, "synth"]) == EXIT_OK
        meta = json.loads((tmp_path / "o2" / "synth_meta.json").read_text())
        expected = PipelineConfig.from_dict({**doc, "seed": 1234}).hash
        assert meta["config_hash"] == expected

    def test_bad_env_seed_exit_1(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path, small_config(tmp_path / "o3"))
        monkeypatch.setenv(SEED_ENV, "not-an-int")
        assert main(["--config", cfg, "synth"]) == EXIT_CONFIG

    def test_from_dict_rejects_unknown(self):
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({"bogus": True})

    def test_hash_ignores_outdir(self):
        a = PipelineConfig.from_dict({"outdir": "x"})
        b = PipelineConfig.from_dict({"outdir": "y"})
        assert a.hash == b.hash

    def test_help_lists_documented_flags(self, capsys):
        with pytest.raises(SystemExit):
            main(["ingest", "--help"])
        out = capsys.readouterr().out
        assert "--tau" in out and "--region-radius-km" in out


class TestTemporalSplitMode:
    def test_temporal_split_trains(self, tmp_path):
        doc = small_config(tmp_path / "ts", fold_strategy="temporal-split",
                           windows=[30])
        cfg = write_config(tmp_path, doc)
        for stage in ["synth", "ingest", "build-graph", "label", "train"]:
            assert main(["--config", cfg, stage]) == EXIT_OK, stage
        metrics = json.loads((tmp_path / "ts" / "train_metrics.json").read_text())
        assert "30" in metrics["payload"]
        assert metrics["payload"]["30"]["summary"]["f1"]["mean"] >= 0.0


class TestConfigFileErrors:
    def test_malformed_json_exit_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["--config", str(bad), "synth"]) == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_non_object_config_exit_1(self, tmp_path):
        bad = tmp_path / "list.json"
        bad.write_text("[1, 2]")
        assert main(["--config", str(bad), "synth"]) == EXIT_CONFIG
