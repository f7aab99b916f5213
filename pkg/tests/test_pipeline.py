"""Pipeline tests: config documents, stage keys, artifact caching, locking,
the experiment drivers, and the CLI verbs, all on a tiny synthetic corpus."""

from __future__ import annotations

import json
from dataclasses import asdict

import pytest

from capvet.cli import main
from capvet.corpus import CaptionRecord, save_corpus
from capvet.pipeline import (
    STAGES,
    PipelineContext,
    config_from_dict,
    config_hash,
    load_config,
    mixed_supervision_run,
    run,
    run_stage,
    scale_sweep,
    stage_key,
    stage_slice,
)
from capvet.pipeline.stages import file_hash
from capvet.validation import ValidationError

ALL_STAGES = ("ingest",) + STAGES

TEXT_ARTIFACTS = (
    "corpus_train.jsonl",
    "corpus_test.jsonl",
    "presence.jsonl",
    "corpus_meta.json",
    "labels.jsonl",
    "targets.jsonl",
    "decisions.jsonl",
    "detections.jsonl",
    "metrics.json",
    "metrics.csv",
    "ap_per_class.csv",
)


def tiny_doc(output_dir, **overrides):
    doc = {
        "output_dir": str(output_dir),
        "seed": 0,
        "corpus": {
            "n_records": 24,
            "categories": ["dog", "cat"],
            "p_present_descriptive": 1.0,
            "p_present_noisy": 0.1,
            "test_fraction": 0.25,
            "image_size": 32,
        },
        "vetting": {"method": "none"},
        "veil": {"width": 16, "layers": 1, "heads": 2, "epochs": 1, "batch_size": 8},
        "wsod": {"steps": 12, "batch_size": 4, "embed_dim": 32},
    }
    for key, value in overrides.items():
        if isinstance(value, dict):
            doc.setdefault(key, {}).update(value)
        else:
            doc[key] = value
    return doc


def tiny_config(output_dir, **overrides):
    return config_from_dict(tiny_doc(output_dir, **overrides))


def statuses(manifest):
    out = {"ingest": manifest["corpus"]["status"]}
    out.update({entry["stage"]: entry["status"] for entry in manifest["stages"]})
    return out


@pytest.fixture(scope="module")
def completed_run(tmp_path_factory):
    """One finished tiny run shared by the read-only tests."""
    root = tmp_path_factory.mktemp("completed")
    config = tiny_config(root / "run")
    manifest = run(config)
    return config, manifest


class TestConfigDocuments:
    def test_minimal_synthetic_document(self, tmp_path):
        config = tiny_config(tmp_path / "run")
        assert config.corpus.categories == ["dog", "cat"]
        assert config.vetting.method == "none"
        assert config.wsod.steps == 12

    def test_output_dir_required(self):
        with pytest.raises(ValidationError, match="needs output_dir"):
            config_from_dict({"corpus": {"categories": ["dog", "cat"]}})

    def test_unknown_top_level_key_rejected(self, tmp_path):
        with pytest.raises(ValidationError, match="config: unknown keys \\['sede'\\]"):
            config_from_dict(tiny_doc(tmp_path, sede=1))

    def test_unknown_section_key_rejected(self, tmp_path):
        with pytest.raises(ValidationError, match="wsod: unknown keys \\['step'\\]"):
            config_from_dict(tiny_doc(tmp_path, wsod={"step": 5}))

    def test_experiment_wsod_defaults_differ_from_module_defaults(self, tmp_path):
        """Runs default to clamp-sum scoring and uniform sampling."""
        from capvet.wsod import WsodConfig

        config = config_from_dict(
            {"output_dir": str(tmp_path), "corpus": {"categories": ["dog", "cat"]}}
        )
        assert config.wsod.prediction_variant == "clamp_sum"
        assert config.wsod.sampler_alpha == 0.0
        assert WsodConfig().prediction_variant == "sigmoid"
        assert WsodConfig().sampler_alpha == 1.0

    def test_toml_and_json_parse_identically(self, tmp_path):
        toml_path = tmp_path / "exp.toml"
        toml_path.write_text(
            '\n'.join(
                [
                    f'output_dir = "{tmp_path / "run"}"',
                    "seed = 3",
                    "[corpus]",
                    "n_records = 24",
                    'categories = ["dog", "cat"]',
                    "p_present_descriptive = 1.0",
                    "test_fraction = 0.25",
                    "image_size = 32",
                    "[vetting]",
                    'method = "none"',
                    "[wsod]",
                    "steps = 12",
                ]
            )
        )
        json_path = tmp_path / "exp.json"
        json_path.write_text(
            json.dumps(
                {
                    "output_dir": str(tmp_path / "run"),
                    "seed": 3,
                    "corpus": {
                        "n_records": 24,
                        "categories": ["dog", "cat"],
                        "p_present_descriptive": 1.0,
                        "test_fraction": 0.25,
                        "image_size": 32,
                    },
                    "vetting": {"method": "none"},
                    "wsod": {"steps": 12},
                }
            )
        )
        from_toml = load_config(toml_path)
        from_json = load_config(json_path)
        assert from_toml == from_json
        assert config_hash(from_toml) == config_hash(from_json)

    def test_other_suffixes_rejected(self, tmp_path):
        path = tmp_path / "exp.yaml"
        path.write_text("output_dir: x")
        with pytest.raises(ValidationError, match="must be .toml or .json"):
            load_config(path)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ValidationError, match="does not exist"):
            load_config(tmp_path / "nope.toml")

    @pytest.mark.parametrize(
        "overrides, message",
        [
            ({"extraction_mode": "regex"}, "extraction_mode"),
            ({"target_source": "guess"}, "target_source"),
            ({"id_categories": ["dog"], "ood_categories": ["dog"]}, "overlap"),
            ({"vocabulary_path": "no/such/file.txt"}, "does not exist"),
            ({"target_source": "ensemble"}, "needs prediction_paths"),
            ({"vetting": {"method": "psychic"}}, "unknown vetting method"),
            ({"vetting": {"prompts": 0}}, "prompts must be"),
            ({"corpus": {"test_fraction": 1.5}}, "test_fraction"),
            ({"evaluate": {"ap_method": "trapezoid"}}, "ap_method"),
        ],
    )
    def test_validation_failures(self, tmp_path, overrides, message):
        with pytest.raises(ValidationError, match=message):
            config_from_dict(tiny_doc(tmp_path, **overrides))

    def test_synthetic_corpus_needs_categories(self, tmp_path):
        with pytest.raises(ValidationError, match="explicit category list"):
            config_from_dict({"output_dir": str(tmp_path)})

    def test_file_corpus_needs_train_path(self, tmp_path):
        with pytest.raises(ValidationError, match="needs train_path"):
            config_from_dict(
                {"output_dir": str(tmp_path), "corpus": {"source": "file"}}
            )

    def test_ensemble_method_suffix_accepted(self, tmp_path):
        config = tiny_config(tmp_path, vetting={"method": "local_clip_e"})
        assert config.vetting.method == "local_clip_e"


class TestStageSeeds:
    def test_fixed_offsets(self, tmp_path):
        config = tiny_config(tmp_path, seed=10)
        assert config.stage_seed("ingest") == 10
        offsets = {stage: config.stage_seed(stage) - 10 for stage in STAGES}
        assert offsets == {
            "extract": 1,
            "pseudo_label": 2,
            "train_veil": 3,
            "vet": 4,
            "train_wsod": 5,
            "evaluate": 6,
        }

    def test_unknown_stage_rejected(self, tmp_path):
        with pytest.raises(ValidationError, match="unknown stage"):
            tiny_config(tmp_path).stage_seed("deploy")


class TestStageKeys:
    def changed_slices(self, tmp_path, **overrides):
        base = tiny_config(tmp_path / "a")
        changed = tiny_config(tmp_path / "a", **overrides)
        return [
            stage
            for stage in ALL_STAGES
            if stage_slice(base, stage) != stage_slice(changed, stage)
        ]

    def test_sampler_alpha_touches_only_wsod_training(self, tmp_path):
        assert self.changed_slices(tmp_path, wsod={"sampler_alpha": 1.0}) == ["train_wsod"]

    def test_threshold_touches_only_vetting(self, tmp_path):
        assert self.changed_slices(tmp_path, vetting={"threshold": 0.7}) == ["vet"]

    def test_corpus_size_touches_only_ingest(self, tmp_path):
        assert self.changed_slices(tmp_path, corpus={"n_records": 30}) == ["ingest"]

    def test_veil_width_touches_veil_training_only(self, tmp_path):
        assert self.changed_slices(tmp_path, veil={"width": 32}) == ["train_veil"]

    def test_upstream_hashes_enter_the_key(self, tmp_path):
        config = tiny_config(tmp_path)
        a = stage_key(config, "train_wsod", {"decisions.jsonl": "aa"})
        b = stage_key(config, "train_wsod", {"decisions.jsonl": "bb"})
        assert a != b

    def test_unknown_stage_rejected(self, tmp_path):
        with pytest.raises(ValidationError, match="unknown stage"):
            stage_slice(tiny_config(tmp_path), "deploy")


class TestRun:
    def test_manifest_and_artifacts(self, completed_run):
        config, manifest = completed_run
        assert statuses(manifest) == {stage: "done" for stage in ALL_STAGES}
        assert [e["stage"] for e in manifest["stages"]] == list(STAGES)
        ctx = PipelineContext(config)
        for name in TEXT_ARTIFACTS:
            assert (ctx.paths.root / name).exists(), name
        assert ctx.paths.wsod_model.exists()
        assert not ctx.paths.lock.exists()
        # Recorded hashes describe what is on disk right now.
        for entry in [manifest["corpus"], *manifest["stages"]]:
            for rel, digest in entry["artifacts"].items():
                assert file_hash(ctx.paths.root / rel) == digest
        doc = json.loads(ctx.paths.metrics_json.read_text())
        assert 0.0 <= doc["detection"]["map"] <= 1.0
        assert doc["vetting"]["recall"] == 1.0  # accept-everything run

    def test_caching_and_selective_invalidation(self, tmp_path):
        config = tiny_config(tmp_path / "run")
        first = run(config)
        assert statuses(first) == {stage: "done" for stage in ALL_STAGES}

        again = run(tiny_config(tmp_path / "run"))
        assert statuses(again) == {stage: "cached" for stage in ALL_STAGES}

        # A vet-only knob reruns vet; its byte-identical output lets every
        # downstream stage stay cached.
        threshold_flip = run(tiny_config(tmp_path / "run", vetting={"threshold": 0.9}))
        expected = {stage: "cached" for stage in ALL_STAGES}
        expected["vet"] = "done"
        assert statuses(threshold_flip) == expected

        # A training knob reruns training, and the new model reruns evaluate.
        sampler_flip = run(
            tiny_config(
                tmp_path / "run",
                vetting={"threshold": 0.9},
                wsod={"sampler_alpha": 1.0},
            )
        )
        expected = {stage: "cached" for stage in ALL_STAGES}
        expected["train_wsod"] = "done"
        expected["evaluate"] = "done"
        assert statuses(sampler_flip) == expected

    def test_identical_configs_produce_identical_bytes(self, tmp_path):
        run(tiny_config(tmp_path / "one"))
        run(tiny_config(tmp_path / "two"))
        for name in TEXT_ARTIFACTS:
            a = (tmp_path / "one" / name).read_bytes()
            b = (tmp_path / "two" / name).read_bytes()
            assert a == b, name

    def test_locked_output_dir_rejected(self, tmp_path):
        config = tiny_config(tmp_path / "run")
        config.output_dir.mkdir(parents=True)
        (config.output_dir / ".lock").write_text("1234\n")
        with pytest.raises(ValidationError, match="locked by another run"):
            run(config)
        # The foreign lock stays in place for its owner.
        assert (config.output_dir / ".lock").exists()

    def test_stage_failure_recorded_and_lock_released(self, tmp_path):
        # 16 model dims cannot split over 3 heads; training fails mid-run.
        config = tiny_config(
            tmp_path / "run", vetting={"method": "veil"}, veil={"heads": 3}
        )
        with pytest.raises(ValidationError):
            run(config)
        manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
        failed = manifest["stages"][-1]
        assert failed["stage"] == "train_veil"
        assert failed["status"] == "failed"
        assert failed["error"]
        assert not (tmp_path / "run" / ".lock").exists()


class TestRunStage:
    def test_single_stages_in_order(self, tmp_path):
        config = tiny_config(tmp_path / "run")
        entry = run_stage(config, "ingest")
        assert entry["status"] == "done"
        assert "corpus_train.jsonl" in entry["artifacts"]
        entry = run_stage(config, "extract")
        assert entry["status"] == "done"
        manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
        assert manifest["corpus"]["stage"] == "ingest"
        assert [e["stage"] for e in manifest["stages"]] == ["extract"]

    def test_missing_upstream_names_artifacts(self, tmp_path):
        config = tiny_config(tmp_path / "run")
        with pytest.raises(ValidationError, match="run the earlier verbs") as err:
            run_stage(config, "vet")
        assert "labels.jsonl" in str(err.value)

    def test_unknown_stage_rejected(self, tmp_path):
        with pytest.raises(ValidationError, match="unknown stage"):
            run_stage(tiny_config(tmp_path / "run"), "deploy")

    def test_file_corpus_ingest_fills_pos_tags(self, tmp_path):
        corpus_path = tmp_path / "train.jsonl"
        save_corpus(
            [
                CaptionRecord(record_id="r1", caption="a dog sits", image_ref="r1.png"),
                CaptionRecord(record_id="r2", caption="a cat sleeps", image_ref="r2.png"),
            ],
            corpus_path,
        )
        config = config_from_dict(
            {
                "output_dir": str(tmp_path / "run"),
                "corpus": {"source": "file", "train_path": str(corpus_path)},
            }
        )
        run_stage(config, "ingest")
        ctx = PipelineContext(config)
        prepared = ctx.train_records()
        assert all(r.split == "train" for r in prepared)
        assert all(r.pos_tags is not None for r in prepared)
        meta = json.loads(ctx.paths.corpus_meta.read_text())
        assert meta["source"] == "file"


class TestExperimentDrivers:
    def driver_config(self, output_dir):
        return tiny_config(
            output_dir,
            corpus={"p_present_noisy": 0.05},
            vetting={"method": "oracle"},
        )

    def test_mixed_supervision_degenerates_without_noisy_records(self, tmp_path):
        config = self.driver_config(tmp_path / "run")
        ctx = PipelineContext(config)
        run_stage(config, "ingest")
        presence = ctx.presence()
        train_ids = [r.record_id for r in ctx.train_records()][:4]
        clean = {
            rid: {cat for (r, cat), bit in presence.items() if r == rid and bit}
            for rid in train_ids
        }
        rows = mixed_supervision_run(clean, [], config)
        assert [r["row"] for r in rows] == [
            "clean_only",
            "clean_plus_noisy",
            "clean_plus_vetted",
            "clean_plus_vetted_weighted",
        ]
        maps = {r["map"] for r in rows}
        assert len(maps) == 1
        sweep_csv = (config.output_dir / "mixed_supervision.csv").read_text()
        assert sweep_csv.startswith("row,map\n")

    def test_mixed_supervision_rejects_overlapping_pools(self, tmp_path):
        config = self.driver_config(tmp_path / "run")
        run_stage(config, "ingest")
        ctx = PipelineContext(config)
        records = ctx.train_records()
        clean = {records[0].record_id: {"dog"}}
        with pytest.raises(ValidationError, match="overlap"):
            mixed_supervision_run(clean, [records[0]], config)

    def test_scale_sweep_rows_and_csv(self, tmp_path):
        config = self.driver_config(tmp_path / "run")
        run_stage(config, "ingest")
        ctx = PipelineContext(config)
        pool = ctx.train_records()[:8]
        rows = scale_sweep(pool, [4, 8], config)
        assert [r["n"] for r in rows] == [4, 8]
        for row in rows:
            assert 0.0 <= row["unvetted"] <= 1.0
            assert 0.0 <= row["vetted"] <= 1.0
        sweep = (config.output_dir / "scale_sweep.csv").read_text()
        assert sweep.splitlines()[0] == "n,unvetted,vetted"
        assert len(sweep.splitlines()) == 3

    @pytest.mark.parametrize(
        "increments, message",
        [([], "non-empty"), ([0], "positive"), ([999], "exceeds")],
    )
    def test_scale_sweep_increment_validation(self, tmp_path, increments, message):
        config = self.driver_config(tmp_path / "run")
        run_stage(config, "ingest")
        pool = PipelineContext(config).train_records()[:4]
        with pytest.raises(ValidationError, match=message):
            scale_sweep(pool, increments, config)


def write_config_file(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


class TestCli:
    def test_stage_verbs_and_run(self, tmp_path, capsys):
        cfg = write_config_file(tmp_path / "exp.json", tiny_doc(tmp_path / "run"))
        assert main(["ingest", "--config", cfg]) == 0
        out = capsys.readouterr().out
        assert out.startswith("ingest: done")
        assert "corpus_train.jsonl" in out
        assert main(["run", "--config", cfg]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "ingest: cached"
        assert len(lines) == 7
        assert lines[-1].startswith("evaluate:")

    def test_output_dir_env_override(self, tmp_path, capsys, monkeypatch):
        configured = tmp_path / "configured"
        actual = tmp_path / "actual"
        cfg = write_config_file(tmp_path / "exp.json", tiny_doc(configured))
        monkeypatch.setenv("CAPVET_OUTPUT_DIR", str(actual))
        assert main(["ingest", "--config", cfg]) == 0
        capsys.readouterr()
        assert (actual / "corpus_train.jsonl").exists()
        assert not configured.exists()

    def test_report_renders_tables_and_plot(self, completed_run, capsys):
        config, _ = completed_run
        cfg = write_config_file(
            config.output_dir.parent / "exp.json", tiny_doc(config.output_dir)
        )
        assert main(["report", "--config", cfg, "--plot"]) == 0
        capsys.readouterr()
        report = (config.output_dir / "report.txt").read_text()
        assert "Detection" in report
        assert "mean" in report
        assert "Vetting" in report
        assert (config.output_dir / "pr_curves.png").stat().st_size > 0

    def test_report_before_evaluate_fails_cleanly(self, tmp_path, capsys):
        cfg = write_config_file(tmp_path / "exp.json", tiny_doc(tmp_path / "run"))
        assert main(["report", "--config", cfg]) == 2
        assert "run evaluate first" in capsys.readouterr().err

    def test_bad_config_path_reports_error(self, tmp_path, capsys):
        assert main(["ingest", "--config", str(tmp_path / "nope.json")]) == 2
        assert "error:" in capsys.readouterr().err

    def test_annotate_serve_validates_static_dir(self, tmp_path, capsys):
        from capvet.annotation.store import save_tasks

        from test_annotation_store import make_task

        tasks = tmp_path / "tasks.jsonl"
        save_tasks(tasks, [make_task(1)])
        code = main(
            [
                "annotate-serve",
                "--tasks", str(tasks),
                "--log", str(tmp_path / "log.jsonl"),
                "--static", str(tmp_path / "missing_ui"),
            ]
        )
        assert code == 2
        assert "static dir does not exist" in capsys.readouterr().err
