"""Run orchestration: stage keys, artifact caching, manifest, and the
paired-run experiment drivers (mixed supervision, scale sweep).

A stage's key hashes the slice of config it reads plus the hashes of its
upstream artifacts, so an unchanged stage is skipped on resume and any
upstream change invalidates everything downstream. One lock file per output
directory keeps concurrent runs out of each other's artifacts.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from ..corpus import CaptionRecord, CategoryVocabulary, split_corpus
from ..synthetic import generate_synthetic_corpus
from ..validation import ValidationError
from ..wsod import ImageLabelSet, decisions_to_label_sets
from .config import STAGES, ExperimentConfig
from .stages import (
    PipelineContext,
    STAGE_FUNCS,
    category_sets_for,
    detection_map,
    extract_all,
    file_hash,
    gt_from_scenes,
    train_veil_on,
    vet_with_method,
    wsod_train_on,
)
from ..metrics.reports import csv_content
from ..pseudo_labels import assign_targets

logger = logging.getLogger(__name__)

# Upstream artifacts each stage reads, as RunPaths attribute names. The vet
# stage additionally depends on the veil artifact, resolved at key time.
STAGE_INPUTS = {
    "ingest": [],
    "extract": ["corpus_train", "corpus_test"],
    "pseudo_label": ["labels", "presence"],
    "train_veil": ["corpus_train", "labels", "targets"],
    "vet": ["corpus_train", "labels", "targets", "presence", "corpus_meta"],
    "train_wsod": ["decisions", "corpus_meta"],
    "evaluate": ["wsod_model", "decisions", "corpus_test", "presence", "corpus_meta"],
}


def stage_slice(config: ExperimentConfig, stage: str) -> dict:
    """The part of the config a stage's output depends on."""
    if stage == "ingest":
        return {"corpus": asdict(config.corpus), "seed": config.seed}
    if stage == "extract":
        return {
            "extraction_mode": config.extraction_mode,
            "vocabulary_path": config.vocabulary_path,
            "categories": list(config.corpus.categories),
        }
    if stage == "pseudo_label":
        return {
            "target_source": config.target_source,
            "prediction_paths": list(config.prediction_paths),
            "annotations_path": config.annotations_path,
        }
    if stage == "train_veil":
        return {
            "method": config.vetting.method,
            "veil": asdict(config.veil),
            "seed": config.stage_seed(stage),
        }
    if stage == "vet":
        return {"vetting": asdict(config.vetting), "seed": config.stage_seed(stage)}
    if stage == "train_wsod":
        return {"wsod": asdict(config.wsod), "seed": config.stage_seed(stage)}
    if stage == "evaluate":
        return {"evaluate": asdict(config.evaluate)}
    raise ValidationError(f"unknown stage {stage!r}")


def _canonical_hash(doc) -> str:
    blob = json.dumps(doc, sort_keys=True, default=str).encode()
    return hashlib.blake2b(blob, digest_size=16).hexdigest()


def config_hash(config: ExperimentConfig) -> str:
    return _canonical_hash(config.to_dict())


def stage_key(config: ExperimentConfig, stage: str, upstream: Mapping[str, str]) -> str:
    return _canonical_hash({"stage": stage, "slice": stage_slice(config, stage), "upstream": dict(upstream)})


@contextmanager
def output_lock(ctx: PipelineContext):
    ctx.paths.root.mkdir(parents=True, exist_ok=True)
    try:
        fd = os.open(ctx.paths.lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ValidationError(
            f"output dir {ctx.paths.root} is locked by another run; "
            f"remove {ctx.paths.lock} if that run is gone"
        )
    os.write(fd, f"{os.getpid()}\n".encode())
    os.close(fd)
    try:
        yield
    finally:
        ctx.paths.lock.unlink(missing_ok=True)


def _load_manifest(ctx: PipelineContext) -> dict:
    if ctx.paths.manifest.exists():
        return json.loads(ctx.paths.manifest.read_text())
    return {"config_hash": "", "corpus": None, "stages": []}


def _write_manifest(ctx: PipelineContext, manifest: dict) -> None:
    ctx.paths.manifest.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _hash_artifacts(ctx: PipelineContext, paths: Sequence[Path]) -> dict[str, str]:
    return {str(p.relative_to(ctx.paths.root)): file_hash(p) for p in paths}


def _artifacts_intact(ctx: PipelineContext, artifacts: Mapping[str, str]) -> bool:
    for rel, digest in artifacts.items():
        path = ctx.paths.root / rel
        if not path.exists() or file_hash(path) != digest:
            return False
    return True


def _upstream_hashes(ctx: PipelineContext, stage: str, registry: Mapping[str, str]) -> dict[str, str]:
    """Hashes of this stage's inputs, from the current artifact registry."""
    upstream = {}
    names = list(STAGE_INPUTS[stage])
    if stage == "vet":
        veil_artifact = "veil_model.pt" if ctx.config.vetting.method == "veil" else "train_veil.json"
        if veil_artifact in registry:
            upstream[veil_artifact] = registry[veil_artifact]
    for name in names:
        rel = getattr(ctx.paths, name).name
        if rel in registry:
            upstream[rel] = registry[rel]
    return upstream


def _entry_for(manifest: dict, stage: str) -> dict | None:
    for entry in manifest["stages"]:
        if entry["stage"] == stage:
            return entry
    return None


def run(config: ExperimentConfig) -> dict:
    """Run ingest plus the six pipeline stages; returns the manifest.

    Completed stages whose key and artifacts are unchanged are reused. A
    stage failure is recorded in the manifest and re-raised.
    """
    ctx = PipelineContext(config)
    with output_lock(ctx):
        previous = _load_manifest(ctx)
        manifest: dict = {"config_hash": config_hash(config), "corpus": None, "stages": []}
        registry: dict[str, str] = {}
        current = {"stage": "ingest"}

        def execute(stage: str) -> dict:
            current["stage"] = stage
            key = stage_key(config, stage, _upstream_hashes(ctx, stage, registry))
            old = previous["corpus"] if stage == "ingest" else _entry_for(previous, stage)
            if (
                old is not None
                and old.get("key") == key
                and old.get("status") in ("done", "cached")
                and _artifacts_intact(ctx, old["artifacts"])
            ):
                logger.info("stage %s: cached", stage)
                entry = {"stage": stage, "key": key, "status": "cached", "artifacts": dict(old["artifacts"])}
            else:
                logger.info("stage %s: running", stage)
                paths = STAGE_FUNCS[stage](ctx)
                entry = {
                    "stage": stage,
                    "key": key,
                    "status": "done",
                    "artifacts": _hash_artifacts(ctx, paths),
                }
            registry.update(entry["artifacts"])
            return entry

        try:
            manifest["corpus"] = execute("ingest")
            _write_manifest(ctx, manifest)
            for stage in STAGES:
                manifest["stages"].append(execute(stage))
                _write_manifest(ctx, manifest)
        except Exception as exc:
            manifest["stages"].append(
                {"stage": current["stage"], "status": "failed", "error": str(exc), "artifacts": {}}
            )
            _write_manifest(ctx, manifest)
            raise
    return manifest


def run_stage(config: ExperimentConfig, stage: str) -> dict:
    """Run a single stage, requiring its upstream artifacts on disk."""
    if stage != "ingest" and stage not in STAGES:
        raise ValidationError(f"unknown stage {stage!r}; stages: ingest, {', '.join(STAGES)}")
    ctx = PipelineContext(config)
    with output_lock(ctx):
        manifest = _load_manifest(ctx)
        registry: dict[str, str] = {}
        if manifest["corpus"]:
            registry.update(manifest["corpus"]["artifacts"])
        for entry in manifest["stages"]:
            registry.update(entry.get("artifacts", {}))
        missing = []
        for name in STAGE_INPUTS[stage]:
            path = getattr(ctx.paths, name)
            optional = name in ("corpus_test", "presence", "targets")
            if not path.exists() and not optional:
                missing.append(path.name)
        if missing:
            raise ValidationError(
                f"stage {stage} needs {missing}; run the earlier verbs (or `run`) first"
            )
        key = stage_key(config, stage, _upstream_hashes(ctx, stage, registry))
        paths = STAGE_FUNCS[stage](ctx)
        entry = {"stage": stage, "key": key, "status": "done", "artifacts": _hash_artifacts(ctx, paths)}
        if stage == "ingest":
            manifest["corpus"] = entry
        else:
            old = _entry_for(manifest, stage)
            if old is not None:
                manifest["stages"].remove(old)
            manifest["stages"].append(entry)
            order = {name: i for i, name in enumerate(STAGES)}
            manifest["stages"].sort(key=lambda e: order.get(e["stage"], 99))
        manifest.setdefault("config_hash", "")
        manifest["config_hash"] = config_hash(config)
        _write_manifest(ctx, manifest)
    return entry


# ---------------------------------------------------------------------------
# Experiment drivers.


def _synthetic_world(config: ExperimentConfig):
    """Records, presence, scenes, and the held-out test ids for eval."""
    if config.corpus.source != "synthetic":
        raise ValidationError("this experiment driver needs a synthetic corpus config")
    syn = config.corpus.synthetic_config(config.stage_seed("ingest"))
    records, presence, scenes = generate_synthetic_corpus(syn)
    train, test = split_corpus(records, config.corpus.test_fraction, seed=config.seed)
    return records, presence, scenes, train, test


def _label_sets_from_labels(labels_by_record: Mapping[str, Sequence]) -> list[ImageLabelSet]:
    return [
        ImageLabelSet(rid, {lab.category for lab in labs})
        for rid, labs in sorted(labels_by_record.items())
        if labs
    ]


def _vetted_noisy_sets(
    config: ExperimentConfig,
    noisy_records: Sequence[CaptionRecord],
    presence,
    scenes,
) -> tuple[list[ImageLabelSet], list[ImageLabelSet]]:
    """(all extracted sets, vetted sets) for the noisy corpus."""
    vocab = CategoryVocabulary(list(config.corpus.categories))
    labels = extract_all(noisy_records, vocab, config.extraction_mode)
    targets = assign_targets(labels, category_sets_for(config, presence), source=config.target_source)
    veil_model = None
    if config.vetting.method == "veil":
        veil_model = train_veil_on(
            config, noisy_records, labels, targets, seed=config.stage_seed("train_veil")
        )
    decisions = vet_with_method(
        config,
        noisy_records,
        labels,
        presence=presence,
        provider=scenes,
        seed=config.stage_seed("vet"),
        veil_model=veil_model,
        targets=targets,
    )
    return _label_sets_from_labels(labels), decisions_to_label_sets(decisions)


MIXED_ROWS = ("clean_only", "clean_plus_noisy", "clean_plus_vetted", "clean_plus_vetted_weighted")


def mixed_supervision_run(
    clean_labels: Mapping[str, Iterable[str]],
    noisy_records: Sequence[CaptionRecord],
    config: ExperimentConfig,
) -> list[dict]:
    """Four-row ablation: clean-only, +noisy, +vetted-noisy, +weighted sampling.

    Clean labels are trusted image-level sets and are never vetted. With no
    noisy records every row degenerates to the clean-only training, so the
    clean result is reported for all four.
    """
    overlap = sorted(set(clean_labels) & {r.record_id for r in noisy_records})
    if overlap:
        raise ValidationError(f"clean and noisy record ids overlap: {overlap[:5]}")
    _, presence, scenes, _, test = _synthetic_world(config)
    held_out = {*clean_labels, *(r.record_id for r in noisy_records)}
    test_ids = [r.record_id for r in test if r.record_id not in held_out]
    if not test_ids:
        raise ValidationError("no test records left after removing training ids")

    categories = list(config.corpus.categories)
    clean_sets = [
        ImageLabelSet(rid, set(cats)) for rid, cats in sorted(clean_labels.items()) if cats
    ]
    if not clean_sets:
        raise ValidationError("clean label sets are empty")
    gt = gt_from_scenes(scenes, test_ids)
    seed = config.stage_seed("train_wsod")
    alpha_on = config.wsod.sampler_alpha if config.wsod.sampler_alpha > 0 else 1.0

    def evaluate(sets: list[ImageLabelSet], alpha: float) -> float:
        model = wsod_train_on(config, categories, sets, scenes, seed=seed, sampler_alpha=alpha)
        _, mean_ap = detection_map(
            model, test_ids, scenes, gt, config.evaluate.iou_thresh, config.evaluate.ap_method
        )
        return mean_ap

    if not noisy_records:
        logger.info("no noisy records: all mixed-supervision rows equal clean-only")
        clean_map = evaluate(clean_sets, 0.0)
        rows = [{"row": name, "map": clean_map} for name in MIXED_ROWS]
    else:
        noisy_all, noisy_vetted = _vetted_noisy_sets(config, noisy_records, presence, scenes)
        rows = [
            {"row": "clean_only", "map": evaluate(clean_sets, 0.0)},
            {"row": "clean_plus_noisy", "map": evaluate(clean_sets + noisy_all, 0.0)},
            {"row": "clean_plus_vetted", "map": evaluate(clean_sets + noisy_vetted, 0.0)},
            {"row": "clean_plus_vetted_weighted", "map": evaluate(clean_sets + noisy_vetted, alpha_on)},
        ]
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "mixed_supervision.csv").write_text(
        csv_content(["row", "map"], [[r["row"], r["map"]] for r in rows])
    )
    return rows


def scale_sweep(
    records: Sequence[CaptionRecord],
    increments: Sequence[int],
    config: ExperimentConfig,
) -> list[dict]:
    """Vetted vs unvetted mAP at growing training-set sizes."""
    if not increments:
        raise ValidationError("increments must be non-empty")
    for n in increments:
        if n <= 0:
            raise ValidationError(f"increments must be positive, got {n}")
        if n > len(records):
            raise ValidationError(f"increment {n} exceeds the {len(records)}-record pool")
    _, presence, scenes, _, test = _synthetic_world(config)
    pool_ids = {r.record_id for r in records}
    test_ids = [r.record_id for r in test if r.record_id not in pool_ids]
    if not test_ids:
        raise ValidationError("no test records left after removing the training pool")
    categories = list(config.corpus.categories)
    gt = gt_from_scenes(scenes, test_ids)
    seed = config.stage_seed("train_wsod")

    rows = []
    for n in increments:
        subset = list(records[:n])
        noisy_all, noisy_vetted = _vetted_noisy_sets(config, subset, presence, scenes)
        results = {}
        for arm, sets in (("unvetted", noisy_all), ("vetted", noisy_vetted)):
            if not sets:
                raise ValidationError(f"{arm} arm at n={n} has no training images")
            model = wsod_train_on(config, categories, sets, scenes, seed=seed)
            _, results[arm] = detection_map(
                model, test_ids, scenes, gt, config.evaluate.iou_thresh, config.evaluate.ap_method
            )
        rows.append({"n": n, "unvetted": results["unvetted"], "vetted": results["vetted"]})
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "scale_sweep.csv").write_text(
        csv_content(["n", "unvetted", "vetted"], [[r["n"], r["unvetted"], r["vetted"]] for r in rows])
    )
    return rows
