"""Pipeline stages: deterministic artifact I/O around the library modules.

Each stage reads the previous stage's files, computes, and writes its own
artifacts under the run's output directory. Everything is written with
sorted keys and fixed float formatting so reruns are byte-identical, and the
runner hashes each artifact to decide what can be reused.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import replace
from pathlib import Path
from typing import Mapping, Sequence

from ..baselines import (
    cap2det_vet,
    default_prompts,
    descriptive_vet,
    global_clip_vet,
    large_loss_vet,
    local_clip_vet,
    noun_modifier_vet,
    train_cap2det_style,
    train_descriptiveness,
)
from ..corpus import (
    CaptionRecord,
    CategoryVocabulary,
    default_vocabulary,
    load_corpus,
    load_predictions,
    save_corpus,
    split_corpus,
)
from ..encoders import ToyEmbeddingBackend
from ..extraction import ExtractedLabel, WhitespaceTokenizer, extract_labels
from ..metrics import ImageGroundTruth, ap_by_area, average_precision, corloc, top_boxes_from_detections
from ..metrics.reports import csv_content
from ..metrics.vetting import vetting_metrics
from ..postags import naive_tag_caption
from ..pseudo_labels import (
    VisualPresenceTarget,
    assign_targets,
    ensemble,
    load_targets,
    save_targets,
    sets_from_presence_map,
)
from ..synthetic import SyntheticScenes, generate_descriptiveness_fixture, generate_synthetic_corpus
from ..validation import ValidationError
from ..vetting import VettingDecision, accept_all, load_decisions, oracle_vet, save_decisions
from ..wsod import (
    FileImageProvider,
    ImageLabelSet,
    WsodModel,
    collect_detections,
    decisions_to_label_sets,
    save_detections,
    train_wsod,
)
from ..wsod import load_model as load_wsod_model
from ..wsod import save_model as save_wsod_model
from .. import veil
from .config import ExperimentConfig

logger = logging.getLogger(__name__)


def file_hash(path: Path) -> str:
    return hashlib.blake2b(Path(path).read_bytes(), digest_size=16).hexdigest()


class RunPaths:
    """Artifact locations inside one run's output directory."""

    def __init__(self, output_dir: Path):
        self.root = Path(output_dir)
        self.corpus_train = self.root / "corpus_train.jsonl"
        self.corpus_test = self.root / "corpus_test.jsonl"
        self.presence = self.root / "presence.jsonl"
        self.corpus_meta = self.root / "corpus_meta.json"
        self.labels = self.root / "labels.jsonl"
        self.targets = self.root / "targets.jsonl"
        self.veil_model = self.root / "veil_model.pt"
        self.veil_marker = self.root / "train_veil.json"
        self.decisions = self.root / "decisions.jsonl"
        self.wsod_model = self.root / "wsod_model.pt"
        self.detections = self.root / "detections.jsonl"
        self.metrics_json = self.root / "metrics.json"
        self.metrics_csv = self.root / "metrics.csv"
        self.ap_per_class = self.root / "ap_per_class.csv"
        self.manifest = self.root / "manifest.json"
        self.lock = self.root / ".lock"


def save_labels(labels_by_record: Mapping[str, Sequence[ExtractedLabel]], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record_id in sorted(labels_by_record):
            fh.write(
                json.dumps(
                    {
                        "record_id": record_id,
                        "labels": [
                            {
                                "category": lab.category,
                                "category_id": lab.category_id,
                                "surface": lab.surface,
                                "char_start": lab.char_span[0],
                                "char_end": lab.char_span[1],
                            }
                            for lab in labels_by_record[record_id]
                        ],
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def load_labels(path: Path) -> dict[str, list[ExtractedLabel]]:
    out: dict[str, list[ExtractedLabel]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            out[doc["record_id"]] = [
                ExtractedLabel(
                    category_id=lab["category_id"],
                    category=lab["category"],
                    surface=lab["surface"],
                    char_span=(lab["char_start"], lab["char_end"]),
                )
                for lab in doc["labels"]
            ]
    return out


def save_presence(presence: Mapping[tuple[str, str], int], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record_id, category in sorted(presence):
            fh.write(
                json.dumps(
                    {
                        "record_id": record_id,
                        "category": category,
                        "present": int(presence[(record_id, category)]),
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def load_presence(path: Path) -> dict[tuple[str, str], int]:
    out: dict[tuple[str, str], int] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                doc = json.loads(line)
                out[(doc["record_id"], doc["category"])] = int(doc["present"])
    return out


def load_ground_truth(path: Path) -> dict[str, ImageGroundTruth]:
    """Detection ground truth JSONL: record_id, boxes, categories, difficult."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            out[doc["record_id"]] = ImageGroundTruth(
                boxes=doc["boxes"],
                categories=doc["categories"],
                difficult=doc.get("difficult"),
            )
    return out


class PipelineContext:
    """Lazy, cached access to a run's artifacts and derived objects."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.paths = RunPaths(config.output_dir)
        self._cache: dict[str, object] = {}

    def _cached(self, key: str, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    def vocabulary(self) -> CategoryVocabulary:
        def build():
            if self.config.vocabulary_path:
                return CategoryVocabulary.load(self.config.vocabulary_path)
            if self.config.corpus.source == "synthetic":
                return CategoryVocabulary(list(self.config.corpus.categories))
            return default_vocabulary()

        return self._cached("vocabulary", build)

    def train_records(self) -> list[CaptionRecord]:
        return self._cached("train_records", lambda: load_corpus(self.paths.corpus_train))

    def test_records(self) -> list[CaptionRecord]:
        def build():
            if self.paths.corpus_test.exists():
                return load_corpus(self.paths.corpus_test)
            return []

        return self._cached("test_records", build)

    def presence(self) -> dict[tuple[str, str], int]:
        def build():
            if self.paths.presence.exists():
                return load_presence(self.paths.presence)
            return {}

        return self._cached("presence", build)

    def labels(self) -> dict[str, list[ExtractedLabel]]:
        return self._cached("labels", lambda: load_labels(self.paths.labels))

    def targets(self) -> list[VisualPresenceTarget]:
        return self._cached("targets", lambda: load_targets(self.paths.targets))

    def provider(self):
        def build():
            if self.config.corpus.source == "synthetic":
                meta = json.loads(self.paths.corpus_meta.read_text())
                syn = self.config.corpus.synthetic_config(meta["seed"])
                _, _, scenes = generate_synthetic_corpus(syn)
                return scenes
            return FileImageProvider(self.config.corpus.image_root, self.config.corpus.proposal_path)

        return self._cached("provider", build)

    def detection_gt(self, record_ids: Sequence[str]) -> dict[str, ImageGroundTruth]:
        if self.config.corpus.source == "synthetic":
            return gt_from_scenes(self.provider(), record_ids)
        if not self.config.corpus.gt_boxes_path:
            raise ValidationError("file corpus needs gt_boxes_path for detection evaluation")
        gt = load_ground_truth(Path(self.config.corpus.gt_boxes_path))
        missing = [rid for rid in record_ids if rid not in gt]
        if missing:
            raise ValidationError(f"ground truth missing for records {missing[:5]}")
        return {rid: gt[rid] for rid in record_ids}


def gt_from_scenes(scenes: SyntheticScenes, record_ids: Sequence[str]) -> dict[str, ImageGroundTruth]:
    out = {}
    for rid in record_ids:
        pairs = scenes.boxes(rid)
        out[rid] = ImageGroundTruth(
            boxes=[box.tolist() for _, box in pairs],
            categories=[cat for cat, _ in pairs],
        )
    return out


# ---------------------------------------------------------------------------
# In-memory experiment primitives, shared by the file stages and the
# mixed-supervision / scale-sweep drivers.


def extract_all(
    records: Sequence[CaptionRecord], vocab: CategoryVocabulary, mode: str
) -> dict[str, list[ExtractedLabel]]:
    return {r.record_id: extract_labels(r.caption, vocab, mode=mode) for r in records}


def category_sets_for(config: ExperimentConfig, presence: Mapping[tuple[str, str], int]) -> dict[str, set[str]]:
    if config.target_source == "synthetic_ground_truth":
        if not presence:
            raise ValidationError("synthetic_ground_truth target source needs a presence map")
        return sets_from_presence_map(presence)
    if config.target_source == "ensemble":
        return ensemble([load_predictions(p) for p in config.prediction_paths])
    return dict(load_predictions(config.annotations_path).entries)


def train_veil_on(
    config: ExperimentConfig,
    records: Sequence[CaptionRecord],
    labels_by_record: Mapping[str, Sequence[ExtractedLabel]],
    targets: Sequence[VisualPresenceTarget],
    seed: int,
) -> veil.VeilModel:
    vcfg = replace(config.veil, seed=seed)
    tokenizer = WhitespaceTokenizer(max_length=vcfg.max_len)
    examples = veil.build_examples(
        records, labels_by_record, targets, tokenizer=tokenizer,
        special_token_mode=vcfg.special_token_mode,
    )
    model, history = veil.train(vcfg, examples)
    if history:
        logger.info("veil final epoch loss %.4f", history[-1])
    return model


def veil_decisions(
    model: veil.VeilModel,
    records: Sequence[CaptionRecord],
    labels_by_record: Mapping[str, Sequence[ExtractedLabel]],
    threshold: float | None = None,
) -> list[VettingDecision]:
    tokenizer = WhitespaceTokenizer(max_length=model.config.max_len)
    examples = veil.build_examples(
        records, labels_by_record, None, tokenizer=tokenizer,
        special_token_mode=model.config.special_token_mode,
    )
    return veil.vet(model, examples, threshold=threshold)


def vet_with_method(
    config: ExperimentConfig,
    records: Sequence[CaptionRecord],
    labels_by_record: Mapping[str, Sequence[ExtractedLabel]],
    presence: Mapping[tuple[str, str], int],
    provider,
    seed: int,
    veil_model: veil.VeilModel | None = None,
    targets: Sequence[VisualPresenceTarget] | None = None,
) -> list[VettingDecision]:
    """Dispatch one registered vetting method over the extracted labels."""
    spec = config.vetting
    method = spec.method[:-2] if spec.method.endswith("_e") else spec.method
    n_prompts = max(spec.prompts, 2) if spec.method.endswith("_e") else spec.prompts

    if method == "none":
        return accept_all(labels_by_record)
    if method == "oracle":
        if not presence:
            raise ValidationError("oracle vetting needs a gold presence map")
        return oracle_vet(labels_by_record, presence)
    if method == "veil":
        if veil_model is None:
            raise ValidationError("veil vetting needs a trained model")
        return veil_decisions(veil_model, records, labels_by_record, threshold=spec.threshold)
    if method in ("global_clip", "local_clip"):
        if not presence:
            raise ValidationError(f"{method} needs a presence map to build the toy backend")
        by_ref: dict[str, set[str]] = {}
        present_by_record = sets_from_presence_map(presence)
        for record in records:
            by_ref[record.image_ref] = present_by_record.get(record.record_id, set())
        backend = ToyEmbeddingBackend(by_ref, seed=seed, noise=spec.backend_noise)
        mode = "global" if method == "global_clip" else "local"
        prompts = default_prompts(mode)[:n_prompts]
        vet_fn = global_clip_vet if method == "global_clip" else local_clip_vet
        return vet_fn(backend, records, labels_by_record, prompts=prompts, seed=seed)
    if method == "accept_descriptive":
        dii, sis = generate_descriptiveness_fixture(spec.fixture_size, seed=seed)
        model = train_descriptiveness(dii, sis, seed=seed)
        return descriptive_vet(model, records, labels_by_record, threshold=spec.threshold)
    if method == "reject_noun_mod":
        return noun_modifier_vet(records, labels_by_record)
    if method == "cap2det":
        if targets is None:
            raise ValidationError("cap2det needs pseudo-label targets to train on")
        positive: dict[str, set[str]] = {}
        for t in targets:
            if t.y == 1:
                positive.setdefault(t.record_id, set()).add(t.category)
        categories = sorted({c for cats in positive.values() for c in cats})
        model = train_cap2det_style(
            records, positive, categories, seed=seed, epochs=spec.cap2det_epochs
        )
        return cap2det_vet(model, records, labels_by_record, threshold=spec.threshold)
    if method == "large_loss":
        wcfg = replace(config.wsod, seed=seed, image_size=config.corpus.image_size)
        return large_loss_vet(
            wcfg,
            list(config.corpus.categories) or list(default_vocabulary()),
            labels_by_record,
            provider,
            delta_rel=spec.delta_rel,
            epochs=spec.large_loss_epochs,
        )
    raise ValidationError(f"unhandled vetting method {spec.method!r}")


def wsod_train_on(
    config: ExperimentConfig,
    categories: Sequence[str],
    label_sets: Sequence[ImageLabelSet],
    provider,
    seed: int,
    sampler_alpha: float | None = None,
) -> WsodModel:
    wcfg = replace(
        config.wsod,
        seed=seed,
        image_size=config.corpus.image_size if config.corpus.source == "synthetic" else config.wsod.image_size,
    )
    if sampler_alpha is not None:
        wcfg = replace(wcfg, sampler_alpha=sampler_alpha)
    model, history = train_wsod(wcfg, categories, label_sets, provider)
    if history:
        logger.info("wsod final loss window %.4f", history[-1])
    return model


def detection_map(
    model: WsodModel,
    record_ids: Sequence[str],
    provider,
    gt: Mapping[str, ImageGroundTruth],
    iou_thresh: float,
    ap_method: str,
) -> tuple[dict[str, float], float]:
    detections = collect_detections(model, record_ids, provider)
    return average_precision(detections, gt, model.categories, iou_thresh=iou_thresh, method=ap_method)


# ---------------------------------------------------------------------------
# File-backed stages. Each returns the artifact paths it wrote.


def stage_ingest(ctx: PipelineContext) -> list[Path]:
    cfg = ctx.config
    paths = ctx.paths
    paths.root.mkdir(parents=True, exist_ok=True)
    if cfg.corpus.source == "synthetic":
        syn = cfg.corpus.synthetic_config(cfg.stage_seed("ingest"))
        records, presence, _ = generate_synthetic_corpus(syn)
        train, test = split_corpus(records, cfg.corpus.test_fraction, seed=cfg.seed)
        train = [replace(r, split="train") for r in train]
        test = [replace(r, split="test") for r in test]
        save_corpus(train, paths.corpus_train)
        save_corpus(test, paths.corpus_test)
        save_presence(presence, paths.presence)
        meta = {"source": "synthetic", "seed": syn.seed, "n_records": syn.n_records}
        paths.corpus_meta.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
        return [paths.corpus_train, paths.corpus_test, paths.presence, paths.corpus_meta]

    def prepare(records: list[CaptionRecord], split: str) -> list[CaptionRecord]:
        out = []
        for r in records:
            tags = r.pos_tags if r.pos_tags is not None else naive_tag_caption(r.caption)
            out.append(replace(r, split=split, pos_tags=tags))
        return out

    train = prepare(load_corpus(cfg.corpus.train_path), "train")
    save_corpus(train, paths.corpus_train)
    written = [paths.corpus_train]
    if cfg.corpus.test_path:
        test = prepare(load_corpus(cfg.corpus.test_path), "test")
        save_corpus(test, paths.corpus_test)
        written.append(paths.corpus_test)
    if cfg.annotations_path:
        sets = load_predictions(cfg.annotations_path).entries
        presence = {(rid, cat): 1 for rid, cats in sets.items() for cat in cats}
        save_presence(presence, paths.presence)
        written.append(paths.presence)
    meta = {"source": "file", "train_path": cfg.corpus.train_path, "test_path": cfg.corpus.test_path}
    paths.corpus_meta.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    written.append(paths.corpus_meta)
    return written


def stage_extract(ctx: PipelineContext) -> list[Path]:
    vocab = ctx.vocabulary()
    records = ctx.train_records() + ctx.test_records()
    labels = extract_all(records, vocab, ctx.config.extraction_mode)
    n = sum(len(v) for v in labels.values())
    logger.info("extracted %d labels from %d records", n, len(records))
    save_labels(labels, ctx.paths.labels)
    return [ctx.paths.labels]


def stage_pseudo_label(ctx: PipelineContext) -> list[Path]:
    train_ids = {r.record_id for r in ctx.train_records()}
    labels = {rid: labs for rid, labs in ctx.labels().items() if rid in train_ids}
    sets = category_sets_for(ctx.config, ctx.presence())
    targets = assign_targets(labels, sets, source=ctx.config.target_source)
    save_targets(targets, ctx.paths.targets)
    return [ctx.paths.targets]


def stage_train_veil(ctx: PipelineContext) -> list[Path]:
    cfg = ctx.config
    if cfg.vetting.method != "veil":
        marker = {"method": cfg.vetting.method, "trained": False}
        ctx.paths.veil_marker.write_text(json.dumps(marker, sort_keys=True) + "\n")
        return [ctx.paths.veil_marker]
    train_ids = {r.record_id for r in ctx.train_records()}
    labels = {rid: labs for rid, labs in ctx.labels().items() if rid in train_ids}
    model = train_veil_on(
        cfg, ctx.train_records(), labels, ctx.targets(), seed=cfg.stage_seed("train_veil")
    )
    veil.save_model(model, ctx.paths.veil_model)
    return [ctx.paths.veil_model]


def stage_vet(ctx: PipelineContext) -> list[Path]:
    cfg = ctx.config
    train_records = ctx.train_records()
    train_ids = {r.record_id for r in train_records}
    labels = {rid: labs for rid, labs in ctx.labels().items() if rid in train_ids}
    model = None
    if cfg.vetting.method == "veil":
        model = veil.load_model(ctx.paths.veil_model)
    decisions = vet_with_method(
        cfg,
        train_records,
        labels,
        presence=ctx.presence(),
        provider=ctx.provider() if cfg.vetting.method == "large_loss" else None,
        seed=cfg.stage_seed("vet"),
        veil_model=model,
        targets=ctx.targets() if ctx.paths.targets.exists() else None,
    )
    if not decisions:
        raise ValidationError("vetting produced no decisions; is the corpus empty?")
    save_decisions(decisions, ctx.paths.decisions)
    return [ctx.paths.decisions]


def stage_train_wsod(ctx: PipelineContext) -> list[Path]:
    cfg = ctx.config
    decisions = load_decisions(ctx.paths.decisions)
    label_sets = decisions_to_label_sets(decisions)
    if not label_sets:
        raise ValidationError("vetting rejected every label; nothing to train on")
    model = wsod_train_on(
        cfg, list(ctx.vocabulary()), label_sets, ctx.provider(), seed=cfg.stage_seed("train_wsod")
    )
    save_wsod_model(model, ctx.paths.wsod_model)
    return [ctx.paths.wsod_model]


def stage_evaluate(ctx: PipelineContext) -> list[Path]:
    cfg = ctx.config
    test = ctx.test_records()
    if not test:
        raise ValidationError("no test split to evaluate on")
    model = load_wsod_model(ctx.paths.wsod_model)
    provider = ctx.provider()
    test_ids = [r.record_id for r in test]
    detections = collect_detections(model, test_ids, provider)
    save_detections(detections, ctx.paths.detections)
    gt = ctx.detection_gt(test_ids)

    per_class, mean_ap = average_precision(
        detections, gt, model.categories, iou_thresh=cfg.evaluate.iou_thresh,
        method=cfg.evaluate.ap_method,
    )
    top = top_boxes_from_detections(detections)
    corloc_per_class, mean_corloc = corloc(top, gt, iou_thresh=cfg.evaluate.iou_thresh)

    doc: dict = {
        "detection": {
            "ap_method": cfg.evaluate.ap_method,
            "iou_thresh": cfg.evaluate.iou_thresh,
            "map": mean_ap,
            "ap_per_class": per_class,
            "corloc": mean_corloc,
            "corloc_per_class": corloc_per_class,
        }
    }
    if cfg.evaluate.area_breakdown:
        by_area = ap_by_area(detections, gt, model.categories, iou_thresh=cfg.evaluate.iou_thresh,
                             method=cfg.evaluate.ap_method)
        doc["detection"]["map_by_area"] = {k: v[1] if v else None for k, v in by_area.items()}

    presence = ctx.presence()
    if presence:
        report = vetting_metrics(load_decisions(ctx.paths.decisions), presence)
        doc["vetting"] = {
            "method": report.method,
            "precision": report.precision,
            "recall": report.recall,
            "f1": report.f1,
            "tp": report.tp, "fp": report.fp, "fn": report.fn, "tn": report.tn,
        }

    ctx.paths.metrics_json.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    rows: list[list] = []
    if "vetting" in doc:
        for key in ("precision", "recall", "f1", "tp", "fp", "fn", "tn"):
            rows.append(["vetting", key, doc["vetting"][key]])
        rows.append(["vetting", "method", doc["vetting"]["method"]])
    rows.append(["detection", "map", mean_ap])
    rows.append(["detection", "corloc", mean_corloc])
    for name in sorted(per_class):
        rows.append(["detection", f"ap:{name}", per_class[name]])
    for name in sorted(corloc_per_class):
        rows.append(["detection", f"corloc:{name}", corloc_per_class[name]])
    ctx.paths.metrics_csv.write_text(csv_content(["section", "metric", "value"], rows))

    ap_rows = [[name, per_class[name]] for name in sorted(per_class)] + [["mean", mean_ap]]
    ctx.paths.ap_per_class.write_text(csv_content(["class", "ap"], ap_rows))
    return [ctx.paths.detections, ctx.paths.metrics_json, ctx.paths.metrics_csv, ctx.paths.ap_per_class]


STAGE_FUNCS = {
    "ingest": stage_ingest,
    "extract": stage_extract,
    "pseudo_label": stage_pseudo_label,
    "train_veil": stage_train_veil,
    "vet": stage_vet,
    "train_wsod": stage_train_wsod,
    "evaluate": stage_evaluate,
}
