"""Experiment configuration: one TOML or JSON document per run.

The document is split into sections mirroring the pipeline stages. Unknown
keys are rejected so typos fail fast instead of silently using defaults.
Seeds derive from the top-level seed plus a fixed per-stage offset, so every
stage is independently reproducible.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .. import VETTING_METHODS
from ..synthetic import SyntheticCorpusConfig
from ..validation import ValidationError, check_probability
from ..veil import VeilConfig
from ..wsod import WsodConfig

CORPUS_SOURCES = ("synthetic", "file")
TARGET_SOURCES = ("ensemble", "dataset_annotations", "synthetic_ground_truth")

# Stage order of the run verb; ingest is corpus preparation, stage index 0.
STAGES = ("extract", "pseudo_label", "train_veil", "vet", "train_wsod", "evaluate")
STAGE_INDEX = {name: i + 1 for i, name in enumerate(STAGES)}


@dataclass
class CorpusSpec:
    source: str = "synthetic"
    # synthetic generation
    n_records: int = 400
    categories: list[str] = field(default_factory=list)
    p_present_descriptive: float = 0.9
    p_present_noisy: float = 0.1
    noise_positions: list[str] = field(default_factory=lambda: ["prepositional_phrase", "noun_modifier"])
    test_fraction: float = 0.2
    image_size: int = 96
    # file-backed corpora
    train_path: str = ""
    test_path: str = ""
    image_root: str = ""
    proposal_path: str = ""
    gt_boxes_path: str = ""

    def __post_init__(self):
        if self.source not in CORPUS_SOURCES:
            raise ValidationError(f"corpus source must be one of {CORPUS_SOURCES}, got {self.source!r}")
        if self.source == "synthetic":
            if not self.categories:
                raise ValidationError("synthetic corpus needs an explicit category list")
            if not 0.0 < self.test_fraction < 1.0:
                raise ValidationError(f"test_fraction must be in (0, 1), got {self.test_fraction}")
        else:
            if not self.train_path:
                raise ValidationError("file corpus needs train_path")

    def synthetic_config(self, seed: int) -> SyntheticCorpusConfig:
        return SyntheticCorpusConfig(
            n_records=self.n_records,
            categories=list(self.categories),
            p_present_descriptive=self.p_present_descriptive,
            p_present_noisy=self.p_present_noisy,
            noise_positions=tuple(self.noise_positions),
            seed=seed,
            image_size=self.image_size,
        )


@dataclass
class VettingSpec:
    method: str = "veil"
    threshold: float = 0.5
    # CLIP-style baselines: how many prompt paraphrases to ensemble, and the
    # toy embedding backend's image-noise scale.
    prompts: int = 1
    backend_noise: float = 1.0
    # large-loss simulation
    delta_rel: float = 0.01
    large_loss_epochs: int = 5
    # descriptiveness baseline fixture size per class
    fixture_size: int = 200
    cap2det_epochs: int = 20

    def __post_init__(self):
        base = self.method[:-2] if self.method.endswith("_e") else self.method
        if self.method not in VETTING_METHODS and base not in VETTING_METHODS:
            raise ValidationError(f"unknown vetting method {self.method!r}; registered: {VETTING_METHODS}")
        check_probability(self.threshold, "threshold")
        if self.prompts < 1:
            raise ValidationError(f"prompts must be >= 1, got {self.prompts}")


@dataclass
class EvaluateSpec:
    iou_thresh: float = 0.5
    ap_method: str = "all_point"
    area_breakdown: bool = False

    def __post_init__(self):
        if self.ap_method not in ("all_point", "eleven_point"):
            raise ValidationError(f"ap_method must be all_point or eleven_point, got {self.ap_method!r}")


@dataclass
class ExperimentConfig:
    output_dir: Path
    seed: int = 0
    corpus: CorpusSpec = field(default_factory=CorpusSpec)
    vocabulary_path: str = ""
    id_categories: list[str] = field(default_factory=list)
    ood_categories: list[str] = field(default_factory=list)
    extraction_mode: str = "word"
    target_source: str = "synthetic_ground_truth"
    prediction_paths: list[str] = field(default_factory=list)
    annotations_path: str = ""
    vetting: VettingSpec = field(default_factory=VettingSpec)
    veil: VeilConfig = field(default_factory=VeilConfig)
    wsod: WsodConfig = field(
        default_factory=lambda: WsodConfig(sampler_alpha=0.0, prediction_variant="clamp_sum")
    )
    evaluate: EvaluateSpec = field(default_factory=EvaluateSpec)

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        if self.extraction_mode not in ("word", "substring"):
            raise ValidationError(f"extraction_mode must be word or substring, got {self.extraction_mode!r}")
        if self.target_source not in TARGET_SOURCES:
            raise ValidationError(f"target_source must be one of {TARGET_SOURCES}, got {self.target_source!r}")
        overlap = set(self.id_categories) & set(self.ood_categories)
        if overlap:
            raise ValidationError(f"id/ood category partitions overlap: {sorted(overlap)}")
        for path in [self.vocabulary_path, *self.prediction_paths]:
            if path and not Path(path).exists():
                raise ValidationError(f"referenced file does not exist: {path}")
        if self.corpus.source == "file":
            for path in (self.corpus.train_path, self.corpus.test_path):
                if path and not Path(path).exists():
                    raise ValidationError(f"referenced corpus file does not exist: {path}")
        if self.target_source == "ensemble" and not self.prediction_paths:
            raise ValidationError("ensemble target source needs prediction_paths")
        if self.target_source == "dataset_annotations":
            if not self.annotations_path:
                raise ValidationError("dataset_annotations target source needs annotations_path")
            if not Path(self.annotations_path).exists():
                raise ValidationError(f"referenced file does not exist: {self.annotations_path}")

    def stage_seed(self, stage: str) -> int:
        """Top-level seed plus the stage's fixed index (ingest is 0)."""
        if stage == "ingest":
            return self.seed
        if stage not in STAGE_INDEX:
            raise ValidationError(f"unknown stage {stage!r}")
        return self.seed + STAGE_INDEX[stage]

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["output_dir"] = str(self.output_dir)
        return doc


def _build(cls, doc: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ValidationError(f"{where}: unknown keys {sorted(unknown)}; known: {sorted(known)}")
    return cls(**doc)


def config_from_dict(doc: dict) -> ExperimentConfig:
    doc = dict(doc)
    if "output_dir" not in doc:
        raise ValidationError("config needs output_dir")
    sections = {
        "corpus": CorpusSpec,
        "vetting": VettingSpec,
        "veil": VeilConfig,
        "evaluate": EvaluateSpec,
    }
    built = {}
    for name, cls in sections.items():
        built[name] = _build(cls, doc.pop(name, {}), name)
    wsod_doc = dict(doc.pop("wsod", {}))
    # experiment runs default to the conventional clamp-sum image score and
    # uniform sampling; the module-level defaults stay as documented there
    wsod_doc.setdefault("sampler_alpha", 0.0)
    wsod_doc.setdefault("prediction_variant", "clamp_sum")
    built["wsod"] = _build(WsodConfig, wsod_doc, "wsod")
    top_known = {f.name for f in fields(ExperimentConfig)} - set(sections) - {"wsod"}
    unknown = set(doc) - top_known
    if unknown:
        raise ValidationError(f"config: unknown keys {sorted(unknown)}")
    return ExperimentConfig(**doc, **built)


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse a .toml or .json experiment document."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file does not exist: {path}")
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(path, "rb") as handle:
            doc = tomllib.load(handle)
    elif path.suffix == ".json":
        with open(path) as handle:
            doc = json.load(handle)
    else:
        raise ValidationError(f"config must be .toml or .json, got {path.suffix!r}")
    return config_from_dict(doc)
