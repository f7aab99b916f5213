"""Image-caption corpus ingestion, vocabularies, prediction files, and splits.

Corpus files are JSONL, one record per line:
    {"record_id": str, "image_ref": str, "caption": str, "dataset": str,
     "split": str (optional), "pos_tags": [[word, tag], ...] (optional)}

Prediction files are JSONL with keys record_id, model_name, categories.
Vocabulary files hold one category name per line; order is significant
because it defines the dense category index.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .validation import ValidationError

SPLITS = ("train", "test", "unsplit")

_EDGE_PUNCT = ",.!?;:'\"()[]"


def strip_edge_punctuation(word: str) -> str:
    """Remove punctuation characters from both edges of a word."""
    return word.strip(_EDGE_PUNCT)


@dataclass
class CaptionRecord:
    """One image-caption pair with dataset/split provenance."""

    record_id: str
    image_ref: str
    caption: str
    dataset: str = "default"
    split: str = "unsplit"
    pos_tags: list[tuple[str, str]] | None = None

    def __post_init__(self):
        if not self.caption.strip():
            raise ValidationError(f"record {self.record_id!r}: caption is empty")
        if self.split not in SPLITS:
            raise ValidationError(
                f"record {self.record_id!r}: split must be one of {SPLITS}, got {self.split!r}"
            )
        if self.pos_tags is not None:
            self.pos_tags = [(str(w), str(t)) for w, t in self.pos_tags]
            tagged = [strip_edge_punctuation(w).lower() for w, _ in self.pos_tags]
            tagged = [w for w in tagged if w]
            words = [strip_edge_punctuation(w).lower() for w in self.caption.split()]
            words = [w for w in words if w]
            if tagged != words:
                raise ValidationError(
                    f"record {self.record_id!r}: pos_tags words {tagged} do not match "
                    f"caption words {words}"
                )

    def to_json(self) -> dict:
        doc = {
            "record_id": self.record_id,
            "image_ref": self.image_ref,
            "caption": self.caption,
            "dataset": self.dataset,
            "split": self.split,
        }
        if self.pos_tags is not None:
            doc["pos_tags"] = [[w, t] for w, t in self.pos_tags]
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "CaptionRecord":
        return cls(
            record_id=doc["record_id"],
            image_ref=doc.get("image_ref", ""),
            caption=doc["caption"],
            dataset=doc.get("dataset", "default"),
            split=doc.get("split", "unsplit"),
            pos_tags=[tuple(p) for p in doc["pos_tags"]] if doc.get("pos_tags") else None,
        )


_NAME_RE = re.compile(r"^[a-z]+( [a-z]+){0,2}$")


@dataclass
class CategoryVocabulary:
    """Ordered list of category names; a name's position is its category id."""

    categories: list[str]
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if not self.categories:
            raise ValidationError("vocabulary must contain at least one category")
        seen = set()
        for name in self.categories:
            if not _NAME_RE.match(name):
                raise ValidationError(
                    f"category {name!r} must be 1-3 lowercase words without punctuation"
                )
            if name in seen:
                raise ValidationError(f"duplicate category {name!r}")
            seen.add(name)
        self._index = {name: i for i, name in enumerate(self.categories)}

    def __len__(self) -> int:
        return len(self.categories)

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __iter__(self):
        return iter(self.categories)

    def id_of(self, name: str) -> int:
        return self._index[name]

    def name_of(self, category_id: int) -> str:
        return self.categories[category_id]

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.categories) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CategoryVocabulary":
        lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
        return cls([ln for ln in lines if ln])


def default_vocabulary() -> CategoryVocabulary:
    """The bundled 80-category vocabulary (COCO object names)."""
    text = resources.files("capvet").joinpath("data/coco_categories.txt").read_text()
    return CategoryVocabulary([ln.strip() for ln in text.splitlines() if ln.strip()])


@dataclass
class RecognitionPredictionFile:
    """Per-image category predictions from one recognition model."""

    model_name: str
    entries: dict[str, set[str]]

    def validate_against(self, vocab: CategoryVocabulary) -> None:
        for record_id, cats in self.entries.items():
            unknown = [c for c in cats if c not in vocab]
            if unknown:
                raise ValidationError(
                    f"prediction file {self.model_name!r}, record {record_id!r}: "
                    f"categories {unknown} not in vocabulary"
                )


class CorpusParseError(ValueError):
    """A corpus line failed to parse; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


def load_corpus(path: str | Path, format: str = "jsonl") -> list[CaptionRecord]:
    """Load caption records from a JSONL file, in file order.

    Raises CorpusParseError with the offending line number for malformed
    lines, and ValidationError naming both lines for duplicate record ids.
    """
    if format != "jsonl":
        raise ValidationError(f"unsupported corpus format {format!r}")
    records: list[CaptionRecord] = []
    seen: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(lineno, f"invalid JSON ({exc.msg})") from exc
            try:
                record = CaptionRecord.from_json(doc)
            except KeyError as exc:
                raise CorpusParseError(lineno, f"missing key {exc}") from exc
            except ValidationError as exc:
                raise CorpusParseError(lineno, str(exc)) from exc
            if record.record_id in seen:
                raise ValidationError(
                    f"duplicate record_id {record.record_id!r} on lines "
                    f"{seen[record.record_id]} and {lineno}"
                )
            seen[record.record_id] = lineno
            records.append(record)
    return records


def save_corpus(records: Iterable[CaptionRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json(), sort_keys=True) + "\n")


def load_predictions(path: str | Path) -> RecognitionPredictionFile:
    """Load one model's prediction JSONL (record_id, model_name, categories)."""
    entries: dict[str, set[str]] = {}
    model_name = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(lineno, f"invalid JSON ({exc.msg})") from exc
            if model_name is None:
                model_name = doc.get("model_name", "unknown")
            entries[doc["record_id"]] = set(doc.get("categories", []))
    return RecognitionPredictionFile(model_name=model_name or "unknown", entries=entries)


def save_predictions(pred: RecognitionPredictionFile, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record_id in sorted(pred.entries):
            fh.write(
                json.dumps(
                    {
                        "record_id": record_id,
                        "model_name": pred.model_name,
                        "categories": sorted(pred.entries[record_id]),
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def _split_rank(record_id: str, seed: int) -> str:
    return hashlib.blake2b(f"{seed}:{record_id}".encode(), digest_size=8).hexdigest()


def split_corpus(
    records: Sequence[CaptionRecord], test_fraction: float, seed: int
) -> tuple[list[CaptionRecord], list[CaptionRecord]]:
    """Deterministic train/test partition with |test| = round(fraction * N).

    Membership is decided by ranking a keyed hash of each record_id, so the
    split is stable under reordering of the input corpus.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if len(records) < 2:
        raise ValidationError("need at least 2 records to split")
    n_test = int(round(test_fraction * len(records)))
    ranked = sorted(records, key=lambda r: (_split_rank(r.record_id, seed), r.record_id))
    test_ids = {r.record_id for r in ranked[:n_test]}
    train = [r for r in records if r.record_id not in test_ids]
    test = [r for r in records if r.record_id in test_ids]
    return train, test
