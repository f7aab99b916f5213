"""Annotation schema for caption-label noise review.

One task shows an image, its caption, and one extracted label under review.
Q1 asks how much of the object is present; Q2 (absent objects) asks what
similar context misled the caption; Q3 (visible/partial objects) asks about
visual defects; Q4 asks which linguistic indicators explain the mention and
applies to partial/absent cases and to visible objects with a defect.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from ..extraction import ExtractedLabel
from ..validation import ValidationError

Q1_OPTIONS = ("visible", "partially_visible", "absent", "unclear")
Q2_OPTIONS = ("co_occurring_context", "similar_object", "none", "other")
Q3_OPTIONS = ("occlusion", "key_parts_missing", "atypical", "none", "other")
Q4_OPTIONS = (
    "beyond_image",
    "past",
    "prepositional_phrase",
    "non_literal",
    "noun_modifier",
    "word_sense",
    "named_entity",
    "none",
    "other",
)

QUESTION_OPTIONS = {"q1": Q1_OPTIONS, "q2": Q2_OPTIONS, "q3": Q3_OPTIONS, "q4": Q4_OPTIONS}

# Options excluded from distribution tables by default.
SKIPPED_OPTIONS = {"none", "other", "unclear"}


@dataclass
class AnnotationTask:
    task_id: int
    record_id: str
    image_ref: str
    caption: str
    target_label: ExtractedLabel

    def __post_init__(self):
        lo, hi = self.target_label.char_span
        if not (0 <= lo < hi <= len(self.caption)):
            raise ValidationError(
                f"task {self.task_id}: target span {self.target_label.char_span} "
                f"outside caption of length {len(self.caption)}"
            )

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "record_id": self.record_id,
            "image_ref": self.image_ref,
            "caption": self.caption,
            "target_label": {
                "category": self.target_label.category,
                "char_start": self.target_label.char_span[0],
                "char_end": self.target_label.char_span[1],
            },
        }

    @classmethod
    def from_json(cls, doc: dict) -> "AnnotationTask":
        lab = doc["target_label"]
        return cls(
            task_id=doc["task_id"],
            record_id=doc["record_id"],
            image_ref=doc.get("image_ref", ""),
            caption=doc["caption"],
            target_label=ExtractedLabel(
                category_id=-1,
                category=lab["category"],
                surface=doc["caption"][lab["char_start"] : lab["char_end"]],
                char_span=(lab["char_start"], lab["char_end"]),
            ),
        )


@dataclass
class AnnotationRecord:
    task_id: int
    annotator_id: str
    q1: str
    q2: frozenset[str] | None = None
    q3: frozenset[str] | None = None
    q4: frozenset[str] | None = None
    timestamp: float = 0.0
    free_text: str = ""
    revision: bool = False

    def __post_init__(self):
        for name in ("q2", "q3", "q4"):
            value = getattr(self, name)
            if value is not None:
                setattr(self, name, frozenset(value))

    def to_json(self) -> dict:
        doc = {
            "task_id": self.task_id,
            "annotator_id": self.annotator_id,
            "q1": self.q1,
            "timestamp": self.timestamp,
            "free_text": self.free_text,
            "revision": self.revision,
        }
        for name in ("q2", "q3", "q4"):
            value = getattr(self, name)
            doc[name] = sorted(value) if value is not None else None
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "AnnotationRecord":
        return cls(
            task_id=doc["task_id"],
            annotator_id=doc["annotator_id"],
            q1=doc["q1"],
            q2=frozenset(doc["q2"]) if doc.get("q2") is not None else None,
            q3=frozenset(doc["q3"]) if doc.get("q3") is not None else None,
            q4=frozenset(doc["q4"]) if doc.get("q4") is not None else None,
            timestamp=doc.get("timestamp", 0.0),
            free_text=doc.get("free_text", ""),
            revision=doc.get("revision", False),
        )


def has_defect(q3: Iterable[str] | None) -> bool:
    """A defect is any Q3 selection other than the bare "none"."""
    if q3 is None:
        return False
    return bool(set(q3) - {"none"})


def q4_required(q1: str, q3: Iterable[str] | None) -> bool:
    return q1 in ("partially_visible", "absent") or (q1 == "visible" and has_defect(q3))


def _check_multiselect(name: str, value: frozenset[str] | None, options: tuple[str, ...], violations: list[str]) -> None:
    if value is None:
        return
    unknown = value - set(options)
    if unknown:
        violations.append(f"{name}: unknown options {sorted(unknown)}")
    if not value:
        violations.append(f"{name}: must select at least one option when present")
    if "none" in value and len(value) > 1:
        violations.append(f"{name}: 'none' cannot be combined with other options")


def validate(record: AnnotationRecord) -> list[str]:
    """All rule violations for a record; empty list means valid."""
    violations: list[str] = []
    if record.q1 not in Q1_OPTIONS:
        violations.append(f"q1: must be one of {Q1_OPTIONS}, got {record.q1!r}")
        return violations
    _check_multiselect("q2", record.q2, Q2_OPTIONS, violations)
    _check_multiselect("q3", record.q3, Q3_OPTIONS, violations)
    _check_multiselect("q4", record.q4, Q4_OPTIONS, violations)
    if record.q1 == "absent":
        if record.q2 is None:
            violations.append("q2: required when the object is absent")
    elif record.q2 is not None:
        violations.append("q2: only annotated for absent objects")
    if record.q1 in ("visible", "partially_visible"):
        if record.q3 is None:
            violations.append("q3: required for visible or partially visible objects")
    elif record.q3 is not None:
        violations.append("q3: requires visibility")
    if q4_required(record.q1, record.q3):
        if record.q4 is None:
            violations.append("q4: required for partial/absent objects or visible objects with a defect")
    elif record.q4 is not None:
        violations.append("q4: only annotated with a visual defect or partial/no visibility")
    return violations
