"""Shared vetting decision type, decision JSONL IO, and the trivial
methods: no-vetting (accept everything) and oracle (read ground truth).

Method ids are the wire format used in decision files, reports, and the
CLI; every vetting implementation stamps its id here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import VETTING_METHODS
from .extraction import ExtractedLabel
from .validation import ValidationError


@dataclass
class VettingDecision:
    """Accept/reject verdict for one extracted label."""

    record_id: str
    label_ref: int
    category: str
    char_span: tuple[int, int]
    score: float
    accepted: bool
    method: str
    reason: str = ""

    def __post_init__(self):
        if self.method not in VETTING_METHODS:
            raise ValidationError(
                f"unknown method {self.method!r}; registered: {VETTING_METHODS}"
            )
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score must be in [0,1], got {self.score}")


def accept_all(
    labels_by_record: Mapping[str, Sequence[ExtractedLabel]],
) -> list[VettingDecision]:
    """The no-vetting reference: every extracted label is accepted."""
    return [
        VettingDecision(
            record_id=record_id,
            label_ref=i,
            category=label.category,
            char_span=label.char_span,
            score=1.0,
            accepted=True,
            method="none",
        )
        for record_id in sorted(labels_by_record)
        for i, label in enumerate(labels_by_record[record_id])
    ]


def oracle_vet(
    labels_by_record: Mapping[str, Sequence[ExtractedLabel]],
    gold_presence: Mapping[tuple[str, str], int],
) -> list[VettingDecision]:
    """Upper-bound vetting that accepts exactly the truly present labels."""
    out = []
    for record_id in sorted(labels_by_record):
        for i, label in enumerate(labels_by_record[record_id]):
            key = (record_id, label.category)
            if key not in gold_presence:
                raise ValidationError(f"gold presence map does not cover {key}")
            present = bool(gold_presence[key])
            out.append(
                VettingDecision(
                    record_id=record_id,
                    label_ref=i,
                    category=label.category,
                    char_span=label.char_span,
                    score=1.0 if present else 0.0,
                    accepted=present,
                    method="oracle",
                )
            )
    return out


def save_decisions(decisions: Iterable[VettingDecision], path: str | Path) -> None:
    """Write decision JSONL grouped one line per record."""
    grouped: dict[str, list[VettingDecision]] = {}
    for d in decisions:
        grouped.setdefault(d.record_id, []).append(d)
    with open(path, "w", encoding="utf-8") as fh:
        for record_id in sorted(grouped):
            labels = [
                {
                    "category": d.category,
                    "char_span": list(d.char_span),
                    "score": round(d.score, 6),
                    "accepted": d.accepted,
                    "method": d.method,
                }
                for d in sorted(grouped[record_id], key=lambda d: d.label_ref)
            ]
            fh.write(json.dumps({"record_id": record_id, "labels": labels}, sort_keys=True) + "\n")


def load_decisions(path: str | Path) -> list[VettingDecision]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            for i, lab in enumerate(doc["labels"]):
                out.append(
                    VettingDecision(
                        record_id=doc["record_id"],
                        label_ref=i,
                        category=lab["category"],
                        char_span=tuple(lab["char_span"]),
                        score=lab["score"],
                        accepted=lab["accepted"],
                        method=lab["method"],
                    )
                )
    return out


def accepted_sets(decisions: Iterable[VettingDecision]) -> dict[str, set[str]]:
    """Per-record accepted category sets (what a detector would train on)."""
    out: dict[str, set[str]] = {}
    for d in decisions:
        out.setdefault(d.record_id, set())
        if d.accepted:
            out[d.record_id].add(d.category)
    return out
