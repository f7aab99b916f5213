"""Pseudo ground truth for visual presence of extracted labels.

Recognition-model prediction files are ensembled by category-set union;
an extracted label's target is y=1 iff its category is in the record's
ensemble set. Datasets with real object annotations, and synthetic corpora
with generator ground truth, bypass the ensemble through the same
set-membership path with a different source tag.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import RecognitionPredictionFile
from .extraction import ExtractedLabel
from .validation import ValidationError

logger = logging.getLogger(__name__)

TARGET_SOURCES = ("ensemble", "dataset_annotations", "synthetic_ground_truth")


@dataclass
class VisualPresenceTarget:
    record_id: str
    label_ref: int
    y: int
    source: str
    category: str = ""

    def __post_init__(self):
        if self.y not in (0, 1):
            raise ValidationError(f"y must be 0 or 1, got {self.y}")
        if self.label_ref < 0:
            raise ValidationError(f"label_ref must be >= 0, got {self.label_ref}")
        if self.source not in TARGET_SOURCES:
            raise ValidationError(f"source must be one of {TARGET_SOURCES}, got {self.source!r}")


def ensemble(prediction_files: Sequence[RecognitionPredictionFile]) -> dict[str, set[str]]:
    """Union of per-model predicted category sets, per record.

    A record present in one file but missing from another contributes the
    empty set for the missing model (logged once per model).
    """
    if not prediction_files:
        raise ValidationError("need at least one prediction file")
    all_ids: set[str] = set()
    for pred in prediction_files:
        all_ids.update(pred.entries)
    for pred in prediction_files:
        missing = len(all_ids) - len(pred.entries.keys() & all_ids)
        if missing:
            logger.warning(
                "model %s is missing %d of %d records; treating them as empty sets",
                pred.model_name, missing, len(all_ids),
            )
    out: dict[str, set[str]] = {rid: set() for rid in all_ids}
    for pred in prediction_files:
        for rid, cats in pred.entries.items():
            out[rid].update(cats)
    return out


def assign_targets(
    labels_by_record: Mapping[str, Sequence[ExtractedLabel]],
    category_sets: Mapping[str, set[str]],
    source: str = "ensemble",
) -> list[VisualPresenceTarget]:
    """One target per extracted label: y=1 iff its category is in the
    record's set. Presence is image-level, so repeated mentions of one
    category share the same y."""
    targets = []
    for record_id in sorted(labels_by_record):
        cats = category_sets.get(record_id, set())
        for i, label in enumerate(labels_by_record[record_id]):
            targets.append(
                VisualPresenceTarget(
                    record_id=record_id,
                    label_ref=i,
                    y=int(label.category in cats),
                    source=source,
                    category=label.category,
                )
            )
    return targets


def sets_from_presence_map(gold: Mapping[tuple[str, str], int]) -> dict[str, set[str]]:
    """Convert a (record_id, category) -> {0,1} map into per-record present sets."""
    out: dict[str, set[str]] = {}
    for (record_id, category), bit in gold.items():
        out.setdefault(record_id, set())
        if bit:
            out[record_id].add(category)
    return out


def presence_accuracy(
    targets: Sequence[VisualPresenceTarget],
    gold: Mapping[tuple[str, str], int],
) -> dict[str, float]:
    """Accuracy/precision/recall of targets against gold presence bits.

    Gold must cover every target's (record_id, category) pair.
    """
    if not targets:
        raise ValidationError("no targets to score")
    tp = fp = fn = tn = 0
    for t in targets:
        key = (t.record_id, t.category)
        if key not in gold:
            raise ValidationError(f"gold presence map does not cover {key}")
        g = gold[key]
        if t.y == 1 and g == 1:
            tp += 1
        elif t.y == 1 and g == 0:
            fp += 1
        elif t.y == 0 and g == 1:
            fn += 1
        else:
            tn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return {
        "accuracy": (tp + tn) / len(targets),
        "precision": precision,
        "recall": recall,
    }


def save_targets(targets: Iterable[VisualPresenceTarget], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in targets:
            fh.write(
                json.dumps(
                    {
                        "record_id": t.record_id,
                        "label_ref": t.label_ref,
                        "y": t.y,
                        "source": t.source,
                        "category": t.category,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def load_targets(path: str | Path) -> list[VisualPresenceTarget]:
    targets = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                doc = json.loads(line)
                targets.append(VisualPresenceTarget(**doc))
    return targets
