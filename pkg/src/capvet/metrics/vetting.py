"""Vetting quality metrics.

A decision is a true positive when the label is visually present and was
accepted. Recall is measured over truly-present labels only, so the
accept-everything baseline always has recall exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from ..validation import ValidationError
from ..vetting import VettingDecision


@dataclass
class VettingReport:
    method: str
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def vetting_metrics(
    decisions: Sequence[VettingDecision],
    gold_presence: Mapping[tuple[str, str], int],
) -> VettingReport:
    """Precision/recall/F1 of accept decisions against gold presence bits."""
    if not decisions:
        raise ValidationError("no decisions to score")
    methods = {d.method for d in decisions}
    if len(methods) > 1:
        raise ValidationError(f"decisions mix methods {sorted(methods)}; score one at a time")
    tp = fp = fn = tn = 0
    for d in decisions:
        key = (d.record_id, d.category)
        if key not in gold_presence:
            raise ValidationError(f"gold presence map does not cover {key}")
        present = bool(gold_presence[key])
        if d.accepted and present:
            tp += 1
        elif d.accepted and not present:
            fp += 1
        elif not d.accepted and present:
            fn += 1
        else:
            tn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return VettingReport(
        method=methods.pop(),
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        tp=tp, fp=fp, fn=fn, tn=tn,
    )


def threshold_sweep(
    decisions: Sequence[VettingDecision],
    gold_presence: Mapping[tuple[str, str], int],
    thresholds: Sequence[float],
) -> list[dict[str, float]]:
    """Re-threshold scored decisions and report P/R/F1 at each cut."""
    rows = []
    for tau in thresholds:
        tp = fp = fn = 0
        for d in decisions:
            present = bool(gold_presence[(d.record_id, d.category)])
            accepted = d.score >= tau
            if accepted and present:
                tp += 1
            elif accepted and not present:
                fp += 1
            elif not accepted and present:
                fn += 1
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        rows.append(
            {"threshold": tau, "precision": precision, "recall": recall,
             "f1": f1_score(precision, recall)}
        )
    return rows
