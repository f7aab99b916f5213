"""Rule-based vetting from part-of-speech patterns: reject an extracted
label when its head word is tagged adjective or the following word is a
noun (the label is modifying something else, e.g. "car park").
"""

from __future__ import annotations

from typing import Mapping, Sequence

from ..corpus import CaptionRecord
from ..extraction import ExtractedLabel
from ..postags import is_adjective, is_noun, record_tags, word_spans
from ..validation import ValidationError
from ..vetting import VettingDecision


def reject_noun_modifier(record: CaptionRecord, label: ExtractedLabel, label_ref: int = 0) -> VettingDecision:
    """Reject iff the label's head word is an adjective or is followed by a
    noun. Multi-word labels use the last word as head.
    """
    tags = record_tags(record)
    spans = word_spans(record.caption)
    lo, hi = label.char_span
    head = None
    for wi, span in enumerate(spans):
        if span.start < hi and span.end > lo:
            head = wi
    if head is None:
        raise ValidationError(
            f"label {label.category!r} at {label.char_span} not found in the "
            f"POS word sequence of record {record.record_id!r}"
        )
    head_tag = tags[head][1]
    next_tag = tags[head + 1][1] if head + 1 < len(tags) else None
    rejected = is_adjective(head_tag) or (next_tag is not None and is_noun(next_tag))
    return VettingDecision(
        record_id=record.record_id,
        label_ref=label_ref,
        category=label.category,
        char_span=label.char_span,
        score=0.0 if rejected else 1.0,
        accepted=not rejected,
        method="reject_noun_mod",
    )


def noun_modifier_vet(
    records: Sequence[CaptionRecord],
    labels_by_record: Mapping[str, Sequence[ExtractedLabel]],
) -> list[VettingDecision]:
    decisions = []
    for record in records:
        for li, label in enumerate(labels_by_record.get(record.record_id, ())):
            decisions.append(reject_noun_modifier(record, label, li))
    return decisions
