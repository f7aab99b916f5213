"""Joint-embedding vetting: cosine similarity between the image embedding
and a prompted text embedding, thresholded by a GMM selector fitted on the
dataset's own score distribution.

Global mode scores prompt+caption once per record and applies the verdict
to all of the record's labels; local mode scores prompt+category per label.
Prompt ensembling takes the max score over the prompt list.
"""

from __future__ import annotations

import logging
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..corpus import CaptionRecord
from ..extraction import ExtractedLabel
from ..validation import ValidationError
from ..vetting import VettingDecision
from .gmm import GmmSelector, fit_gmm_selector

logger = logging.getLogger(__name__)


def load_prompts(path: str | Path) -> list[str]:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    prompts = [ln for ln in lines if ln]
    if not prompts:
        raise ValidationError(f"prompt file {path} is empty")
    return prompts


def default_prompts(mode: str) -> list[str]:
    if mode not in ("global", "local"):
        raise ValidationError(f"mode must be global or local, got {mode!r}")
    text = resources.files("capvet").joinpath(f"data/prompts_{mode}.txt").read_text()
    return [ln.strip() for ln in text.splitlines() if ln.strip()]


def _score(backend, image_ref: str, texts: Sequence[str]) -> float:
    image_vec = backend.embed_image(image_ref)
    return max(float(np.dot(image_vec, backend.embed_text(t))) for t in texts)


def global_scores(
    backend, records: Sequence[CaptionRecord], prompts: Sequence[str]
) -> dict[str, float]:
    """Max-over-prompts cosine(image, prompt + caption) per record.

    Records whose embedding is unavailable are skipped with a warning.
    """
    if not prompts:
        raise ValidationError("need at least one prompt")
    out = {}
    for record in records:
        try:
            out[record.record_id] = _score(
                backend, record.image_ref, [f"{p} {record.caption}" for p in prompts]
            )
        except KeyError:
            logger.warning("no embedding for record %s; skipped", record.record_id)
    return out


def local_scores(
    backend,
    records: Sequence[CaptionRecord],
    labels_by_record: Mapping[str, Sequence[ExtractedLabel]],
    prompts: Sequence[str],
) -> dict[tuple[str, int], float]:
    """Max-over-prompts cosine(image, prompt + category) per extracted label."""
    if not prompts:
        raise ValidationError("need at least one prompt")
    out = {}
    for record in records:
        labels = labels_by_record.get(record.record_id, ())
        if not labels:
            continue
        try:
            image_vec = backend.embed_image(record.image_ref)
        except KeyError:
            logger.warning("no embedding for record %s; skipped", record.record_id)
            continue
        for li, label in enumerate(labels):
            out[(record.record_id, li)] = max(
                float(np.dot(image_vec, backend.embed_text(f"{p} {label.category}")))
                for p in prompts
            )
    return out


def _method_id(base: str, prompts: Sequence[str]) -> str:
    return f"{base}_e" if len(prompts) > 1 else base


def _unit(cosine: float) -> float:
    """Map a cosine in [-1, 1] onto the decision score range [0, 1]."""
    return min(1.0, max(0.0, (cosine + 1.0) / 2.0))


def global_clip_vet(
    backend,
    records: Sequence[CaptionRecord],
    labels_by_record: Mapping[str, Sequence[ExtractedLabel]],
    prompts: Sequence[str] | None = None,
    selector: GmmSelector | None = None,
    seed: int = 0,
) -> list[VettingDecision]:
    """Caption-level filter: one verdict per record, stamped on every label."""
    prompts = prompts if prompts is not None else default_prompts("global")[:1]
    scores = global_scores(backend, records, prompts)
    if selector is None:
        selector = fit_gmm_selector(list(scores.values()), seed=seed)
    method = _method_id("global_clip", prompts)
    ids = [r.record_id for r in records if r.record_id in scores]
    accepts = dict(zip(ids, selector.predict([scores[rid] for rid in ids])))
    decisions = []
    for record in records:
        if record.record_id not in accepts:
            continue
        accepted = bool(accepts[record.record_id])
        for li, label in enumerate(labels_by_record.get(record.record_id, ())):
            decisions.append(
                VettingDecision(
                    record_id=record.record_id,
                    label_ref=li,
                    category=label.category,
                    char_span=label.char_span,
                    score=_unit(scores[record.record_id]),
                    accepted=accepted,
                    method=method,
                )
            )
    return decisions


def local_clip_vet(
    backend,
    records: Sequence[CaptionRecord],
    labels_by_record: Mapping[str, Sequence[ExtractedLabel]],
    prompts: Sequence[str] | None = None,
    selector: GmmSelector | None = None,
    seed: int = 0,
) -> list[VettingDecision]:
    """Per-label filter from cosine(image, prompt + category name)."""
    prompts = prompts if prompts is not None else default_prompts("local")[:1]
    scores = local_scores(backend, records, labels_by_record, prompts)
    if selector is None:
        selector = fit_gmm_selector(list(scores.values()), seed=seed)
    method = _method_id("local_clip", prompts)
    keys = list(scores)
    accepts = dict(zip(keys, selector.predict([scores[k] for k in keys])))
    decisions = []
    for record in records:
        for li, label in enumerate(labels_by_record.get(record.record_id, ())):
            key = (record.record_id, li)
            if key not in scores:
                continue
            decisions.append(
                VettingDecision(
                    record_id=record.record_id,
                    label_ref=li,
                    category=label.category,
                    char_span=label.char_span,
                    score=_unit(scores[key]),
                    accepted=bool(accepts[key]),
                    method=method,
                )
            )
    return decisions
