"""Loss-based rejection baseline: simulate a few epochs of detector
training and flag the image-level label terms with the largest losses.

Epoch 1 trains normally. Before each later epoch t, the top
delta_rel * (t - 1) fraction of per-(image, label) positive loss terms is
flagged; flagged labels are zeroed in subsequent epochs' loss. A label is
rejected iff it was flagged in any epoch after the first.
"""

from __future__ import annotations

import logging
from dataclasses import replace
from typing import Mapping, Sequence

from ..extraction import ExtractedLabel
from ..validation import ValidationError
from ..vetting import VettingDecision
from ..wsod import (
    CachedProvider,
    ImageLabelSet,
    ImageProvider,
    WsodConfig,
    positive_loss_terms,
    train_wsod,
)

logger = logging.getLogger(__name__)


def large_loss_flags(
    config: WsodConfig,
    categories: Sequence[str],
    label_sets: Sequence[ImageLabelSet],
    provider: ImageProvider,
    delta_rel: float = 0.01,
    epochs: int = 5,
    steps_per_epoch: int | None = None,
) -> set[tuple[str, str]]:
    """Flagged (record_id, category) pairs after the simulated epochs."""
    if not 0.0 <= delta_rel <= 0.2:
        raise ValidationError(f"delta_rel must be in [0, 0.2], got {delta_rel}")
    if epochs < 1:
        raise ValidationError(f"epochs must be >= 1, got {epochs}")
    if delta_rel == 0.0:
        return set()
    cached = provider if isinstance(provider, CachedProvider) else CachedProvider(provider)
    n_terms = sum(len(ls.categories) for ls in label_sets)
    steps = steps_per_epoch if steps_per_epoch is not None else max(1, len(label_sets) // config.batch_size)
    rejected: set[tuple[str, str]] = set()
    model = None
    for epoch in range(1, epochs + 1):
        weights = {key: 0.0 for key in rejected}
        epoch_config = replace(config, steps=steps, seed=config.seed + epoch)
        model, _ = train_wsod(
            epoch_config, categories, label_sets, cached,
            positive_weights=weights, model=model,
        )
        if epoch == epochs:
            break
        # Entering epoch t+1, the top delta_rel * t fraction of terms is
        # flagged; once flagged, a term stays zeroed.
        k = int(delta_rel * epoch * n_terms + 1e-9)
        losses = positive_loss_terms(model, label_sets, cached)
        ranked = sorted(losses.items(), key=lambda kv: (-kv[1], kv[0]))
        rejected |= {key for key, _ in ranked[:k]}
        logger.info("epoch %d: %d of %d label terms flagged", epoch + 1, len(rejected), n_terms)
    return rejected


def large_loss_vet(
    config: WsodConfig,
    categories: Sequence[str],
    labels_by_record: Mapping[str, Sequence[ExtractedLabel]],
    provider: ImageProvider,
    delta_rel: float = 0.01,
    epochs: int = 5,
    steps_per_epoch: int | None = None,
) -> list[VettingDecision]:
    """Reject exactly the labels flagged by the large-loss simulation.

    delta_rel = 0 degenerates to no rejections (identical to no vetting).
    """
    label_sets = [
        ImageLabelSet(rid, {lab.category for lab in labs})
        for rid, labs in sorted(labels_by_record.items())
        if labs
    ]
    flagged = large_loss_flags(
        config, categories, label_sets, provider,
        delta_rel=delta_rel, epochs=epochs, steps_per_epoch=steps_per_epoch,
    )
    decisions = []
    for rid in sorted(labels_by_record):
        for li, label in enumerate(labels_by_record[rid]):
            rejected = (rid, label.category) in flagged
            decisions.append(
                VettingDecision(
                    record_id=rid,
                    label_ref=li,
                    category=label.category,
                    char_span=label.char_span,
                    score=0.0 if rejected else 1.0,
                    accepted=not rejected,
                    method="large_loss",
                )
            )
    return decisions
