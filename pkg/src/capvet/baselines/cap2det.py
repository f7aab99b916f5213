"""Caption-to-label classifier baseline: a closed-vocabulary multi-label
text classifier (mean-pooled token embeddings, one linear layer, sigmoid)
trained on image-level category sets. A label is rejected when the
classifier's probability for its category falls below 0.5; categories
outside the training vocabulary are rejected as closed-vocabulary misses.
"""

from __future__ import annotations

import logging
from typing import Mapping, Sequence

import numpy as np
import torch
from torch import nn

from ..corpus import CaptionRecord
from ..encoders import TransformerTextEncoder
from ..extraction import ExtractedLabel, WhitespaceTokenizer
from ..validation import ValidationError
from ..vetting import VettingDecision

logger = logging.getLogger(__name__)


class Cap2DetStyleModel(nn.Module):
    """Bag-of-tokens multi-label caption classifier."""

    def __init__(self, vocab: dict[str, int], categories: Sequence[str], dim: int = 64):
        super().__init__()
        self.vocab = vocab
        self.categories = list(categories)
        self.embedding = nn.EmbeddingBag(len(vocab), dim, mode="mean", padding_idx=0)
        self.linear = nn.Linear(dim, len(categories))
        self._tokenizer = WhitespaceTokenizer()

    def _encode(self, captions: Sequence[str]) -> tuple[torch.Tensor, torch.Tensor]:
        flat: list[int] = []
        offsets: list[int] = []
        unk = self.vocab["[UNK]"]
        for caption in captions:
            offsets.append(len(flat))
            toks = self._tokenizer.tokenize(caption).tokens
            flat.extend(self.vocab.get(t, unk) for t in toks)
        return torch.tensor(flat, dtype=torch.long), torch.tensor(offsets, dtype=torch.long)

    def forward(self, captions: Sequence[str]) -> torch.Tensor:
        ids, offsets = self._encode(captions)
        return self.linear(self.embedding(ids, offsets))

    @torch.no_grad()
    def predict_proba(self, captions: Sequence[str]) -> np.ndarray:
        self.eval()
        return torch.sigmoid(self.forward(captions)).numpy()


def train_cap2det_style(
    records: Sequence[CaptionRecord],
    category_sets: Mapping[str, set[str]],
    categories: Sequence[str],
    seed: int = 0,
    epochs: int = 20,
    batch_size: int = 64,
    learning_rate: float = 0.05,
) -> Cap2DetStyleModel:
    """Multi-label BCE training on (caption, image-level category set) pairs."""
    if not records:
        raise ValidationError("empty training set")
    torch.manual_seed(seed)
    tokenizer = WhitespaceTokenizer()
    vocab = TransformerTextEncoder.build_vocab(
        tokenizer.tokenize(r.caption).tokens for r in records
    )
    model = Cap2DetStyleModel(vocab, categories)
    cat_index = {c: i for i, c in enumerate(model.categories)}
    y = torch.zeros((len(records), len(categories)))
    for i, record in enumerate(records):
        for cat in category_sets.get(record.record_id, ()):
            if cat in cat_index:
                y[i, cat_index[cat]] = 1.0
    captions = [r.caption for r in records]
    opt = torch.optim.Adam(model.parameters(), lr=learning_rate)
    loss_fn = nn.BCEWithLogitsLoss()
    rng = np.random.default_rng(seed)
    model.train()
    for epoch in range(epochs):
        order = rng.permutation(len(records))
        total, n = 0.0, 0
        for start in range(0, len(records), batch_size):
            idx = order[start : start + batch_size]
            logits = model([captions[i] for i in idx])
            loss = loss_fn(logits, y[idx])
            if not torch.isfinite(loss):
                raise RuntimeError(f"training diverged at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item()
            n += 1
        logger.debug("cap2det epoch %d: loss %.4f", epoch, total / n)
    model.eval()
    return model


def cap2det_vet(
    model: Cap2DetStyleModel,
    records: Sequence[CaptionRecord],
    labels_by_record: Mapping[str, Sequence[ExtractedLabel]],
    threshold: float = 0.5,
) -> list[VettingDecision]:
    """Reject labels whose category probability is below threshold; unseen
    categories are closed-vocabulary rejections with score 0."""
    cat_index = {c: i for i, c in enumerate(model.categories)}
    probs = model.predict_proba([r.caption for r in records])
    decisions = []
    for row, record in zip(probs, records):
        for li, label in enumerate(labels_by_record.get(record.record_id, ())):
            if label.category not in cat_index:
                decisions.append(
                    VettingDecision(
                        record_id=record.record_id,
                        label_ref=li,
                        category=label.category,
                        char_span=label.char_span,
                        score=0.0,
                        accepted=False,
                        method="cap2det",
                        reason="closed vocabulary",
                    )
                )
                continue
            p = float(row[cat_index[label.category]])
            decisions.append(
                VettingDecision(
                    record_id=record.record_id,
                    label_ref=li,
                    category=label.category,
                    char_span=label.char_span,
                    score=p,
                    accepted=p >= threshold,
                    method="cap2det",
                )
            )
    return decisions
