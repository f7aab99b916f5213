"""Token-level visual presence model.

A contextual text encoder feeds a two-layer head, r = sigmoid(W2 tanh(W1 v)),
producing one presence score per subword token. Training applies binary
cross entropy only at extracted-label tokens through the vetting mask, with
each label's target replicated across its tokens. At inference a label's
score is the mean of r over its token span, accepted iff >= threshold.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch
from torch import nn

from .corpus import CaptionRecord
from .encoders import TransformerTextEncoder
from .extraction import (
    EM_LABEL,
    ExtractedLabel,
    TokenizedCaption,
    VettingMask,
    WhitespaceTokenizer,
    align_labels,
    build_mask,
    insert_special_tokens,
)
from .pseudo_labels import VisualPresenceTarget
from .validation import ValidationError, check_probability
from .vetting import VettingDecision

logger = logging.getLogger(__name__)

EPS = 1e-7


@dataclass
class VeilConfig:
    width: int = 64
    layers: int = 2
    heads: int = 4
    max_len: int = 64
    learning_rate: float = 0.1
    batch_size: int = 32
    epochs: int = 5
    seed: int = 0
    threshold: float = 0.5
    special_token_mode: bool = False
    loss_normalization: str = "per_token"
    optimizer: str = "sgd"

    def __post_init__(self):
        check_probability(self.threshold, "threshold")
        if not 0.0 < self.threshold < 1.0:
            raise ValidationError(f"threshold must be in (0,1), got {self.threshold}")
        if self.loss_normalization not in ("per_token", "per_label"):
            raise ValidationError(
                f"loss_normalization must be per_token or per_label, got {self.loss_normalization!r}"
            )
        if self.optimizer not in ("sgd", "adam"):
            raise ValidationError(f"optimizer must be sgd or adam, got {self.optimizer!r}")


@dataclass
class TrainingExample:
    """One caption ready for masked training."""

    record_id: str
    tokenized: TokenizedCaption
    labels: list[ExtractedLabel]
    mask: VettingMask
    targets: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.targets and len(self.targets) != len(self.tokenized):
            raise ValidationError(
                f"{self.record_id}: {len(self.targets)} targets for {len(self.tokenized)} tokens"
            )


def build_examples(
    records: Sequence[CaptionRecord],
    labels_by_record: Mapping[str, Sequence[ExtractedLabel]],
    targets: Sequence[VisualPresenceTarget] | None,
    tokenizer: WhitespaceTokenizer | None = None,
    special_token_mode: bool = False,
) -> list[TrainingExample]:
    """Tokenize, align, mask, and attach per-token replicated targets.

    Records with no extracted labels are skipped (nothing to vet there);
    targets may be None for inference-only examples.
    """
    tokenizer = tokenizer or WhitespaceTokenizer()
    target_map = None
    if targets is not None:
        target_map = {(t.record_id, t.label_ref): t.y for t in targets}
    examples = []
    skipped = 0
    for record in records:
        labels = list(labels_by_record.get(record.record_id, ()))
        if not labels:
            skipped += 1
            continue
        tok = tokenizer.tokenize(record.caption)
        align_labels(tok, labels)
        if special_token_mode:
            tok, labels = insert_special_tokens(tok, labels, tokenizer.special_tokens)
        mask = build_mask(tok, labels)
        per_token: list[float] = []
        if target_map is not None:
            per_token = [0.0] * len(tok)
            for li, label in enumerate(labels):
                key = (record.record_id, li)
                if key not in target_map:
                    raise ValidationError(f"no target for record {record.record_id!r} label {li}")
                lo, hi = label.token_span
                for i in range(lo, hi):
                    per_token[i] = float(target_map[key])
        examples.append(
            TrainingExample(
                record_id=record.record_id,
                tokenized=tok,
                labels=labels,
                mask=mask,
                targets=per_token,
            )
        )
    if skipped:
        logger.info("skipped %d records with no extracted labels", skipped)
    return examples


class VeilModel(nn.Module):
    """Encoder plus two-layer presence head; scores every token in (0,1)."""

    def __init__(self, encoder: TransformerTextEncoder, config: VeilConfig):
        super().__init__()
        if encoder.width != config.width:
            raise ValidationError(
                f"encoder width {encoder.width} does not match configured width {config.width}"
            )
        self.encoder = encoder
        self.config = config
        self.w1 = nn.Linear(config.width, config.width)
        self.w2 = nn.Linear(config.width, 1)

    def forward(self, ids: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        v = self.encoder.encode(ids, pad_mask)
        return torch.sigmoid(self.w2(torch.tanh(self.w1(v)))).squeeze(-1)


def masked_bce(
    r: torch.Tensor,
    y: torch.Tensor,
    mask: torch.Tensor,
    label_index: torch.Tensor | None = None,
    normalization: str = "per_token",
) -> torch.Tensor:
    """Binary cross entropy restricted to masked positions.

    Default normalization divides by the masked-token count; per_label
    averages within each label's tokens first, then across labels, and
    needs label_index (-1 at unowned positions).
    """
    m = mask.to(r.dtype)
    total = m.sum()
    if total.item() == 0:
        raise ValidationError("nothing to vet: mask selects no tokens")
    r_c = r.clamp(EPS, 1.0 - EPS)
    ll = y * torch.log(r_c) + (1.0 - y) * torch.log(1.0 - r_c)
    if normalization == "per_token":
        return -(m * ll).sum() / total
    if label_index is None:
        raise ValidationError("per_label normalization requires label_index")
    valid = mask.bool()
    flat_ll = ll[valid]
    if label_index.dim() == 2:
        batch = torch.arange(label_index.shape[0], device=r.device).unsqueeze(1)
        global_ids = label_index + batch * (label_index.max().clamp(min=0) + 1)
    else:
        global_ids = label_index
    ids = global_ids[valid]
    unique, inverse = torch.unique(ids, return_inverse=True)
    sums = torch.zeros(len(unique), dtype=r.dtype, device=r.device)
    counts = torch.zeros(len(unique), dtype=r.dtype, device=r.device)
    sums = sums.index_add(0, inverse, flat_ll)
    counts = counts.index_add(0, inverse, torch.ones_like(flat_ll))
    return -(sums / counts).mean()


def _collate(
    examples: Sequence[TrainingExample], encoder: TransformerTextEncoder
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    width = max(len(ex.tokenized) for ex in examples)
    n = len(examples)
    ids = torch.zeros((n, width), dtype=torch.long)
    pad = torch.ones((n, width), dtype=torch.bool)
    y = torch.zeros((n, width))
    m = torch.zeros((n, width))
    owner = torch.full((n, width), -1, dtype=torch.long)
    for b, ex in enumerate(examples):
        c = len(ex.tokenized)
        ids[b, :c] = torch.tensor(encoder.token_ids(ex.tokenized.tokens), dtype=torch.long)
        pad[b, :c] = False
        m[b, :c] = torch.tensor(ex.mask.mask, dtype=torch.float)
        owner[b, :c] = torch.tensor(ex.mask.label_index, dtype=torch.long)
        if ex.targets:
            y[b, :c] = torch.tensor(ex.targets)
    return ids, pad, y, m, owner


def train(config: VeilConfig, examples: Sequence[TrainingExample]) -> tuple[VeilModel, list[float]]:
    """Mini-batch training of the presence model; returns (model, loss log).

    Deterministic per config.seed; aborts on non-finite loss.
    """
    if not examples:
        raise ValidationError("empty training set")
    for ex in examples:
        if ex.mask.total == 0:
            raise ValidationError(f"example {ex.record_id!r} has an all-zero mask")
        if not ex.targets:
            raise ValidationError(f"example {ex.record_id!r} has no targets")
    torch.manual_seed(config.seed)
    vocab = TransformerTextEncoder.build_vocab(
        (ex.tokenized.tokens for ex in examples), extra=(EM_LABEL,)
    )
    encoder = TransformerTextEncoder(
        vocab, width=config.width, layers=config.layers,
        heads=config.heads, max_len=config.max_len,
    )
    model = VeilModel(encoder, config)
    if config.optimizer == "adam":
        opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    else:
        opt = torch.optim.SGD(model.parameters(), lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    history = []
    model.train()
    for epoch in range(config.epochs):
        order = rng.permutation(len(examples))
        total_loss, n_batches = 0.0, 0
        for start in range(0, len(examples), config.batch_size):
            batch = [examples[i] for i in order[start : start + config.batch_size]]
            ids, pad, y, m, owner = _collate(batch, encoder)
            r = model(ids, pad)
            loss = masked_bce(r, y, m, owner, config.loss_normalization)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"training diverged at epoch {epoch}, batch {n_batches}: loss={loss.item()}"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            total_loss += loss.item()
            n_batches += 1
        history.append(total_loss / n_batches)
        logger.info("epoch %d: loss %.4f", epoch, history[-1])
    model.eval()
    return model, history


@torch.no_grad()
def vet(
    model: VeilModel,
    examples: Sequence[TrainingExample],
    threshold: float | None = None,
    batch_size: int = 64,
) -> list[VettingDecision]:
    """Score extracted labels: mean of r over each label's token span,
    accept iff score >= threshold."""
    threshold = model.config.threshold if threshold is None else threshold
    model.eval()
    decisions = []
    for start in range(0, len(examples), batch_size):
        batch = examples[start : start + batch_size]
        ids, pad, _, _, _ = _collate(batch, model.encoder)
        r = model(ids, pad)
        for b, ex in enumerate(batch):
            for li, label in enumerate(ex.labels):
                lo, hi = label.token_span
                if hi <= lo:
                    raise ValidationError(f"label {label.category!r} has an empty token_span")
                score = float(r[b, lo:hi].mean())
                decisions.append(
                    VettingDecision(
                        record_id=ex.record_id,
                        label_ref=li,
                        category=label.category,
                        char_span=label.char_span,
                        score=score,
                        accepted=score >= threshold,
                        method="veil",
                    )
                )
    return decisions


def save_model(model: VeilModel, path: str | Path) -> None:
    torch.save(
        {
            "config": asdict(model.config),
            "vocab": model.encoder.vocab,
            "state": model.state_dict(),
        },
        path,
    )


def load_model(path: str | Path) -> VeilModel:
    blob = torch.load(path, weights_only=False)
    config = VeilConfig(**blob["config"])
    encoder = TransformerTextEncoder(
        blob["vocab"], width=config.width, layers=config.layers,
        heads=config.heads, max_len=config.max_len,
    )
    model = VeilModel(encoder, config)
    model.load_state_dict(blob["state"])
    model.eval()
    return model
