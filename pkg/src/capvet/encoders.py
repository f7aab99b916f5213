"""Pluggable representation backends.

Two contracts live here. EmbeddingBackend maps whole texts and image refs to
unit vectors for the CLIP-style vetting baselines; implementations are a
file-backed store of precomputed embeddings and a seeded toy backend whose
image embeddings correlate with ground-truth presence through a noise knob.
TransformerTextEncoder is the from-scratch contextual token encoder used by
the presence model at desk scale; pretrained encoders can be dropped in by
implementing the same encode() shape.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import torch
from torch import nn

from .corpus import strip_edge_punctuation
from .validation import ValidationError

PAD, UNK = "[PAD]", "[UNK]"


def _word_rng(word: str, seed: int) -> np.random.Generator:
    digest = hashlib.blake2b(word.encode(), digest_size=8).digest()
    return np.random.default_rng(
        np.random.SeedSequence([seed, int.from_bytes(digest, "big")])
    )


def _normalize(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm < 1e-9:
        out = np.zeros_like(vec)
        out[0] = 1.0
        return out
    return vec / norm


class ToyEmbeddingBackend:
    """Seeded random word vectors; image vectors built from the categories
    known to be present, blurred by Gaussian noise.

    The noise knob controls how well cosine scores track ground truth, which
    stands in for the visual competence of a real joint embedding.
    """

    def __init__(
        self,
        presence: Mapping[str, set[str]],
        dim: int = 64,
        seed: int = 0,
        noise: float = 1.0,
    ):
        if noise < 0:
            raise ValidationError(f"noise must be >= 0, got {noise}")
        self.presence = dict(presence)
        self.dim = dim
        self.seed = seed
        self.noise = noise
        self._word_cache: dict[str, np.ndarray] = {}

    def _word_vec(self, word: str) -> np.ndarray:
        if word not in self._word_cache:
            rng = _word_rng(word, self.seed)
            self._word_cache[word] = rng.standard_normal(self.dim)
        return self._word_cache[word]

    def embed_text(self, text: str) -> np.ndarray:
        words = [strip_edge_punctuation(w).lower() for w in text.split()]
        words = [w for w in words if w]
        if not words:
            raise ValidationError("cannot embed empty text")
        return _normalize(np.sum([self._word_vec(w) for w in words], axis=0))

    def embed_image(self, image_ref: str) -> np.ndarray:
        cats = self.presence[image_ref]
        base = np.zeros(self.dim)
        for cat in cats:
            for word in cat.split():
                base = base + self._word_vec(word)
        rng = _word_rng(f"image:{image_ref}", self.seed)
        base = base + self.noise * rng.standard_normal(self.dim)
        return _normalize(base)


class FileBackedEmbeddingBackend:
    """Precomputed embeddings loaded from .npz archives keyed by exact string."""

    def __init__(self, text_path: str | Path | None = None, image_path: str | Path | None = None):
        self._text = dict(np.load(text_path)) if text_path else {}
        self._image = dict(np.load(image_path)) if image_path else {}

    def embed_text(self, text: str) -> np.ndarray:
        return _normalize(np.asarray(self._text[text], dtype=np.float64))

    def embed_image(self, image_ref: str) -> np.ndarray:
        return _normalize(np.asarray(self._image[image_ref], dtype=np.float64))


class TransformerTextEncoder(nn.Module):
    """Small trainable transformer producing per-token contextual vectors."""

    def __init__(
        self,
        vocab: dict[str, int],
        width: int = 64,
        layers: int = 2,
        heads: int = 4,
        max_len: int = 64,
        ffn_dim: int = 128,
    ):
        super().__init__()
        if width % heads:
            raise ValidationError(f"width {width} not divisible by heads {heads}")
        if vocab.get(PAD) != 0 or UNK not in vocab:
            raise ValidationError("vocab must map [PAD] to 0 and contain [UNK]")
        self.vocab = vocab
        self.width = width
        self.max_len = max_len
        self.token_emb = nn.Embedding(len(vocab), width, padding_idx=0)
        self.pos_emb = nn.Embedding(max_len, width)
        layer = nn.TransformerEncoderLayer(
            d_model=width,
            nhead=heads,
            dim_feedforward=ffn_dim,
            dropout=0.0,
            batch_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers=layers, enable_nested_tensor=False)

    @staticmethod
    def build_vocab(token_sequences: Iterable[Iterable[str]], extra: Iterable[str] = ()) -> dict[str, int]:
        vocab = {PAD: 0, UNK: 1}
        for token in extra:
            vocab.setdefault(token, len(vocab))
        for seq in token_sequences:
            for token in seq:
                vocab.setdefault(token, len(vocab))
        return vocab

    def token_ids(self, tokens: Iterable[str]) -> list[int]:
        unk = self.vocab[UNK]
        return [self.vocab.get(t, unk) for t in tokens]

    def encode(self, ids: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        """ids: (B, C) int64; pad_mask: (B, C) bool, True at padding.
        Returns per-token vectors (B, C, width)."""
        if ids.shape[1] > self.max_len:
            raise ValidationError(f"sequence length {ids.shape[1]} exceeds max_len {self.max_len}")
        positions = torch.arange(ids.shape[1], device=ids.device).unsqueeze(0)
        h = self.token_emb(ids) + self.pos_emb(positions)
        return self.encoder(h, src_key_padding_mask=pad_mask)
