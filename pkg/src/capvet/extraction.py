"""Caption tokenization, category-mention extraction, and vetting masks.

Extraction is word-boundary exact match: caption words (lowercased, edge
punctuation stripped, hyphens split) are compared against vocabulary names,
multi-word names matching as contiguous word runs. A raw substring mode is
available behind a flag. Masks restrict the presence model's loss and
predictions to extracted-label tokens.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from .corpus import CategoryVocabulary, strip_edge_punctuation
from .validation import ValidationError

EM_LABEL = "[EM_LABEL]"

_PUNCT = ",.!?;:'\"()[]"


@dataclass(frozen=True)
class TokenizedCaption:
    """Subword tokens with character spans and source-word indices."""

    caption: str
    tokens: tuple[str, ...]
    char_spans: tuple[tuple[int, int], ...]
    word_ids: tuple[int, ...]
    truncated: bool = False

    def __post_init__(self):
        prev_end = -1
        for start, end in self.char_spans:
            if start < prev_end:
                raise ValidationError("token char_spans overlap or decrease")
            prev_end = end

    def __len__(self) -> int:
        return len(self.tokens)


class WhitespaceTokenizer:
    """Lowercase whitespace tokenizer that splits off punctuation and hyphens.

    Punctuation characters become their own tokens so detokenization can
    recover the caption modulo whitespace. Subword splitting is emulated by
    max_piece: words longer than max_piece characters are chopped into
    max_piece-sized pieces (sharing one word id), which exercises the
    multi-token code paths without a learned vocabulary.
    """

    def __init__(
        self,
        lowercase: bool = True,
        max_length: int = 512,
        max_piece: int | None = None,
        special_tokens: tuple[str, ...] = (EM_LABEL,),
    ):
        self.lowercase = lowercase
        self.max_length = max_length
        self.max_piece = max_piece
        self.special_tokens = frozenset(special_tokens)

    def tokenize(self, caption: str) -> TokenizedCaption:
        if not caption.strip():
            raise ValidationError("cannot tokenize an empty caption")
        tokens: list[str] = []
        spans: list[tuple[int, int]] = []
        word_ids: list[int] = []
        word_id = -1
        for match in re.finditer(r"\S+", caption):
            word_id += 1
            for piece, start, end in _split_word(match.group(), match.start()):
                if self.max_piece and len(piece) > self.max_piece and piece not in _PUNCT:
                    for off in range(0, len(piece), self.max_piece):
                        sub = piece[off : off + self.max_piece]
                        tokens.append(sub.lower() if self.lowercase else sub)
                        spans.append((start + off, start + off + len(sub)))
                        word_ids.append(word_id)
                else:
                    tokens.append(piece.lower() if self.lowercase else piece)
                    spans.append((start, end))
                    word_ids.append(word_id)
        truncated = len(tokens) > self.max_length
        if truncated:
            tokens = tokens[: self.max_length]
            spans = spans[: self.max_length]
            word_ids = word_ids[: self.max_length]
        return TokenizedCaption(
            caption=caption,
            tokens=tuple(tokens),
            char_spans=tuple(spans),
            word_ids=tuple(word_ids),
            truncated=truncated,
        )


def _split_word(raw: str, offset: int):
    """Split one whitespace token into pieces: punctuation chars and runs
    between punctuation/hyphens, each with caption char offsets."""
    pieces = []
    buf_start = None
    for i, ch in enumerate(raw):
        if ch in _PUNCT or ch == "-":
            if buf_start is not None:
                pieces.append((raw[buf_start:i], offset + buf_start, offset + i))
                buf_start = None
            if ch in _PUNCT:
                pieces.append((ch, offset + i, offset + i + 1))
            # Hyphens split words and are dropped from the token stream.
        elif buf_start is None:
            buf_start = i
    if buf_start is not None:
        pieces.append((raw[buf_start:], offset + buf_start, offset + len(raw)))
    return pieces


def detokenize(tok: TokenizedCaption) -> str:
    """Reassemble tokens into a whitespace-normalized caption."""
    return " ".join(t for t in tok.tokens if t not in (EM_LABEL,))


@dataclass
class ExtractedLabel:
    """One vocabulary mention located in a caption."""

    category_id: int
    category: str
    surface: str
    char_span: tuple[int, int]
    token_span: tuple[int, int] | None = None


@dataclass(frozen=True)
class CaptionWord:
    text: str
    start: int
    end: int


def caption_words(caption: str) -> list[CaptionWord]:
    """Matching units: lowercased, edge-punct-stripped, hyphen-split words."""
    words = []
    for match in re.finditer(r"\S+", caption):
        raw, base = match.group(), match.start()
        for part_match in re.finditer(r"[^-]+", raw):
            core = strip_edge_punctuation(part_match.group())
            if not core:
                continue
            lead = len(part_match.group()) - len(part_match.group().lstrip(_PUNCT))
            start = base + part_match.start() + lead
            words.append(CaptionWord(core.lower(), start, start + len(core)))
    return words


def _normalize_surface(surface: str) -> str:
    cleaned = "".join(ch for ch in surface.replace("-", " ") if ch not in _PUNCT)
    return " ".join(cleaned.lower().split())


def extract_labels(
    caption: str,
    vocab: CategoryVocabulary,
    mode: str = "word",
    tokenized: TokenizedCaption | None = None,
) -> list[ExtractedLabel]:
    """Locate vocabulary mentions in a caption, ordered by char_span.

    Word mode matches whole punctuation-stripped words, multi-word names as
    contiguous runs, longest match first, scanning left to right. Substring
    mode matches raw lowercase substrings. When tokenized is given, each
    label's token_span is filled in.
    """
    if mode not in ("word", "substring"):
        raise ValidationError(f"mode must be 'word' or 'substring', got {mode!r}")
    by_length = sorted(vocab, key=lambda name: -len(name.split()))
    labels: list[ExtractedLabel] = []
    if mode == "word":
        words = caption_words(caption)
        i = 0
        while i < len(words):
            matched = None
            for name in by_length:
                parts = name.split()
                if i + len(parts) <= len(words) and all(
                    words[i + k].text == parts[k] for k in range(len(parts))
                ):
                    matched = (name, len(parts))
                    break
            if matched:
                name, n = matched
                span = (words[i].start, words[i + n - 1].end)
                labels.append(
                    ExtractedLabel(
                        category_id=vocab.id_of(name),
                        category=name,
                        surface=caption[span[0] : span[1]],
                        char_span=span,
                    )
                )
                i += n
            else:
                i += 1
    else:
        lowered = caption.lower()
        taken = [False] * len(caption)
        for name in by_length:
            start = 0
            while True:
                pos = lowered.find(name, start)
                if pos < 0:
                    break
                end = pos + len(name)
                if not any(taken[pos:end]):
                    for k in range(pos, end):
                        taken[k] = True
                    labels.append(
                        ExtractedLabel(
                            category_id=vocab.id_of(name),
                            category=name,
                            surface=caption[pos:end],
                            char_span=(pos, end),
                        )
                    )
                start = end
        labels.sort(key=lambda lab: lab.char_span)
    for label in labels:
        assert _normalize_surface(label.surface) == label.category
    if tokenized is not None:
        align_labels(tokenized, labels)
    return labels


def align_labels(tok: TokenizedCaption, labels: list[ExtractedLabel]) -> None:
    """Fill each label's token_span with the tokens overlapping its chars."""
    for label in labels:
        lo, hi = label.char_span
        first = last = None
        for i, (s, e) in enumerate(tok.char_spans):
            if s < hi and e > lo and e > s:
                if first is None:
                    first = i
                last = i
        if first is None:
            raise ValidationError(
                f"label {label.category!r} at {label.char_span} has no tokens "
                "(caption truncated?)"
            )
        label.token_span = (first, last + 1)


@dataclass
class VettingMask:
    """Binary mask over tokens with per-position label ownership (-1 = none)."""

    mask: list[int]
    label_index: list[int]

    @property
    def total(self) -> int:
        return sum(self.mask)


def build_mask(tok: TokenizedCaption, labels: list[ExtractedLabel]) -> VettingMask:
    """Mark every token inside an extracted label's token_span."""
    mask = [0] * len(tok)
    owner = [-1] * len(tok)
    for li, label in enumerate(labels):
        if label.token_span is None:
            raise ValidationError(f"label {label.category!r} has no token_span; align first")
        lo, hi = label.token_span
        if not (0 <= lo < hi <= len(tok)):
            raise ValidationError(f"token_span {label.token_span} outside [0, {len(tok)})")
        for i in range(lo, hi):
            if mask[i]:
                raise ValidationError(f"token {i} claimed by two labels")
            mask[i] = 1
            owner[i] = li
    return VettingMask(mask=mask, label_index=owner)


def insert_special_tokens(
    tok: TokenizedCaption,
    labels: list[ExtractedLabel],
    special_tokens: frozenset[str] = frozenset({EM_LABEL}),
    marker: str = EM_LABEL,
) -> tuple[TokenizedCaption, list[ExtractedLabel]]:
    """Insert a marker token before each label's first token.

    Returns a new TokenizedCaption and re-indexed label copies; predictions
    are still read from the label tokens themselves, markers are context.
    """
    if marker not in special_tokens:
        raise ValidationError(f"tokenizer does not reserve the marker token {marker!r}")
    for label in labels:
        if label.token_span is None:
            raise ValidationError(f"label {label.category!r} has no token_span; align first")
    starts = sorted(label.token_span[0] for label in labels)
    tokens: list[str] = []
    spans: list[tuple[int, int]] = []
    word_ids: list[int] = []
    shift_at: dict[int, int] = {}
    inserted = 0
    for i, token in enumerate(tok.tokens):
        while inserted < len(starts) and starts[inserted] == i:
            pos = tok.char_spans[i][0]
            tokens.append(marker)
            spans.append((pos, pos))
            word_ids.append(tok.word_ids[i])
            inserted += 1
        shift_at[i] = inserted
        tokens.append(token)
        spans.append(tok.char_spans[i])
        word_ids.append(tok.word_ids[i])
    new_tok = TokenizedCaption(
        caption=tok.caption,
        tokens=tuple(tokens),
        char_spans=tuple(spans),
        word_ids=tuple(word_ids),
        truncated=tok.truncated,
    )
    new_labels = [
        replace(
            label,
            token_span=(
                label.token_span[0] + shift_at[label.token_span[0]],
                label.token_span[1] + shift_at[label.token_span[1] - 1],
            ),
        )
        for label in labels
    ]
    return new_tok, new_labels
