"""Synthetic desk-scale corpora with planted structured noise.

Every generated caption mentions exactly two categories: one in a
"descriptive" slot (subject of the sentence) and one in a noisy slot drawn
from the configured noise positions (prepositional phrase, noun modifier,
named entity, past tense). Each mention carries an independent ground-truth
presence bit: descriptive mentions are visually present with
p_present_descriptive, noisy mentions with p_present_noisy.

The noisy slot's category is the descriptive category's fixed partner (the
next category in vocabulary order), not an independent draw. An absent noisy
mention therefore co-occurs with the same visible partner object every time,
giving detectors trained without vetting a consistent wrong anchor — noise
with structure, like co-occurrence noise in web captions, rather than noise
that washes out.

Paired images are colored-rectangle scenes with known boxes, materialized
lazily per record so language-only experiments never touch pixels.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass, field

import numpy as np

from .corpus import CaptionRecord
from .validation import ValidationError, check_probability

NOISE_POSITIONS = ("prepositional_phrase", "noun_modifier", "named_entity", "past_tense")


@dataclass
class SyntheticCorpusConfig:
    n_records: int
    categories: list[str]
    p_present_descriptive: float = 0.9
    p_present_noisy: float = 0.1
    noise_positions: tuple[str, ...] = ("prepositional_phrase", "noun_modifier")
    seed: int = 0
    image_size: int = 96

    def __post_init__(self):
        if self.n_records < 1:
            raise ValidationError(f"n_records must be >= 1, got {self.n_records}")
        if not self.categories:
            raise ValidationError("categories must be non-empty")
        if len(self.categories) < 2:
            raise ValidationError("need at least 2 categories for distinct slot mentions")
        check_probability(self.p_present_descriptive, "p_present_descriptive")
        check_probability(self.p_present_noisy, "p_present_noisy")
        bad = [p for p in self.noise_positions if p not in NOISE_POSITIONS]
        if bad:
            raise ValidationError(f"unknown noise positions {bad}; choose from {NOISE_POSITIONS}")
        if not self.noise_positions:
            raise ValidationError("noise_positions must be non-empty")


# Templates are (word, tag) lists; None marks the category slot. Multi-word
# categories expand in place, one tag per word.

_DESC_FRAMES = [
    [("a", "DT"), (None, "NN"), ("sits", "VBZ")],
    [("a", "DT"), (None, "NN"), ("stands", "VBZ")],
    [("a", "DT"), ("small", "JJ"), (None, "NN"), ("sits", "VBZ")],
    [("a", "DT"), ("large", "JJ"), (None, "NN"), ("stands", "VBZ")],
    [("the", "DT"), (None, "NN"), ("rests", "VBZ")],
]

_NOISE_FRAMES = {
    "prepositional_phrase": [
        [("on", "IN"), ("a", "DT"), (None, "NN")],
        [("near", "IN"), ("the", "DT"), (None, "NN")],
        [("beside", "IN"), ("a", "DT"), (None, "NN")],
        [("under", "IN"), ("the", "DT"), (None, "NN")],
    ],
    "noun_modifier": [
        [("by", "IN"), ("the", "DT"), (None, "NN"), ("station", "NN")],
        [("near", "IN"), ("the", "DT"), (None, "NN"), ("park", "NN")],
        [("at", "IN"), ("the", "DT"), (None, "NN"), ("stand", "NN")],
        [("by", "IN"), ("the", "DT"), (None, "NN"), ("market", "NN")],
    ],
    "named_entity": [
        [("with", "IN"), ("mr", "NNP"), (None, "NNP")],
        [("with", "IN"), ("miss", "NNP"), (None, "NNP")],
        [("named", "VBN"), (None, "NNP")],
    ],
    "past_tense": [
        [("where", "WRB"), ("a", "DT"), (None, "NN"), ("stood", "VBD")],
        [("where", "WRB"), ("the", "DT"), (None, "NN"), ("sat", "VBD")],
        [("after", "IN"), ("the", "DT"), (None, "NN"), ("left", "VBD")],
    ],
}


def _fill(frame, category: str) -> list[tuple[str, str]]:
    out = []
    for word, tag in frame:
        if word is None:
            out.extend((part, tag) for part in category.split())
        else:
            out.append((word, tag))
    return out


@dataclass
class SyntheticRecordInfo:
    """Generation metadata for one record (slots, categories, presence)."""

    record_id: str
    descriptive_category: str
    noisy_category: str
    noise_position: str
    descriptive_present: bool
    noisy_present: bool

    @property
    def present_categories(self) -> list[str]:
        out = []
        if self.descriptive_present:
            out.append(self.descriptive_category)
        if self.noisy_present:
            out.append(self.noisy_category)
        return out


def _record_rng(seed: int, index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index, stream]))


def _generate_one(config: SyntheticCorpusConfig, index: int) -> tuple[CaptionRecord, SyntheticRecordInfo]:
    rng = _record_rng(config.seed, index, 0)
    record_id = f"syn-{index:06d}"
    i_d = int(rng.integers(len(config.categories)))
    cat_d = config.categories[i_d]
    cat_n = config.categories[(i_d + 1) % len(config.categories)]
    position = config.noise_positions[rng.integers(len(config.noise_positions))]
    desc_frame = _DESC_FRAMES[rng.integers(len(_DESC_FRAMES))]
    noise_frame = _NOISE_FRAMES[position][rng.integers(len(_NOISE_FRAMES[position]))]
    tagged = _fill(desc_frame, cat_d) + _fill(noise_frame, cat_n)
    caption = " ".join(w for w, _ in tagged)
    if rng.random() < 0.5:
        caption += "."
    info = SyntheticRecordInfo(
        record_id=record_id,
        descriptive_category=cat_d,
        noisy_category=cat_n,
        noise_position=position,
        descriptive_present=bool(rng.random() < config.p_present_descriptive),
        noisy_present=bool(rng.random() < config.p_present_noisy),
    )
    record = CaptionRecord(
        record_id=record_id,
        image_ref=f"synthetic://{record_id}",
        caption=caption,
        dataset="synthetic",
        split="unsplit",
        pos_tags=tagged,
    )
    return record, info


def category_color(categories: list[str], name: str) -> tuple[float, float, float]:
    """Stable, well-separated RGB color in [0,1] for a category."""
    i = categories.index(name)
    hue = (i * 0.61803398875) % 1.0
    return colorsys.hsv_to_rgb(hue, 0.85, 0.9)


@dataclass
class SyntheticScenes:
    """Lazy image/box provider for a generated corpus.

    Scene layout is a pure function of (seed, record index), so scenes can
    be rendered in any order and only when pixels are actually needed.
    """

    config: SyntheticCorpusConfig
    infos: dict[str, SyntheticRecordInfo]
    _box_cache: dict[str, list[tuple[str, np.ndarray]]] = field(default_factory=dict, repr=False)

    @staticmethod
    def _index_of(record_id: str) -> int:
        return int(record_id.rsplit("-", 1)[1])

    def boxes(self, record_id: str) -> list[tuple[str, np.ndarray]]:
        """Ground-truth (category, [x1, y1, x2, y2]) boxes for one scene."""
        if record_id in self._box_cache:
            return self._box_cache[record_id]
        info = self.infos[record_id]
        rng = _record_rng(self.config.seed, self._index_of(record_id), 1)
        size = self.config.image_size
        out = []
        for cat in info.present_categories:
            w = int(rng.integers(size // 3, size // 2))
            h = int(rng.integers(size // 3, size // 2))
            x1 = int(rng.integers(0, size - w))
            y1 = int(rng.integers(0, size - h))
            out.append((cat, np.array([x1, y1, x1 + w, y1 + h], dtype=np.float32)))
        self._box_cache[record_id] = out
        return out

    def image(self, record_id: str) -> np.ndarray:
        """Render the scene as float32 HxWx3 in [0,1]."""
        size = self.config.image_size
        img = np.full((size, size, 3), 0.95, dtype=np.float32)
        rng = _record_rng(self.config.seed, self._index_of(record_id), 2)
        # Gray distractor rectangles first, category rectangles on top.
        for _ in range(int(rng.integers(0, 3))):
            w = int(rng.integers(size // 5, size // 3))
            h = int(rng.integers(size // 5, size // 3))
            x1 = int(rng.integers(0, size - w))
            y1 = int(rng.integers(0, size - h))
            img[y1 : y1 + h, x1 : x1 + w] = 0.55
        for cat, box in self.boxes(record_id):
            x1, y1, x2, y2 = box.astype(int)
            img[y1:y2, x1:x2] = category_color(self.config.categories, cat)
        return img

    def proposals(self, record_id: str, n_jitter: int = 4) -> np.ndarray:
        """Region proposals: a fixed multi-scale grid plus jittered GT boxes."""
        size = self.config.image_size
        boxes = [b for b in _grid_boxes(size)]
        rng = _record_rng(self.config.seed, self._index_of(record_id), 3)
        for _, gt in self.boxes(record_id):
            for _ in range(n_jitter):
                shift = rng.normal(0.0, size * 0.04, size=4)
                x1 = float(np.clip(gt[0] + shift[0], 0, size - 2))
                y1 = float(np.clip(gt[1] + shift[1], 0, size - 2))
                x2 = float(np.clip(gt[2] + shift[2], x1 + 2, size))
                y2 = float(np.clip(gt[3] + shift[3], y1 + 2, size))
                boxes.append([x1, y1, x2, y2])
        return np.asarray(boxes, dtype=np.float32)


def _grid_boxes(size: int) -> list[list[float]]:
    out = []
    for cells in (2, 3):
        step = size / cells
        for i in range(cells):
            for j in range(cells):
                out.append([i * step, j * step, (i + 1) * step, (j + 1) * step])
    return out


def generate_synthetic_corpus(
    config: SyntheticCorpusConfig,
) -> tuple[list[CaptionRecord], dict[tuple[str, str], int], SyntheticScenes]:
    """Generate records, ground-truth presence bits, and a lazy scene provider.

    The presence map is keyed by (record_id, category_name) and holds one bit
    per planted mention.
    """
    records = []
    infos = {}
    presence: dict[tuple[str, str], int] = {}
    for index in range(config.n_records):
        record, info = _generate_one(config, index)
        records.append(record)
        infos[record.record_id] = info
        presence[(record.record_id, info.descriptive_category)] = int(info.descriptive_present)
        presence[(record.record_id, info.noisy_category)] = int(info.noisy_present)
    return records, presence, SyntheticScenes(config=config, infos=infos)


def generate_descriptiveness_fixture(
    n_per_class: int, seed: int = 0
) -> tuple[list[CaptionRecord], list[CaptionRecord]]:
    """Tagged corpora mimicking descriptive vs narrative caption styles.

    The first list is present-tense, pronoun-free ("descriptive"); the second
    is past-tense with personal pronouns ("narrative"). Both carry pos_tags.
    """
    rng = np.random.default_rng(seed)
    nouns = ["dog", "table", "kite", "rider", "bottle", "bench", "garden", "window"]
    dii, sis = [], []
    for i in range(n_per_class):
        a, b = rng.choice(len(nouns), size=2, replace=False)
        tagged_d = [
            ("a", "DT"), (nouns[a], "NN"), ("sits", "VBZ"),
            ("on", "IN"), ("the", "DT"), (nouns[b], "NN"),
        ]
        dii.append(
            CaptionRecord(
                record_id=f"dii-{i:05d}",
                image_ref="",
                caption=" ".join(w for w, _ in tagged_d),
                dataset="dii",
                pos_tags=tagged_d,
            )
        )
        pron = ["he", "she", "they"][int(rng.integers(3))]
        verb = ["walked", "carried", "watched"][int(rng.integers(3))]
        tagged_s = [
            (pron, "PRP"), (verb, "VBD"), ("the", "DT"), (nouns[a], "NN"),
            ("to", "IN"), ("the", "DT"), (nouns[b], "NN"),
        ]
        sis.append(
            CaptionRecord(
                record_id=f"sis-{i:05d}",
                image_ref="",
                caption=" ".join(w for w, _ in tagged_s),
                dataset="sis",
                pos_tags=tagged_s,
            )
        )
    return dii, sis
