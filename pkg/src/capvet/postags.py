"""Part-of-speech utilities: word segmentation aligned to caption characters,
a naive suffix/lexicon tagger for tests and untagged corpora, and the fixed
binary feature set used by the descriptiveness classifier.

Tags follow the Penn Treebank names for the categories we care about
(NN*, IN, JJ*, PRP, VB, VBG, VBD, VBN, VBP, VBZ); everything else falls
back to coarse placeholders (DT, CC, CD, RB, X).
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import CaptionRecord, strip_edge_punctuation
from .validation import ValidationError


@dataclass(frozen=True)
class WordSpan:
    """A caption word after edge-punctuation stripping, with char offsets."""

    word: str
    start: int
    end: int


def word_spans(caption: str) -> list[WordSpan]:
    """Whitespace words with offsets of their punctuation-stripped cores.

    Words that are entirely punctuation are dropped. Offsets index into the
    original caption string.
    """
    spans = []
    pos = 0
    for raw in caption.split():
        start = caption.index(raw, pos)
        pos = start + len(raw)
        core = strip_edge_punctuation(raw)
        if not core:
            continue
        lead = len(raw) - len(raw.lstrip(",.!?;:'\"()[]"))
        spans.append(WordSpan(core.lower(), start + lead, start + lead + len(core)))
    return spans


# Closed-class lexicons for the naive tagger.
_PREPOSITIONS = {
    "in", "on", "at", "by", "with", "near", "under", "over", "behind",
    "beside", "above", "below", "of", "from", "to", "for", "after",
    "before", "during", "without", "against", "across", "around",
    "between", "through", "into", "onto", "off", "inside", "outside",
    "toward", "towards", "along", "past",
}
_PERSONAL_PRONOUNS = {
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "her",
    "us", "them",
}
_DETERMINERS = {"a", "an", "the", "this", "that", "these", "those", "some", "my", "our"}
_CONJUNCTIONS = {"and", "or", "but"}
_BE_FORMS = {
    "is": "VBZ", "are": "VBP", "was": "VBD", "were": "VBD",
    "be": "VB", "been": "VBN", "being": "VBG", "am": "VBP",
}
_COMMON_ADJECTIVES = {
    "red", "blue", "green", "yellow", "orange", "purple", "black",
    "white", "brown", "gray", "pink", "big", "small", "large", "tiny",
    "old", "new", "young", "tall", "short", "long", "bright", "dark",
    "shiny", "wooden", "empty", "full", "beautiful", "happy",
}
_IRREGULAR_PAST = {"sat", "stood", "ran", "ate", "saw", "went", "held", "took", "rode"}
_IRREGULAR_PARTICIPLE = {"seen", "taken", "eaten", "ridden", "given", "broken"}


def tag_word(word: str, prev_tag: str | None = None) -> str:
    """Heuristic tag for one lowercase punctuation-stripped word."""
    if word in _BE_FORMS:
        return _BE_FORMS[word]
    if word in _PREPOSITIONS:
        return "IN"
    if word in _PERSONAL_PRONOUNS:
        return "PRP"
    if word in _DETERMINERS:
        return "DT"
    if word in _CONJUNCTIONS:
        return "CC"
    if word in _COMMON_ADJECTIVES:
        return "JJ"
    if word in _IRREGULAR_PAST:
        return "VBD"
    if word in _IRREGULAR_PARTICIPLE:
        return "VBN"
    if word.isdigit():
        return "CD"
    if word.endswith("ing") and len(word) > 4:
        return "VBG"
    if word.endswith("ed") and len(word) > 3:
        # Ambiguous VBD/VBN; after a be-form read it as a participle.
        return "VBN" if prev_tag in ("VBZ", "VBP", "VBD", "VB") else "VBD"
    if word.endswith("ly") and len(word) > 3:
        return "RB"
    if word.endswith(("ous", "ful", "ive", "able", "ible", "al", "ish")) and len(word) > 4:
        return "JJ"
    if word.endswith("s") and not word.endswith("ss") and len(word) > 3:
        return "NNS"
    if word.isalpha():
        return "NN"
    return "X"


def naive_tag_caption(caption: str) -> list[tuple[str, str]]:
    """Tag every punctuation-stripped caption word with the naive tagger."""
    tags: list[tuple[str, str]] = []
    prev = None
    for span in word_spans(caption):
        tag = tag_word(span.word, prev)
        tags.append((span.word, tag))
        prev = tag
    return tags


def record_tags(record: CaptionRecord) -> list[tuple[str, str]]:
    """POS tags aligned with word_spans(record.caption).

    Requires the record to carry pos_tags; callers that can tolerate naive
    tags should populate them at ingestion instead.
    """
    if record.pos_tags is None:
        raise ValidationError(
            f"record {record.record_id!r} has no pos_tags; re-ingest the corpus "
            "with tagging enabled or supply a pre-tagged corpus"
        )
    spans = word_spans(record.caption)
    tags = [t for w, t in record.pos_tags if strip_edge_punctuation(w)]
    if len(tags) != len(spans):
        raise ValidationError(
            f"record {record.record_id!r}: {len(tags)} tags for {len(spans)} words"
        )
    return [(span.word, tag) for span, tag in zip(spans, tags)]


def is_noun(tag: str) -> bool:
    return tag.startswith("NN")


def is_adjective(tag: str) -> bool:
    return tag.startswith("JJ")


# Feature order is part of the descriptiveness model contract.
DESCRIPTIVE_FEATURES = (
    ("noun", is_noun),
    ("preposition", lambda t: t == "IN"),
    ("adjective", is_adjective),
    ("personal_pronoun", lambda t: t == "PRP"),
    ("verb_base", lambda t: t == "VB"),
    ("gerund", lambda t: t == "VBG"),
    ("past_tense", lambda t: t == "VBD"),
    ("past_participle", lambda t: t == "VBN"),
    ("non_third_singular_present", lambda t: t == "VBP"),
    ("third_singular_present", lambda t: t == "VBZ"),
)

FEATURE_NAMES = tuple(name for name, _ in DESCRIPTIVE_FEATURES)


def feature_vector(tags: list[str]) -> list[int]:
    """Binary presence vector over DESCRIPTIVE_FEATURES for one caption."""
    return [int(any(pred(t) for t in tags)) for _, pred in DESCRIPTIVE_FEATURES]
