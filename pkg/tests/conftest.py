from __future__ import annotations

import pytest

from capvet.corpus import CaptionRecord, CategoryVocabulary


@pytest.fixture
def small_vocab() -> CategoryVocabulary:
    return CategoryVocabulary(["dog", "cat", "bus", "hot dog", "traffic light"])


def make_record(record_id: str, caption: str, **kwargs) -> CaptionRecord:
    defaults = dict(image_ref=f"images/{record_id}.jpg", dataset="default")
    defaults.update(kwargs)
    return CaptionRecord(record_id=record_id, caption=caption, **defaults)


@pytest.fixture
def record_factory():
    return make_record
