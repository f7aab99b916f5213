"""Caption descriptiveness classifier: logistic regression over ten binary
part-of-speech presence features, trained on descriptive-style captions
(positive) vs narrative-style captions (negative). Vetting accepts every
label in a caption scored above 0.5.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np
from sklearn.linear_model import LogisticRegression

from ..corpus import CaptionRecord
from ..extraction import ExtractedLabel
from ..postags import FEATURE_NAMES, feature_vector, record_tags
from ..validation import ValidationError
from ..vetting import VettingDecision


class DescriptivenessModel:
    """Thin sklearn-logistic-regression wrapper over the fixed feature set."""

    feature_names = FEATURE_NAMES

    def __init__(self, seed: int = 0):
        self.seed = seed

    @staticmethod
    def _features(records: Sequence[CaptionRecord]) -> np.ndarray:
        return np.array(
            [feature_vector([t for _, t in record_tags(r)]) for r in records], dtype=np.float64
        )

    def fit(
        self, descriptive: Sequence[CaptionRecord], narrative: Sequence[CaptionRecord]
    ) -> "DescriptivenessModel":
        if not descriptive or not narrative:
            raise ValidationError("need non-empty positive and negative caption sets")
        x = np.vstack([self._features(descriptive), self._features(narrative)])
        y = np.concatenate([np.ones(len(descriptive)), np.zeros(len(narrative))])
        self._clf = LogisticRegression(random_state=self.seed, max_iter=1000)
        self._clf.fit(x, y)
        return self

    def score(self, records: Sequence[CaptionRecord]) -> np.ndarray:
        """Descriptiveness probability in (0,1) per caption."""
        if not hasattr(self, "_clf"):
            raise ValidationError("model is not fitted")
        return self._clf.predict_proba(self._features(records))[:, 1]


def train_descriptiveness(
    descriptive: Sequence[CaptionRecord],
    narrative: Sequence[CaptionRecord],
    seed: int = 0,
) -> DescriptivenessModel:
    return DescriptivenessModel(seed=seed).fit(descriptive, narrative)


def descriptive_vet(
    model: DescriptivenessModel,
    records: Sequence[CaptionRecord],
    labels_by_record: Mapping[str, Sequence[ExtractedLabel]],
    threshold: float = 0.5,
) -> list[VettingDecision]:
    """Accept all labels of captions whose descriptiveness exceeds threshold."""
    scores = model.score(records)
    decisions = []
    for record, score in zip(records, scores):
        accepted = bool(score > threshold)
        for li, label in enumerate(labels_by_record.get(record.record_id, ())):
            decisions.append(
                VettingDecision(
                    record_id=record.record_id,
                    label_ref=li,
                    category=label.category,
                    char_span=label.char_span,
                    score=float(score),
                    accepted=accepted,
                    method="accept_descriptive",
                )
            )
    return decisions
