"""Vetting metric tests: confusion counts, the accept-everything recall
identity, and re-thresholding sweeps."""

from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from capvet.metrics.vetting import VettingReport, f1_score, threshold_sweep, vetting_metrics
from capvet.validation import ValidationError
from capvet.vetting import VettingDecision


def decision(record_id, category, accepted, score=1.0, method="none"):
    return VettingDecision(
        record_id=record_id,
        label_ref=0,
        category=category,
        char_span=(0, 3),
        score=score,
        accepted=accepted,
        method=method,
    )


def accept_all_pool(n_present, n_total):
    """Accept-everything decisions over a pool with n_present true labels."""
    decisions = [decision(f"r{i:04d}", "dog", accepted=True) for i in range(n_total)]
    gold = {(f"r{i:04d}", "dog"): int(i < n_present) for i in range(n_total)}
    return decisions, gold


class TestF1Score:
    def test_harmonic_mean(self):
        assert f1_score(0.5, 1.0) == pytest.approx(2 / 3, abs=1e-12)
        assert f1_score(1.0, 0.5) == pytest.approx(2 / 3, abs=1e-12)

    def test_zero_when_both_zero(self):
        assert f1_score(0.0, 0.0) == 0.0


class TestVettingMetrics:
    def test_hand_confusion_counts(self):
        decisions = [
            decision("r1", "dog", accepted=True),   # present: tp
            decision("r1", "cat", accepted=True),   # absent:  fp
            decision("r2", "dog", accepted=False),  # present: fn
            decision("r2", "cat", accepted=False),  # absent:  tn
            decision("r3", "dog", accepted=True),   # present: tp
        ]
        gold = {
            ("r1", "dog"): 1, ("r1", "cat"): 0,
            ("r2", "dog"): 1, ("r2", "cat"): 0,
            ("r3", "dog"): 1,
        }
        report = vetting_metrics(decisions, gold)
        assert (report.tp, report.fp, report.fn, report.tn) == (2, 1, 1, 1)
        assert report.n == 5
        assert report.method == "none"
        assert report.precision == pytest.approx(2 / 3, abs=1e-12)
        assert report.recall == pytest.approx(2 / 3, abs=1e-12)
        assert report.f1 == pytest.approx(2 / 3, abs=1e-12)

    @pytest.mark.parametrize(
        "n_present, published_f1",
        [(463, 0.633), (596, 0.747), (737, 0.849), (948, 0.973)],
    )
    def test_accept_everything_f1_from_pool_precision(self, n_present, published_f1):
        """With recall pinned at 1, F1 is 2p/(1+p) of the pool precision."""
        decisions, gold = accept_all_pool(n_present, 1000)
        report = vetting_metrics(decisions, gold)
        p = n_present / 1000
        assert report.precision == pytest.approx(p, abs=1e-12)
        assert report.recall == 1.0
        assert report.f1 == pytest.approx(2 * p / (1 + p), abs=1e-12)
        assert round(report.f1, 3) == published_f1

    @given(present=st.lists(st.booleans(), min_size=1, max_size=50))
    def test_accept_everything_recall_is_one(self, present):
        decisions = [decision(f"r{i}", "dog", accepted=True) for i in range(len(present))]
        gold = {(f"r{i}", "dog"): int(bit) for i, bit in enumerate(present)}
        report = vetting_metrics(decisions, gold)
        if any(present):
            assert report.recall == 1.0
        else:
            assert report.recall == 0.0
        assert report.precision == pytest.approx(sum(present) / len(present), abs=1e-12)

    def test_perfect_vetting(self):
        decisions = [
            decision("r1", "dog", accepted=True),
            decision("r2", "dog", accepted=False),
        ]
        gold = {("r1", "dog"): 1, ("r2", "dog"): 0}
        report = vetting_metrics(decisions, gold)
        assert report.precision == report.recall == report.f1 == 1.0

    def test_empty_decisions_rejected(self):
        with pytest.raises(ValidationError, match="no decisions"):
            vetting_metrics([], {})

    def test_mixed_methods_rejected(self):
        decisions = [
            decision("r1", "dog", accepted=True, method="none"),
            decision("r2", "dog", accepted=True, method="oracle"),
        ]
        gold = {("r1", "dog"): 1, ("r2", "dog"): 1}
        with pytest.raises(ValidationError, match="mix methods"):
            vetting_metrics(decisions, gold)

    def test_uncovered_decision_rejected(self):
        decisions = [decision("r1", "dog", accepted=True)]
        with pytest.raises(ValidationError, match="does not cover"):
            vetting_metrics(decisions, {("r9", "dog"): 1})


class TestThresholdSweep:
    GOLD = {("r1", "dog"): 1, ("r2", "dog"): 0, ("r3", "dog"): 1}

    def scored_decisions(self):
        return [
            decision("r1", "dog", accepted=True, score=0.9),
            decision("r2", "dog", accepted=True, score=0.6),
            decision("r3", "dog", accepted=True, score=0.3),
        ]

    def test_hand_sweep(self):
        rows = threshold_sweep(self.scored_decisions(), self.GOLD, [0.0, 0.5, 1.0])
        assert rows[0]["threshold"] == 0.0
        assert rows[0]["precision"] == pytest.approx(2 / 3, abs=1e-12)
        assert rows[0]["recall"] == 1.0
        assert rows[0]["f1"] == pytest.approx(0.8, abs=1e-12)
        assert rows[1]["precision"] == pytest.approx(0.5, abs=1e-12)
        assert rows[1]["recall"] == pytest.approx(0.5, abs=1e-12)
        assert rows[1]["f1"] == pytest.approx(0.5, abs=1e-12)
        assert rows[2] == {"threshold": 1.0, "precision": 0.0, "recall": 0.0, "f1": 0.0}

    def test_cut_is_inclusive(self):
        rows = threshold_sweep(self.scored_decisions(), self.GOLD, [0.9])
        # Score exactly at the threshold stays accepted: the single tp.
        assert rows[0]["recall"] == pytest.approx(0.5, abs=1e-12)
        assert rows[0]["precision"] == 1.0

    def test_stored_verdicts_are_ignored(self):
        decisions = [decision("r1", "dog", accepted=False, score=0.9)]
        rows = threshold_sweep(decisions, {("r1", "dog"): 1}, [0.5])
        assert rows[0]["recall"] == 1.0

    def test_recall_never_increases_with_threshold(self):
        rows = threshold_sweep(
            self.scored_decisions(), self.GOLD, [i / 10 for i in range(11)]
        )
        recalls = [row["recall"] for row in rows]
        assert recalls == sorted(recalls, reverse=True)


class TestVettingReport:
    def test_n_sums_confusion_cells(self):
        report = VettingReport(
            method="none", precision=0.5, recall=0.5, f1=0.5, tp=3, fp=2, fn=1, tn=4
        )
        assert report.n == 10
