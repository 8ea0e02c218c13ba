import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsift import metrics as ME


def pair_counting_auc(scores, labels):
    """O(n^2) oracle: wins + half-ties over all positive/negative pairs."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    pos, neg = s[y == 1], s[y == 0]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


class TestConfusionCounts:
    def test_all_correct(self):
        tp, fp, tn, fn = ME.confusion_counts([0.9, 0.1], [1, 0])
        assert (tp, fp, tn, fn) == (1, 0, 1, 0)

    def test_hand_count(self):
        assert ME.confusion_counts([0.9, 0.4], [1, 1], 0.5) == (1, 0, 0, 1)

    def test_boundary_score_counts_positive(self):
        tp, fp, tn, fn = ME.confusion_counts([0.5], [1], 0.5)
        assert tp == 1 and fn == 0

    def test_counts_partition_samples(self):
        rng = np.random.default_rng(0)
        s, y = rng.random(37), rng.integers(0, 2, 37)
        assert sum(ME.confusion_counts(s, y)) == 37

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            ME.confusion_counts([0.5], [1, 0])


class TestPrecisionRecallF1:
    def test_paper_results_rows(self):
        rows = [
            (0.7629, 0.7271, 0.7446),
            (0.7481, 0.6854, 0.7154),
            (0.6869, 0.5030, 0.5807),
            (0.6583, 0.3827, 0.4840),
        ]
        for p, r, f1 in rows:
            assert ME.f1_score(p, r) == pytest.approx(f1, abs=1e-4)

    def test_balanced_counts(self):
        assert ME.precision_recall_f1(1, 1, 1) == (0.5, 0.5, 0.5)

    def test_degenerate_zero_over_zero(self):
        assert ME.precision_recall_f1(0, 0, 0) == (0.0, 0.0, 0.0)
        assert ME.precision_recall_f1(0, 5, 0) == (0.0, 0.0, 0.0)

    @given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
    @settings(max_examples=100, deadline=None)
    def test_f1_is_harmonic_mean(self, tp, fp, fn):
        p, r, f1 = ME.precision_recall_f1(tp, fp, fn)
        if p + r > 0:
            assert f1 == pytest.approx(2 * p * r / (p + r))
        else:
            assert f1 == 0.0


class TestRocAuc:
    def test_perfect_ranking(self):
        assert ME.roc_auc([0.9, 0.1], [1, 0]) == 1.0

    def test_inverted_ranking(self):
        assert ME.roc_auc([0.9, 0.1], [0, 1]) == 0.0

    def test_all_tied(self):
        assert ME.roc_auc([0.3, 0.3, 0.3, 0.3], [1, 0, 1, 0]) == 0.5

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="AUC undefined"):
            ME.roc_auc([0.5, 0.7], [1, 1])

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_pair_counting_exactly(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 200))
        scores = np.round(rng.random(n), 1)  # coarse grid forces ties
        labels = rng.integers(0, 2, n)
        if labels.sum() in (0, n):
            labels[0] = 1 - labels[0]
        assert ME.roc_auc(scores, labels) == pair_counting_auc(scores, labels)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_invariant_under_strictly_increasing_transforms(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 60))
        scores = rng.random(n)
        labels = rng.integers(0, 2, n)
        if labels.sum() in (0, n):
            labels[0] = 1 - labels[0]
        base = ME.roc_auc(scores, labels)
        assert ME.roc_auc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)
        assert ME.roc_auc(3.0 * scores + 11.0, labels) == pytest.approx(base, abs=1e-12)


class TestReport:
    def test_internal_consistency(self):
        rng = np.random.default_rng(1)
        scores, labels = rng.random(64), rng.integers(0, 2, 64)
        report = ME.report_from_scores(scores, labels)
        assert report.tp + report.fp + report.tn + report.fn == 64
        assert report.f1 == pytest.approx(ME.f1_score(report.precision, report.recall))
        for value in (report.accuracy, report.precision, report.recall, report.f1, report.auc):
            assert 0.0 <= value <= 1.0

    def test_json_line_is_sorted_and_stable(self):
        report = ME.report_from_scores([0.9, 0.2], [1, 0])
        line = report.to_json_line()
        assert line == ME.report_from_scores([0.9, 0.2], [1, 0]).to_json_line()
        keys = list(__import__("json").loads(line))
        assert keys == sorted(keys)

    def test_single_class_gets_neutral_auc(self):
        report = ME.report_from_scores([0.9], [1])
        assert report.accuracy == 1.0 and report.auc == 0.5
