import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsift import data as D


def write_csv(path, body):
    path.write_text(body, encoding="utf-8")
    return path


class TestLoadDataset:
    def test_well_formed_rows(self, tmp_path):
        path = write_csv(tmp_path / "d.csv",
                         "qid,question_text,target\n"
                         "a1,Why is the sky blue?,0\n"
                         "a2,How do magnets work?,0\n"
                         "a3,Why are they all like that?,1\n")
        result = D.load_dataset(path)
        assert len(result.examples) == 3 and not result.rejected
        assert result.examples[2].target == 1

    def test_quoted_comma_stays_one_field(self, tmp_path):
        path = write_csv(tmp_path / "d.csv",
                         'qid,question_text,target\n'
                         'a1,"Why, oh why, does this happen?",0\n')
        result = D.load_dataset(path)
        assert result.examples[0].question_text == "Why, oh why, does this happen?"

    def test_doubled_quotes_unescape(self, tmp_path):
        path = write_csv(tmp_path / "d.csv",
                         'qid,question_text,target\n'
                         'a1,"He said ""no"" twice",1\n')
        result = D.load_dataset(path)
        assert result.examples[0].question_text == 'He said "no" twice'

    def test_non_binary_target_rejected_with_line(self, tmp_path):
        path = write_csv(tmp_path / "d.csv",
                         "qid,question_text,target\n"
                         "a1,fine,0\n"
                         "a2,bad,2\n"
                         "a3,fine too,1\n")
        result = D.load_dataset(path)
        assert len(result.examples) == 2
        assert result.rejected[0].line_number == 3
        assert "2" in result.rejected[0].reason

    def test_missing_header_rejected(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "a1,text,0\n")
        with pytest.raises(ValueError, match="header"):
            D.load_dataset(path)

    def test_field_count_and_empty_text_rejected(self, tmp_path):
        path = write_csv(tmp_path / "d.csv",
                         "qid,question_text,target\n"
                         "a1,only-two\n"
                         "a2,   ,1\n")
        result = D.load_dataset(path)
        assert not result.examples
        assert len(result.rejected) == 2


class TestClassStats:
    def examples(self, labels):
        return [D.LabeledExample(f"q{i}", f"question {i} text", y) for i, y in enumerate(labels)]

    def test_all_positive(self):
        stats = D.class_stats(self.examples([1, 1, 1]))
        assert stats.positive_rate == 1.0

    def test_one_in_sixteen(self):
        stats = D.class_stats(self.examples([1] + [0] * 15))
        assert stats.positive_rate == 0.0625

    def test_counts_sum_to_total(self):
        stats = D.class_stats(self.examples([0, 1, 0, 1, 1]))
        assert stats.positives + (stats.total - stats.positives) == stats.total == 5
        assert sum(stats.length_histogram.values()) == 5

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="nonempty"):
            D.class_stats([])


class TestStratifiedSplit:
    def dataset(self, n_pos, n_neg):
        return ([D.LabeledExample(f"p{i}", "positive text", 1) for i in range(n_pos)]
                + [D.LabeledExample(f"n{i}", "negative text", 0) for i in range(n_neg)])

    def test_exact_stratification_arithmetic(self):
        train, val = D.stratified_split(self.dataset(10, 90), 0.2, seed=0)
        assert sum(e.target for e in val) == 2 and len(val) == 20
        assert sum(e.target for e in train) == 8 and len(train) == 80

    def test_same_seed_identical(self):
        a = D.stratified_split(self.dataset(5, 20), 0.25, seed=3)
        b = D.stratified_split(self.dataset(5, 20), 0.25, seed=3)
        assert [e.qid for e in a[0]] == [e.qid for e in b[0]]
        assert [e.qid for e in a[1]] == [e.qid for e in b[1]]

    def test_disjoint_union_preserves_everything(self):
        data = self.dataset(7, 13)
        train, val = D.stratified_split(data, 0.3, seed=1)
        ids = sorted(e.qid for e in train) + sorted(e.qid for e in val)
        assert sorted(ids) == sorted(e.qid for e in data)
        assert not set(e.qid for e in train) & set(e.qid for e in val)

    @given(st.integers(2, 40), st.integers(2, 40),
           st.floats(0.05, 0.95), st.integers(0, 10**6))
    @settings(max_examples=60, deadline=None)
    def test_split_properties_hold_generally(self, n_pos, n_neg, frac, seed):
        data = self.dataset(n_pos, n_neg)
        train, val = D.stratified_split(data, frac, seed)
        assert len(train) + len(val) == len(data)
        assert abs(sum(e.target for e in val) - frac * n_pos) <= 0.5 + 1e-9
        assert not set(e.qid for e in train) & set(e.qid for e in val)

    def test_small_class_rejected(self):
        with pytest.raises(ValueError, match="class 1"):
            D.stratified_split(self.dataset(1, 10), 0.2, seed=0)

    def test_bad_fraction_rejected(self):
        with pytest.raises(ValueError, match="fraction"):
            D.stratified_split(self.dataset(5, 5), 1.2, seed=0)


class TestStratifiedSample:
    def test_preserves_class_balance_roughly(self):
        data = ([D.LabeledExample(f"p{i}", "t", 1) for i in range(20)]
                + [D.LabeledExample(f"n{i}", "t", 0) for i in range(180)])
        sample = D.stratified_sample(data, 50, seed=0)
        assert len(sample) == 50
        assert sum(e.target for e in sample) == 5

    def test_limit_above_size_returns_all(self):
        data = [D.LabeledExample("a", "t", 0), D.LabeledExample("b", "t", 1)]
        assert len(D.stratified_sample(data, 10, seed=0)) == 2

    def test_seeded(self):
        data = ([D.LabeledExample(f"p{i}", "t", 1) for i in range(50)]
                + [D.LabeledExample(f"n{i}", "t", 0) for i in range(50)])
        a = D.stratified_sample(data, 30, seed=4)
        b = D.stratified_sample(data, 30, seed=4)
        assert [e.qid for e in a] == [e.qid for e in b]
