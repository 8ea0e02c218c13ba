"""Dataset ingestion, class statistics, and stratified splitting.

The corpus schema is a CSV with header qid,question_text,target where
target is 0 (sincere) or 1 (insincere). Malformed rows are rejected with
line numbers rather than aborting the load.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass

import numpy as np

EXPECTED_HEADER = ["qid", "question_text", "target"]


@dataclass
class LabeledExample:
    qid: str
    question_text: str
    target: int


@dataclass
class RejectedRow:
    line_number: int
    reason: str


@dataclass
class DatasetLoad:
    examples: list[LabeledExample]
    rejected: list[RejectedRow]


@dataclass
class DatasetStats:
    total: int
    positives: int
    positive_rate: float
    length_histogram: dict[int, int]  # whitespace word count -> examples


def load_dataset(path) -> DatasetLoad:
    examples: list[LabeledExample] = []
    rejected: list[RejectedRow] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected header {','.join(EXPECTED_HEADER)}")
        if header != EXPECTED_HEADER:
            raise ValueError(
                f"{path}: bad header {header!r}, expected {EXPECTED_HEADER!r}"
            )
        for row in reader:
            line = reader.line_num
            if len(row) != 3:
                rejected.append(RejectedRow(line, f"expected 3 fields, got {len(row)}"))
                continue
            qid, text, target = row
            if target not in ("0", "1"):
                rejected.append(RejectedRow(line, f"non-binary target {target!r}"))
                continue
            if not text.strip():
                rejected.append(RejectedRow(line, "empty question text"))
                continue
            examples.append(LabeledExample(qid, text, int(target)))
    return DatasetLoad(examples, rejected)


def class_stats(examples: list[LabeledExample]) -> DatasetStats:
    if not examples:
        raise ValueError("class_stats needs a nonempty dataset")
    positives = sum(e.target for e in examples)
    histogram = Counter(len(e.question_text.split()) for e in examples)
    return DatasetStats(
        total=len(examples),
        positives=positives,
        positive_rate=positives / len(examples),
        length_histogram=dict(sorted(histogram.items())),
    )


def stratified_split(examples: list[LabeledExample], validation_fraction: float,
                     seed: int) -> tuple[list[LabeledExample], list[LabeledExample]]:
    """Per-class shuffled split; proportions within one example of exact."""
    if not 0.0 < validation_fraction < 1.0:
        raise ValueError(f"validation_fraction must be in (0, 1), got {validation_fraction}")
    by_class: dict[int, list[int]] = {0: [], 1: []}
    for i, e in enumerate(examples):
        by_class[e.target].append(i)
    for cls, idxs in by_class.items():
        if len(idxs) < 2:
            raise ValueError(f"class {cls} has only {len(idxs)} example(s); need at least 2")
    rng = np.random.default_rng(seed)
    val_idx: list[int] = []
    train_idx: list[int] = []
    for cls in (0, 1):
        idxs = np.array(by_class[cls], dtype=np.int64)
        rng.shuffle(idxs)
        n_val = round(validation_fraction * idxs.size)
        val_idx.extend(idxs[:n_val].tolist())
        train_idx.extend(idxs[n_val:].tolist())
    train_idx.sort()
    val_idx.sort()
    return [examples[i] for i in train_idx], [examples[i] for i in val_idx]


def stratified_sample(examples: list[LabeledExample], n: int, seed: int) -> list[LabeledExample]:
    """Seeded class-proportional subsample of size n (the --limit flag)."""
    if n >= len(examples):
        return list(examples)
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    pos = [i for i, e in enumerate(examples) if e.target == 1]
    neg = [i for i, e in enumerate(examples) if e.target == 0]
    n_pos = min(len(pos), round(n * len(pos) / len(examples)))
    n_neg = n - n_pos
    if n_neg > len(neg):
        n_neg = len(neg)
        n_pos = n - n_neg
    chosen = []
    for pool, k in ((pos, n_pos), (neg, n_neg)):
        idxs = np.array(pool, dtype=np.int64)
        rng.shuffle(idxs)
        chosen.extend(idxs[:k].tolist())
    chosen.sort()
    return [examples[i] for i in chosen]
