"""Pretraining objectives: MLM masking plans, sentence-pair sampling, losses.

Masking never touches special or padding tokens. Every sampling routine
takes an explicit numpy Generator, so runs are reproducible bit-for-bit
from the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from . import kernels
from .tensor import (
    Tensor,
    add,
    as_tensor,
    clip,
    constant,
    log_softmax,
    mul,
    neg,
    rows_unit,
    scale,
    tlog,
    tmean,
    tsum,
)
from .tokenizer import TokenizedSequence, Vocab

MASK_ACTION: Literal["mask"] = "mask"
RANDOM_ACTION: Literal["random"] = "random"
KEEP_ACTION: Literal["keep"] = "keep"

MLM_RATE = 0.15
ACTION_SPLIT = (0.8, 0.1, 0.1)  # mask / random / keep


@dataclass
class MaskDecision:
    position: int
    action: str
    original_id: int
    replacement_id: int


@dataclass
class MaskPlan:
    decisions: list[MaskDecision]

    def positions(self) -> list[int]:
        return [d.position for d in self.decisions]

    def original_ids(self) -> list[int]:
        return [d.original_id for d in self.decisions]


@dataclass
class SentencePair:
    segment_a: list[int]
    segment_b: list[int]
    label: int  # 1 = positive (IsNext / in order), 0 = negative
    objective: str  # "nsp" | "sop"


def _maskable_positions(seq: TokenizedSequence, vocab: Vocab) -> list[int]:
    return [
        i
        for i, (tid, m) in enumerate(zip(seq.ids, seq.attention_mask))
        if m == 1 and tid not in vocab.special_ids
    ]


def select_mask_positions(seq: TokenizedSequence, rate: float,
                          rng: np.random.Generator, vocab: Vocab) -> MaskPlan:
    """Choose max(1, round(rate * maskable)) positions; 80/10/10 actions."""
    if not 0.0 < rate < 1.0:
        raise ValueError(f"mask rate must be in (0, 1), got {rate}")
    maskable = _maskable_positions(seq, vocab)
    if not maskable:
        raise ValueError("sequence has no maskable tokens")
    k = max(1, round(rate * len(maskable)))
    chosen = rng.choice(len(maskable), size=k, replace=False)
    pool = np.array(vocab.regular_ids(), dtype=np.int64)
    decisions = []
    for idx in sorted(int(c) for c in chosen):
        pos = maskable[idx]
        original = seq.ids[pos]
        u = rng.random()
        if u < ACTION_SPLIT[0]:
            action, replacement = MASK_ACTION, vocab.mask_id
        elif u < ACTION_SPLIT[0] + ACTION_SPLIT[1]:
            action, replacement = RANDOM_ACTION, int(pool[rng.integers(len(pool))])
        else:
            action, replacement = KEEP_ACTION, original
        decisions.append(MaskDecision(pos, action, original, replacement))
    return MaskPlan(decisions)


def apply_mask_plan(seq: TokenizedSequence, plan: MaskPlan) -> TokenizedSequence:
    ids = list(seq.ids)
    for d in plan.decisions:
        ids[d.position] = d.replacement_id
    return replace(seq, ids=ids)


def generate_static_masks(dataset: list[TokenizedSequence], num_masks: int,
                          rng: np.random.Generator, vocab: Vocab,
                          rate: float = MLM_RATE):
    """num_masks fixed masked copies of the dataset.

    Returns a list of copies; each copy is a list of (masked_seq, plan).
    An epoch schedule should cycle through them via static_mask_for_epoch,
    so every plan recurs across epochs.
    """
    if num_masks < 1:
        raise ValueError(f"num_masks must be >= 1, got {num_masks}")
    copies = []
    for _ in range(num_masks):
        copy = []
        for seq in dataset:
            plan = select_mask_positions(seq, rate, rng, vocab)
            copy.append((apply_mask_plan(seq, plan), plan))
        copies.append(copy)
    return copies


def static_mask_for_epoch(copies, epoch: int):
    return copies[epoch % len(copies)]


def dynamic_mask(batch: list[TokenizedSequence], rate: float,
                 rng: np.random.Generator, vocab: Vocab):
    """Fresh plans on every call; returns (masked batch, plans)."""
    plans = [select_mask_positions(seq, rate, rng, vocab) for seq in batch]
    masked = [apply_mask_plan(seq, plan) for seq, plan in zip(batch, plans)]
    return masked, plans


# ---------------------------------------------------------------------------
# sentence-pair sampling
# ---------------------------------------------------------------------------


def _check_corpus(corpus, min_docs: int) -> None:
    if len(corpus) < min_docs:
        raise ValueError(f"corpus needs at least {min_docs} documents, got {len(corpus)}")
    for i, doc in enumerate(corpus):
        if len(doc) < 2:
            raise ValueError(f"document {i} has {len(doc)} segments; need at least 2")


def sample_nsp_pairs(corpus, n: int, rng: np.random.Generator) -> list[SentencePair]:
    """Consecutive segments (IsNext) half the time, else a segment from
    a different document (NotNext)."""
    _check_corpus(corpus, min_docs=2)
    pairs = []
    for _ in range(n):
        doc_idx = int(rng.integers(len(corpus)))
        doc = corpus[doc_idx]
        seg_idx = int(rng.integers(len(doc) - 1))
        first = list(doc[seg_idx])
        if rng.random() < 0.5:
            pairs.append(SentencePair(first, list(doc[seg_idx + 1]), 1, "nsp"))
        else:
            other_idx = int(rng.integers(len(corpus) - 1))
            if other_idx >= doc_idx:
                other_idx += 1
            other = corpus[other_idx]
            second = list(other[int(rng.integers(len(other)))])
            pairs.append(SentencePair(first, second, 0, "nsp"))
    return pairs


def sample_sop_pairs(corpus, n: int, rng: np.random.Generator) -> list[SentencePair]:
    """Consecutive segments in order (positive) or swapped (negative)."""
    _check_corpus(corpus, min_docs=1)
    pairs = []
    for _ in range(n):
        doc = corpus[int(rng.integers(len(corpus)))]
        seg_idx = int(rng.integers(len(doc) - 1))
        a, b = list(doc[seg_idx]), list(doc[seg_idx + 1])
        if rng.random() < 0.5:
            pairs.append(SentencePair(a, b, 1, "sop"))
        else:
            pairs.append(SentencePair(b, a, 0, "sop"))
    return pairs


def load_corpus(path) -> list[list[str]]:
    """Plain text: one segment per line, blank line between documents."""
    docs: list[list[str]] = []
    current: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                if current:
                    docs.append(current)
                    current = []
            else:
                current.append(line)
    if current:
        docs.append(current)
    return docs


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def bce_loss(probs, labels) -> Tensor:
    """Mean binary cross entropy; probabilities clamped away from {0, 1}."""
    p = as_tensor(probs)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"probs shape {p.shape} != labels shape {y.shape}")
    p = clip(p, 1e-12, 1.0 - 1e-12)
    one_minus_p = add(neg(p), constant(np.ones(p.shape)))
    pos = mul(tlog(p), constant(y))
    negt = mul(tlog(one_minus_p), constant(1.0 - y))
    return neg(tmean(add(pos, negt)))


def mlm_loss(logits: Tensor, original_ids) -> Tensor:
    """Mean cross entropy over the masked positions only."""
    targets = np.asarray(original_ids, dtype=np.int64)
    if targets.size == 0:
        raise ValueError("mlm_loss needs at least one masked position")
    n, v = logits.shape
    if targets.shape != (n,):
        raise ValueError(f"expected {n} target ids, got shape {targets.shape}")
    onehot = np.zeros((n, v))
    onehot[np.arange(n), targets] = 1.0
    picked = tsum(mul(log_softmax(logits, axis=-1), constant(onehot)), axis=1)
    return neg(tmean(picked))


@dataclass
class DistillationLosses:
    mlm: Tensor
    cosine: Tensor
    kd: Tensor

    def total(self, weights=(1.0, 1.0, 1.0)) -> Tensor:
        w_mlm, w_cos, w_kd = weights
        return add(add(scale(self.mlm, w_mlm), scale(self.cosine, w_cos)), scale(self.kd, w_kd))


def distillation_losses(student_logits: Tensor, teacher_logits, student_hidden: Tensor,
                        teacher_hidden, original_ids, temperature: float = 2.0) -> DistillationLosses:
    """The triple loss: hard-target cross entropy, hidden-direction
    alignment, and softened-distribution mimicry.

    cosine term: mean over positions of 1 - cos(student, teacher),
    computed as half the squared distance of the unit-normalized rows.
    kd term: mean KL(teacher_soft || student_soft) * T^2, teacher fixed.
    """
    t_logits = np.asarray(teacher_logits, dtype=np.float64)
    t_hidden = np.asarray(teacher_hidden, dtype=np.float64)
    if student_logits.shape != t_logits.shape:
        raise ValueError(f"logit shapes differ: {student_logits.shape} vs {t_logits.shape}")
    if student_hidden.shape != t_hidden.shape:
        raise ValueError(f"hidden shapes differ: {student_hidden.shape} vs {t_hidden.shape}")

    mlm = mlm_loss(student_logits, original_ids)

    u_student = rows_unit(student_hidden)
    norms = np.sqrt((t_hidden * t_hidden).sum(axis=1, keepdims=True))
    u_teacher = t_hidden / norms
    diff = add(u_student, constant(-u_teacher))
    cosine = scale(tmean(tsum(mul(diff, diff), axis=1)), 0.5)

    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    t_soft = np.ascontiguousarray(t_logits / temperature)
    log_p_teacher = kernels.log_softmax_rows(t_soft)
    p_teacher = np.exp(log_p_teacher)
    log_p_student = log_softmax(scale(student_logits, 1.0 / temperature), axis=-1)
    gap = add(constant(log_p_teacher), neg(log_p_student))
    kl_rows = tsum(mul(constant(p_teacher), gap), axis=1)
    kd = scale(tmean(kl_rows), temperature * temperature)

    return DistillationLosses(mlm=mlm, cosine=cosine, kd=kd)
