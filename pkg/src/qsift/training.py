"""Optimizer, fine-tuning and pretraining loops, model evaluation.

Training is sequential over shuffled mini-batches; everything is seeded,
so two runs with the same config produce identical parameters and
identical history records.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .metrics import MetricsReport, report_from_scores
from .models import (
    Batch,
    Model,
    forward_classify,
    forward_mlm,
    forward_pair_classify,
    mlm_logits_and_states,
)
from .objectives import (
    MLM_RATE,
    bce_loss,
    distillation_losses,
    dynamic_mask,
    generate_static_masks,
    mlm_loss,
    sample_nsp_pairs,
    sample_sop_pairs,
    static_mask_for_epoch,
)
from .tensor import ShapeError, Tensor, backward
from .tokenizer import TokenizedSequence, Vocab, encode_pair_ids


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 16
    epochs: int = 3
    seed: int = 0
    loss: str = "bce"
    clip_norm: float | None = None

    def validate(self) -> None:
        # lr = 0 is allowed (freezes parameters); negative rates are not
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.loss not in ("bce", "mlm", "distill"):
            raise ValueError(f"loss must be bce/mlm/distill, got {self.loss!r}")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict[str, Tensor], beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p.data) for k, p in params.items()},
            v={k: np.zeros_like(p.data) for k, p in params.items()},
            beta1=beta1, beta2=beta2, eps=eps,
        )


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update in place; parameters without a gradient
    this step are left alone (their moments do not decay)."""
    state.t += 1
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.data.shape} for {name}")
        kernels.adam_update(
            p.data.reshape(-1), np.ascontiguousarray(g).reshape(-1),
            state.m[name].reshape(-1), state.v[name].reshape(-1),
            state.t, lr, state.beta1, state.beta2, state.eps,
        )


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> None:
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        factor = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= factor


def _collect_grads(model: Model) -> dict[str, np.ndarray]:
    return {k: t.grad for k, t in model.params.items() if t.grad is not None}


def _optimizer_step(model: Model, state: AdamState, cfg: TrainConfig, loss: Tensor) -> float:
    model.zero_grad()
    backward(loss)
    grads = _collect_grads(model)
    if cfg.clip_norm is not None:
        clip_gradients(grads, cfg.clip_norm)
    adam_step(model.params, grads, state, cfg.learning_rate)
    return loss.item()


def _batch_slices(n: int, batch_size: int, perm: np.ndarray):
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


def train(model: Model, dataset: list[tuple[TokenizedSequence, int]], cfg: TrainConfig,
          val_set: list[tuple[TokenizedSequence, int]] | None = None) -> list[dict]:
    """Fine-tune the binary classifier; returns one record per epoch."""
    cfg.validate()
    if not dataset:
        raise ValueError("training dataset is empty")
    batch = Batch.from_sequences([s for s, _ in dataset])
    labels = np.array([y for _, y in dataset], dtype=np.float64)
    rng = np.random.default_rng(cfg.seed)
    state = AdamState.for_params(model.params)
    history = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(dataset))
        total, seen = 0.0, 0
        for idx in _batch_slices(len(dataset), cfg.batch_size, perm):
            sub = Batch(batch.ids[idx], batch.attention_mask[idx],
                        None if batch.segment_ids is None else batch.segment_ids[idx])
            probs = forward_classify(model, sub, train=True, rng=rng)
            loss = bce_loss(probs, labels[idx])
            total += _optimizer_step(model, state, cfg, loss) * len(idx)
            seen += len(idx)
        record = {"epoch": epoch, "train_loss": total / seen}
        if val_set is not None:
            report = evaluate(model, val_set)
            record.update({f"val_{k}": v for k, v in vars(report).items()})
        history.append(record)
    return history


def predict_scores(model: Model, sequences: list[TokenizedSequence],
                   batch_size: int = 64) -> np.ndarray:
    batch = Batch.from_sequences(sequences)
    out = []
    for start in range(0, len(sequences), batch_size):
        sub = Batch(batch.ids[start : start + batch_size],
                    batch.attention_mask[start : start + batch_size],
                    None if batch.segment_ids is None else batch.segment_ids[start : start + batch_size])
        out.append(forward_classify(model, sub).data)
    return np.concatenate(out)


def evaluate(model: Model, dataset: list[tuple[TokenizedSequence, int]],
             threshold: float = 0.5) -> MetricsReport:
    """Single deterministic forward pass per example (dropout off)."""
    if not dataset:
        raise ValueError("evaluation dataset is empty")
    scores = predict_scores(model, [s for s, _ in dataset])
    labels = np.array([y for _, y in dataset])
    return report_from_scores(scores, labels, threshold)


# ---------------------------------------------------------------------------
# pretraining loops
# ---------------------------------------------------------------------------


def _mlm_batch_loss(model: Model, masked_seqs, plans, train_mode=True, rng=None):
    positions = []
    originals = []
    for i, plan in enumerate(plans):
        for d in plan.decisions:
            positions.append((i, d.position))
            originals.append(d.original_id)
    logits = forward_mlm(model, masked_seqs, positions, train=train_mode, rng=rng)
    return mlm_loss(logits, originals)


def pretrain_mlm(model: Model, dataset: list[TokenizedSequence], vocab: Vocab,
                 cfg: TrainConfig, masking: str = "dynamic", num_masks: int = 4,
                 rate: float = MLM_RATE, pair_objective: str | None = None,
                 corpus=None) -> list[dict]:
    """Masked-token pretraining, optionally joint with a pair task.

    masking="static" precomputes num_masks fixed plans and cycles one per
    epoch; "dynamic" draws fresh plans every time a batch is assembled.
    pair_objective "nsp" or "sop" adds a sentence-pair loss sampled from
    ``corpus`` (token-id documents).
    """
    cfg.validate()
    if not dataset:
        raise ValueError("pretraining dataset is empty")
    if masking not in ("static", "dynamic"):
        raise ValueError(f"masking must be 'static' or 'dynamic', got {masking!r}")
    if pair_objective not in (None, "nsp", "sop"):
        raise ValueError(f"pair_objective must be nsp/sop, got {pair_objective!r}")
    if pair_objective is not None and corpus is None:
        raise ValueError("pair objective needs a corpus of segment documents")
    rng = np.random.default_rng(cfg.seed)
    state = AdamState.for_params(model.params)
    static_copies = (
        generate_static_masks(dataset, num_masks, rng, vocab, rate)
        if masking == "static"
        else None
    )
    sampler = {"nsp": sample_nsp_pairs, "sop": sample_sop_pairs}.get(pair_objective)
    history = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(dataset))
        totals = {"mlm": 0.0, "pair": 0.0}
        seen = 0
        epoch_copy = static_mask_for_epoch(static_copies, epoch) if static_copies else None
        for idx in _batch_slices(len(dataset), cfg.batch_size, perm):
            if epoch_copy is not None:
                masked = [epoch_copy[i][0] for i in idx]
                plans = [epoch_copy[i][1] for i in idx]
            else:
                masked, plans = dynamic_mask([dataset[i] for i in idx], rate, rng, vocab)
            loss = _mlm_batch_loss(model, masked, plans, rng=rng)
            totals["mlm"] += loss.item() * len(idx)
            if sampler is not None:
                pairs = sampler(corpus, len(idx), rng)
                encoded = [encode_pair_ids(p.segment_a, p.segment_b, vocab, model.config.max_len)
                           for p in pairs]
                pair_probs = forward_pair_classify(model, encoded, train=True, rng=rng)
                pair_loss = bce_loss(pair_probs, [float(p.label) for p in pairs])
                totals["pair"] += pair_loss.item() * len(idx)
                loss = loss + pair_loss
            _optimizer_step(model, state, cfg, loss)
            seen += len(idx)
        record = {"epoch": epoch, "mlm_loss": totals["mlm"] / seen}
        if sampler is not None:
            record["pair_loss"] = totals["pair"] / seen
        history.append(record)
    return history


def distill(teacher: Model, student: Model, dataset: list[TokenizedSequence],
            vocab: Vocab, cfg: TrainConfig, rate: float = MLM_RATE,
            temperature: float = 2.0, weights=(1.0, 1.0, 1.0)) -> list[dict]:
    """Train the student with the triple loss against a frozen teacher."""
    cfg.validate()
    if not dataset:
        raise ValueError("distillation dataset is empty")
    if teacher.config.hidden_size != student.config.hidden_size:
        raise ValueError("teacher and student must share hidden_size for state alignment")
    rng = np.random.default_rng(cfg.seed)
    state = AdamState.for_params(student.params)
    history = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(dataset))
        totals = {"mlm": 0.0, "cosine": 0.0, "kd": 0.0, "total": 0.0}
        seen = 0
        for idx in _batch_slices(len(dataset), cfg.batch_size, perm):
            masked, plans = dynamic_mask([dataset[i] for i in idx], rate, rng, vocab)
            positions = [(i, d.position) for i, plan in enumerate(plans) for d in plan.decisions]
            originals = [d.original_id for plan in plans for d in plan.decisions]
            t_logits, t_states = mlm_logits_and_states(teacher, masked, positions)
            s_logits, s_states = mlm_logits_and_states(student, masked, positions,
                                                       train=True, rng=rng)
            losses = distillation_losses(s_logits, t_logits.data, s_states, t_states.data,
                                         originals, temperature)
            loss = losses.total(weights)
            student.zero_grad()
            backward(loss)
            grads = {k: t.grad for k, t in student.params.items() if t.grad is not None}
            if cfg.clip_norm is not None:
                clip_gradients(grads, cfg.clip_norm)
            adam_step(student.params, grads, state, cfg.learning_rate)
            for key, tensor in (("mlm", losses.mlm), ("cosine", losses.cosine),
                                ("kd", losses.kd), ("total", loss)):
                totals[key] += tensor.item() * len(idx)
            seen += len(idx)
        history.append({"epoch": epoch, **{f"{k}_loss": v / seen for k, v in totals.items()}})
    return history
