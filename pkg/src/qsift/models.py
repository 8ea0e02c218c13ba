"""Encoder classifiers with the BERT-family variant mechanisms.

A Model is a flat registry of named parameter tensors plus the layer
structure referencing them. Cross-layer sharing stores one group of
parameters referenced by every layer, so shared layers move together
under one optimizer step. Factorized embeddings insert an E-to-H
projection after a narrow V-by-E lookup table.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from . import checkpoint
from .layers import (
    EncoderBlockParams,
    MultiHeadParams,
    dropout,
    encoder_block,
    positional_encoding,
    xavier_uniform,
)
from .tensor import (
    Tensor,
    add,
    constant,
    embedding,
    gather_positions,
    layer_norm,
    matmul,
    parameter,
    reshape,
    sigmoid,
    slice_rows,
    tanh,
)
from .tokenizer import TokenizedSequence

SHARING_MODES = ("none", "ffn_only", "attention_only", "all")
POSITIONAL_MODES = ("learned", "sinusoidal")


@dataclass
class ModelConfig:
    num_layers: int
    hidden_size: int
    num_heads: int
    ff_size: int
    vocab_size: int
    max_len: int
    embedding_size: int | None = None  # None means unfactorized (E = H)
    sharing_mode: str = "none"
    use_token_type_embeddings: bool = True
    use_pooler: bool = True
    positional_mode: str = "learned"
    dropout_rate: float = 0.1
    activation: str = "gelu"

    @property
    def effective_embedding_size(self) -> int:
        return self.hidden_size if self.embedding_size is None else self.embedding_size

    def validate(self) -> None:
        problems = []
        if self.num_layers < 1:
            problems.append(f"num_layers must be >= 1, got {self.num_layers}")
        if self.hidden_size < 1 or self.hidden_size % self.num_heads != 0:
            problems.append(
                f"num_heads {self.num_heads} must divide hidden_size {self.hidden_size}"
            )
        if self.effective_embedding_size > self.hidden_size:
            problems.append(
                f"embedding_size {self.effective_embedding_size} must be <= hidden_size {self.hidden_size}"
            )
        if self.effective_embedding_size < 1:
            problems.append(f"embedding_size must be >= 1, got {self.embedding_size}")
        if self.max_len < 3:
            problems.append(f"max_len must be >= 3, got {self.max_len}")
        if self.ff_size < 1:
            problems.append(f"ff_size must be >= 1, got {self.ff_size}")
        if self.vocab_size < 5:
            problems.append(f"vocab_size must cover the five specials, got {self.vocab_size}")
        if self.sharing_mode not in SHARING_MODES:
            problems.append(f"sharing_mode must be one of {SHARING_MODES}, got {self.sharing_mode!r}")
        if self.positional_mode not in POSITIONAL_MODES:
            problems.append(
                f"positional_mode must be one of {POSITIONAL_MODES}, got {self.positional_mode!r}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            problems.append(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if problems:
            raise ValueError("invalid model config: " + "; ".join(problems))


def derive_student_config(teacher: ModelConfig) -> ModelConfig:
    """Halve the layer count and drop token-type embeddings and the pooler."""
    if teacher.num_layers % 2 != 0:
        raise ValueError(f"teacher num_layers must be even, got {teacher.num_layers}")
    return replace(
        teacher,
        num_layers=teacher.num_layers // 2,
        use_token_type_embeddings=False,
        use_pooler=False,
    )


class Model:
    def __init__(self, config: ModelConfig, params: dict[str, Tensor],
                 blocks: list[EncoderBlockParams], sinusoidal_table: np.ndarray | None):
        self.config = config
        self.params = params
        self.blocks = blocks
        self._sinusoidal = sinusoidal_table

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None


def build_model(config: ModelConfig, seed: int = 0) -> Model:
    config.validate()
    rng = np.random.default_rng(seed)
    h, v, e = config.hidden_size, config.vocab_size, config.effective_embedding_size
    params: dict[str, Tensor] = {}

    def reg(name, tensor):
        params[name] = tensor
        return tensor

    reg("embeddings.token", parameter(xavier_uniform(rng, (v, e))))
    if e < h:
        reg("embeddings.projection", parameter(xavier_uniform(rng, (e, h))))
    sinusoidal = None
    if config.positional_mode == "learned":
        reg("embeddings.position", parameter(xavier_uniform(rng, (config.max_len, h))))
    else:
        sinusoidal = positional_encoding(config.max_len, h)
    if config.use_token_type_embeddings:
        reg("embeddings.token_type", parameter(xavier_uniform(rng, (2, h))))
    reg("embeddings.norm_gain", parameter(np.ones(h)))
    reg("embeddings.norm_bias", parameter(np.zeros(h)))

    share_attn = config.sharing_mode in ("attention_only", "all")
    share_ffn = config.sharing_mode in ("ffn_only", "all")

    def make_attn_group(prefix):
        mh = MultiHeadParams(
            d_model=h, num_heads=config.num_heads,
            w_q=reg(f"{prefix}.w_q", parameter(xavier_uniform(rng, (h, h)))),
            w_k=reg(f"{prefix}.w_k", parameter(xavier_uniform(rng, (h, h)))),
            w_v=reg(f"{prefix}.w_v", parameter(xavier_uniform(rng, (h, h)))),
            w_o=reg(f"{prefix}.w_o", parameter(xavier_uniform(rng, (h, h)))),
            b_q=reg(f"{prefix}.b_q", parameter(np.zeros(h))),
            b_k=reg(f"{prefix}.b_k", parameter(np.zeros(h))),
            b_v=reg(f"{prefix}.b_v", parameter(np.zeros(h))),
            b_o=reg(f"{prefix}.b_o", parameter(np.zeros(h))),
        )
        norm_gain = reg(f"{prefix}.norm_gain", parameter(np.ones(h)))
        norm_bias = reg(f"{prefix}.norm_bias", parameter(np.zeros(h)))
        return mh, norm_gain, norm_bias

    def make_ffn_group(prefix):
        return (
            reg(f"{prefix}.w1", parameter(xavier_uniform(rng, (h, config.ff_size)))),
            reg(f"{prefix}.b1", parameter(np.zeros(config.ff_size))),
            reg(f"{prefix}.w2", parameter(xavier_uniform(rng, (config.ff_size, h)))),
            reg(f"{prefix}.b2", parameter(np.zeros(h))),
            reg(f"{prefix}.norm_gain", parameter(np.ones(h))),
            reg(f"{prefix}.norm_bias", parameter(np.zeros(h))),
        )

    attn_groups = (
        [make_attn_group("encoder.shared.attn")]
        if share_attn
        else [make_attn_group(f"encoder.layer{i}.attn") for i in range(config.num_layers)]
    )
    ffn_groups = (
        [make_ffn_group("encoder.shared.ffn")]
        if share_ffn
        else [make_ffn_group(f"encoder.layer{i}.ffn") for i in range(config.num_layers)]
    )

    blocks = []
    for i in range(config.num_layers):
        mh, n1g, n1b = attn_groups[0 if share_attn else i]
        w1, b1, w2, b2, n2g, n2b = ffn_groups[0 if share_ffn else i]
        blocks.append(EncoderBlockParams(
            attn=mh, norm1_gain=n1g, norm1_bias=n1b,
            ff_w1=w1, ff_b1=b1, ff_w2=w2, ff_b2=b2,
            norm2_gain=n2g, norm2_bias=n2b, activation=config.activation,
        ))

    if config.use_pooler:
        reg("pooler.weight", parameter(xavier_uniform(rng, (h, h))))
        reg("pooler.bias", parameter(np.zeros(h)))
    reg("classifier.weight", parameter(xavier_uniform(rng, (h, 1))))
    reg("classifier.bias", parameter(np.zeros(1)))
    reg("pair.weight", parameter(xavier_uniform(rng, (h, 1))))
    reg("pair.bias", parameter(np.zeros(1)))
    reg("mlm.weight", parameter(xavier_uniform(rng, (h, v))))
    reg("mlm.bias", parameter(np.zeros(v)))

    return Model(config, params, blocks, sinusoidal)


def param_count(model: Model, prefix: str | None = None) -> int:
    """Exact deduplicated parameter count, optionally restricted by name prefix."""
    return sum(
        t.data.size for name, t in model.params.items() if prefix is None or name.startswith(prefix)
    )


def expected_param_count(config: ModelConfig) -> int:
    """Closed-form count the builder must match.

    embeddings: V*E (+ E*H if factorized) (+ max_len*H learned positions)
                (+ 2*H token types) + 2*H norm
    per attention group: 4*(H*H + H) + 2*H; per ffn group: 2*H*F + F + H + 2*H
    shared groups count once regardless of depth.
    heads: pooler H*H + H (optional), two binary heads (H + 1 each),
           vocab head H*V + V.
    """
    h, v, e, f = (config.hidden_size, config.vocab_size,
                  config.effective_embedding_size, config.ff_size)
    emb = v * e + (e * h if e < h else 0) + 2 * h
    if config.positional_mode == "learned":
        emb += config.max_len * h
    if config.use_token_type_embeddings:
        emb += 2 * h
    attn_group = 4 * (h * h + h) + 2 * h
    ffn_group = h * f + f + f * h + h + 2 * h
    n_attn = 1 if config.sharing_mode in ("attention_only", "all") else config.num_layers
    n_ffn = 1 if config.sharing_mode in ("ffn_only", "all") else config.num_layers
    heads = (h * h + h if config.use_pooler else 0) + 2 * (h + 1) + h * v + v
    return emb + attn_group * n_attn + ffn_group * n_ffn + heads


# ---------------------------------------------------------------------------
# batching and forward passes
# ---------------------------------------------------------------------------


@dataclass
class Batch:
    ids: np.ndarray            # (B, T) int64
    attention_mask: np.ndarray  # (B, T) int64
    segment_ids: np.ndarray | None

    @classmethod
    def from_sequences(cls, sequences: list[TokenizedSequence]) -> "Batch":
        if not sequences:
            raise ValueError("empty batch")
        lengths = {len(s.ids) for s in sequences}
        if len(lengths) != 1:
            raise ValueError(f"ragged batch: sequence lengths {sorted(lengths)}")
        return cls(
            ids=np.array([s.ids for s in sequences], dtype=np.int64),
            attention_mask=np.array([s.attention_mask for s in sequences], dtype=np.int64),
            segment_ids=np.array([s.segment_ids for s in sequences], dtype=np.int64),
        )


def _as_batch(batch) -> Batch:
    if isinstance(batch, Batch):
        return batch
    return Batch.from_sequences(list(batch))


def encode_hidden(model: Model, batch, train: bool = False,
                  rng: np.random.Generator | None = None) -> tuple[Tensor, Batch]:
    """Run embeddings + encoder stack; returns hidden states (B, T, H)."""
    b = _as_batch(batch)
    cfg = model.config
    t = b.ids.shape[1]
    if t > cfg.max_len:
        raise ValueError(f"sequence length {t} exceeds model max_len {cfg.max_len}")
    p = model.params
    x = embedding(p["embeddings.token"], b.ids)
    if "embeddings.projection" in p:
        x = matmul(x, p["embeddings.projection"])
    if cfg.positional_mode == "learned":
        x = add(x, slice_rows(p["embeddings.position"], t))
    else:
        x = add(x, constant(model._sinusoidal[:t]))
    if cfg.use_token_type_embeddings and b.segment_ids is not None:
        x = add(x, embedding(p["embeddings.token_type"], b.segment_ids))
    x = layer_norm(x, p["embeddings.norm_gain"], p["embeddings.norm_bias"])
    rate = cfg.dropout_rate if train else 0.0
    if rate > 0.0 and rng is not None:
        x = dropout(x, rate, rng)
    key_mask = b.attention_mask[:, None, None, :].astype(np.float64)
    for block in model.blocks:
        x = encoder_block(x, block, key_mask, dropout_rate=rate, rng=rng)
    return x, b


def _cls_state(model: Model, hidden: Tensor, use_pooler: bool) -> Tensor:
    b = hidden.shape[0]
    cls = gather_positions(hidden, np.arange(b), np.zeros(b, dtype=np.int64))
    if use_pooler and "pooler.weight" in model.params:
        cls = tanh(add(matmul(cls, model.params["pooler.weight"]), model.params["pooler.bias"]))
    return cls


def forward_classify(model: Model, batch, train: bool = False,
                     rng: np.random.Generator | None = None) -> Tensor:
    """Per-example insincerity probability in (0, 1), shape (B,)."""
    hidden, _ = encode_hidden(model, batch, train, rng)
    cls = _cls_state(model, hidden, model.config.use_pooler)
    logit = add(matmul(cls, model.params["classifier.weight"]), model.params["classifier.bias"])
    return reshape(sigmoid(logit), (hidden.shape[0],))


def mlm_logits_and_states(model: Model, batch, mask_positions, train: bool = False,
                          rng: np.random.Generator | None = None) -> tuple[Tensor, Tensor]:
    """Vocabulary logits at the masked positions plus the hidden states
    they were read from: shapes (num_masked, V) and (num_masked, H)."""
    b = _as_batch(batch)
    if len(mask_positions) == 0:
        raise ValueError("forward_mlm needs at least one masked position")
    rows = np.array([pos[0] for pos in mask_positions], dtype=np.int64)
    cols = np.array([pos[1] for pos in mask_positions], dtype=np.int64)
    n_rows, n_cols = b.ids.shape
    if rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols:
        raise ValueError(f"mask position out of range for batch shape {b.ids.shape}")
    if not np.all(b.attention_mask[rows, cols] == 1):
        raise ValueError("mask positions must point at real (non-padding) tokens")
    hidden, _ = encode_hidden(model, b, train, rng)
    states = gather_positions(hidden, rows, cols)
    logits = add(matmul(states, model.params["mlm.weight"]), model.params["mlm.bias"])
    return logits, states


def forward_mlm(model: Model, batch, mask_positions, train: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
    """Vocabulary logits at the masked positions, shape (num_masked, V)."""
    return mlm_logits_and_states(model, batch, mask_positions, train, rng)[0]


def forward_pair_classify(model: Model, batch, train: bool = False,
                          rng: np.random.Generator | None = None) -> Tensor:
    """Probability that the pair is positively ordered (IsNext / in-order)."""
    b = _as_batch(batch)
    if b.segment_ids is None:
        raise ValueError("pair classification needs segment ids")
    hidden, _ = encode_hidden(model, b, train, rng)
    cls = _cls_state(model, hidden, model.config.use_pooler)
    logit = add(matmul(cls, model.params["pair.weight"]), model.params["pair.bias"])
    return reshape(sigmoid(logit), (hidden.shape[0],))


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def save_model(path, model: Model) -> None:
    checkpoint.save_params(path, {k: t.data for k, t in model.params.items()})
    cfg = asdict(model.config)
    cfg["embedding_size"] = model.config.effective_embedding_size
    checkpoint.write_config_kv(f"{path}.config", cfg)


def load_model(path) -> Model:
    cfg_map = checkpoint.read_config_kv(f"{path}.config")
    config = ModelConfig(**cfg_map)
    model = build_model(config, seed=0)
    arrays = checkpoint.load_params(path)
    missing = sorted(set(model.params) - set(arrays))
    unexpected = sorted(set(arrays) - set(model.params))
    if missing or unexpected:
        raise ValueError(f"checkpoint mismatch: missing {missing}, unexpected {unexpected}")
    for name, tensor in model.params.items():
        if arrays[name].shape != tensor.data.shape:
            raise ValueError(
                f"checkpoint shape mismatch for {name}: {arrays[name].shape} vs {tensor.data.shape}"
            )
        tensor.data = np.ascontiguousarray(arrays[name], dtype=np.float64)
    return model
