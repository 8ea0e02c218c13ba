"""Neural building blocks: recurrent cells and transformer encoder sublayers.

All functions take and return Tensors and record onto the autodiff graph.
Batch convention is rows: a step input is (batch, features), weight
matrices multiply as ``x @ W.T`` so their stored shapes read
(output_size, input_size).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import (
    ACTIVATIONS,
    ShapeError,
    Tensor,
    add,
    concat,
    constant,
    layer_norm,
    matmul,
    mul,
    parameter,
    reshape,
    scale,
    sigmoid,
    softmax,
    swap_last2,
    tanh,
    transpose,
)

MASK_ADDITIVE = -1e9  # finite stand-in for -inf; keeps gradients NaN-free


def xavier_uniform(rng: np.random.Generator, shape) -> np.ndarray:
    """Zero-mean uniform with limit sqrt(6 / (fan_in + fan_out))."""
    fan_in, fan_out = shape[-2], shape[-1]
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# ---------------------------------------------------------------------------
# recurrent cells
# ---------------------------------------------------------------------------


@dataclass
class RnnCellParams:
    """Shared-across-time coefficients of the vanilla recurrent cell."""

    w_aa: Tensor  # (hidden, hidden)
    w_ax: Tensor  # (hidden, input)
    w_ya: Tensor  # (output, hidden)
    b_a: Tensor
    b_y: Tensor
    g1: str = "tanh"
    g2: str = "sigmoid"


def init_rnn_cell(rng, input_size, hidden_size, output_size, g1="tanh", g2="sigmoid") -> RnnCellParams:
    return RnnCellParams(
        w_aa=parameter(xavier_uniform(rng, (hidden_size, hidden_size))),
        w_ax=parameter(xavier_uniform(rng, (hidden_size, input_size))),
        w_ya=parameter(xavier_uniform(rng, (output_size, hidden_size))),
        b_a=parameter(np.zeros(hidden_size)),
        b_y=parameter(np.zeros(output_size)),
        g1=g1,
        g2=g2,
    )


def rnn_cell(x_t: Tensor, a_prev: Tensor, p: RnnCellParams) -> tuple[Tensor, Tensor]:
    """a_t = g1(W_aa a_prev + W_ax x_t + b_a); y_t = g2(W_ya a_t + b_y)."""
    if x_t.shape[-1] != p.w_ax.shape[1] or a_prev.shape[-1] != p.w_aa.shape[1]:
        raise ShapeError(
            f"rnn_cell got x {x_t.shape}, a_prev {a_prev.shape} for weights "
            f"{p.w_ax.shape}, {p.w_aa.shape}"
        )
    pre_a = add(add(matmul(a_prev, transpose(p.w_aa)), matmul(x_t, transpose(p.w_ax))), p.b_a)
    a_t = ACTIVATIONS[p.g1](pre_a)
    y_t = ACTIVATIONS[p.g2](add(matmul(a_t, transpose(p.w_ya)), p.b_y))
    return a_t, y_t


@dataclass
class LstmCellParams:
    """Candidate and gate weights; every W acts on the concatenation [a, x].

    output_tanh toggles the conventional a = gate_o * tanh(c) form; the
    default applies the output gate to the raw cell state.
    """

    w_c: Tensor  # (hidden, hidden + input)
    b_c: Tensor
    w_u: Tensor
    b_u: Tensor
    w_r: Tensor
    b_r: Tensor
    w_f: Tensor
    b_f: Tensor
    w_o: Tensor
    b_o: Tensor
    output_tanh: bool = False


def init_lstm_cell(rng, input_size, hidden_size, output_tanh=False) -> LstmCellParams:
    def w():
        return parameter(xavier_uniform(rng, (hidden_size, hidden_size + input_size)))

    def b():
        return parameter(np.zeros(hidden_size))

    return LstmCellParams(
        w_c=w(), b_c=b(), w_u=w(), b_u=b(), w_r=w(), b_r=b(), w_f=w(), b_f=b(),
        w_o=w(), b_o=b(), output_tanh=output_tanh,
    )


def lstm_cell(x_t: Tensor, a_prev: Tensor, c_prev: Tensor, p: LstmCellParams) -> tuple[Tensor, Tensor]:
    """Update/relevance/forget/output-gated cell.

    candidate = tanh(W_c [gate_r * a_prev, x] + b_c)
    c_t = gate_u * candidate + gate_f * c_prev
    a_t = gate_o * c_t        (or gate_o * tanh(c_t) with output_tanh)
    """
    hidden = p.w_c.shape[0]
    if a_prev.shape[-1] != hidden or c_prev.shape[-1] != hidden:
        raise ShapeError(f"lstm_cell states must have width {hidden}, got {a_prev.shape} / {c_prev.shape}")
    if a_prev.shape[-1] + x_t.shape[-1] != p.w_c.shape[1]:
        raise ShapeError(f"lstm_cell input {x_t.shape} does not fit weights {p.w_c.shape}")
    ax = concat([a_prev, x_t], axis=1)

    def gate(w, b):
        return sigmoid(add(matmul(ax, transpose(w)), b))

    gate_u = gate(p.w_u, p.b_u)
    gate_r = gate(p.w_r, p.b_r)
    gate_f = gate(p.w_f, p.b_f)
    gate_o = gate(p.w_o, p.b_o)
    gated = concat([mul(gate_r, a_prev), x_t], axis=1)
    candidate = tanh(add(matmul(gated, transpose(p.w_c)), p.b_c))
    c_t = add(mul(gate_u, candidate), mul(gate_f, c_prev))
    a_t = mul(gate_o, tanh(c_t) if p.output_tanh else c_t)
    return a_t, c_t


@dataclass
class GruCellParams:
    w_z: Tensor  # update gate, (hidden, hidden + input)
    b_z: Tensor
    w_r: Tensor  # reset gate
    b_r: Tensor
    w_h: Tensor  # candidate
    b_h: Tensor


def init_gru_cell(rng, input_size, hidden_size) -> GruCellParams:
    def w():
        return parameter(xavier_uniform(rng, (hidden_size, hidden_size + input_size)))

    def b():
        return parameter(np.zeros(hidden_size))

    return GruCellParams(w_z=w(), b_z=b(), w_r=w(), b_r=b(), w_h=w(), b_h=b())


def gru_cell(x_t: Tensor, a_prev: Tensor, p: GruCellParams) -> Tensor:
    """Two-gate cell: a_t = z * a_prev + (1 - z) * candidate."""
    if a_prev.shape[-1] + x_t.shape[-1] != p.w_h.shape[1]:
        raise ShapeError(f"gru_cell input {x_t.shape} does not fit weights {p.w_h.shape}")
    ax = concat([a_prev, x_t], axis=1)
    z = sigmoid(add(matmul(ax, transpose(p.w_z)), p.b_z))
    r = sigmoid(add(matmul(ax, transpose(p.w_r)), p.b_r))
    gated = concat([mul(r, a_prev), x_t], axis=1)
    candidate = tanh(add(matmul(gated, transpose(p.w_h)), p.b_h))
    one_minus_z = add(scale(z, -1.0), constant(np.ones(z.shape)))
    return add(mul(z, a_prev), mul(one_minus_z, candidate))


def bilstm_encode(x_seq: list[Tensor], fwd: LstmCellParams, bwd: LstmCellParams) -> list[Tensor]:
    """Concatenate forward and backward hidden states per step: (B, 2*hidden)."""
    if not x_seq:
        raise ValueError("bilstm_encode needs a nonempty sequence")
    batch = x_seq[0].shape[0]
    hidden = fwd.w_c.shape[0]

    def run(params, seq):
        a = constant(np.zeros((batch, hidden)))
        c = constant(np.zeros((batch, hidden)))
        states = []
        for x_t in seq:
            a, c = lstm_cell(x_t, a, c, params)
            states.append(a)
        return states

    fwd_states = run(fwd, x_seq)
    bwd_states = run(bwd, list(reversed(x_seq)))[::-1]
    return [concat([f, b], axis=1) for f, b in zip(fwd_states, bwd_states)]


# ---------------------------------------------------------------------------
# attention and transformer sublayers
# ---------------------------------------------------------------------------


def attention(q: Tensor, k: Tensor, v: Tensor, mask=None) -> Tensor:
    """Scaled dot-product attention: softmax(Q K^T / sqrt(d_k)) V.

    mask marks key positions (1 = attend, 0 = ignore) and must be
    broadcastable to the score shape (..., queries, keys); masked
    positions get a -1e9 additive before the softmax.
    """
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"query/key widths differ: {q.shape} vs {k.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"key/value counts differ: {k.shape} vs {v.shape}")
    scores = scale(matmul(q, swap_last2(k)), 1.0 / math.sqrt(q.shape[-1]))
    if mask is not None:
        additive = (np.asarray(mask, dtype=np.float64) - 1.0) * -MASK_ADDITIVE
        additive = np.broadcast_to(additive, scores.shape)
        scores = add(scores, constant(additive.copy()))
    weights = softmax(scores, axis=-1)
    return matmul(weights, v)


@dataclass
class MultiHeadParams:
    """Per-model-dim projections; heads are carved out by reshaping.

    head count must divide the model width; each head then works in
    d_model / num_heads dimensions for queries, keys, and values alike.
    """

    d_model: int
    num_heads: int
    w_q: Tensor  # all projection matrices are (d_model, d_model)
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    b_q: Tensor
    b_k: Tensor
    b_v: Tensor
    b_o: Tensor

    def __post_init__(self):
        if self.d_model % self.num_heads != 0:
            raise ValueError(f"num_heads {self.num_heads} must divide d_model {self.d_model}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.num_heads


def init_multi_head(rng, d_model: int, num_heads: int) -> MultiHeadParams:
    def w():
        return parameter(xavier_uniform(rng, (d_model, d_model)))

    def b():
        return parameter(np.zeros(d_model))

    return MultiHeadParams(
        d_model=d_model, num_heads=num_heads,
        w_q=w(), w_k=w(), w_v=w(), w_o=w(), b_q=b(), b_k=b(), b_v=b(), b_o=b(),
    )


def multi_head_attention(x: Tensor, p: MultiHeadParams, mask=None) -> Tensor:
    """Self-attention over (B, T, d_model) or (T, d_model); shape-preserving."""
    squeeze = x.ndim == 2
    if squeeze:
        x = reshape(x, (1,) + x.shape)
    if x.shape[-1] != p.d_model:
        raise ShapeError(f"input width {x.shape[-1]} != d_model {p.d_model}")
    b, t, d = x.shape
    h, dk = p.num_heads, p.head_dim

    def project(w, bias):
        y = add(matmul(x, w), bias)
        return transpose(reshape(y, (b, t, h, dk)), (0, 2, 1, 3))

    qh = project(p.w_q, p.b_q)
    kh = project(p.w_k, p.b_k)
    vh = project(p.w_v, p.b_v)
    ctx = attention(qh, kh, vh, mask)
    merged = reshape(transpose(ctx, (0, 2, 1, 3)), (b, t, d))
    out = add(matmul(merged, p.w_o), p.b_o)
    return reshape(out, (t, d)) if squeeze else out


def positional_encoding(max_len: int, d_model: int) -> np.ndarray:
    """Sinusoidal table (max_len, d_model): sin on even columns, cos on odd."""
    if d_model % 2 != 0:
        raise ValueError(f"d_model must be even for sinusoidal encoding, got {d_model}")
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    freq = np.power(10000.0, np.arange(0, d_model, 2, dtype=np.float64) / d_model)
    table = np.empty((max_len, d_model))
    table[:, 0::2] = np.sin(pos / freq)
    table[:, 1::2] = np.cos(pos / freq)
    return table


def feed_forward(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor,
                 activation: str = "gelu") -> Tensor:
    """Position-wise act(x @ w1 + b1) @ w2 + b2; w1 (d_in, d_ff), w2 (d_ff, d_out)."""
    inner = ACTIVATIONS[activation](add(matmul(x, w1), b1))
    return add(matmul(inner, w2), b2)


@dataclass
class EncoderBlockParams:
    attn: MultiHeadParams
    norm1_gain: Tensor
    norm1_bias: Tensor
    ff_w1: Tensor  # (d_model, ff_size)
    ff_b1: Tensor
    ff_w2: Tensor  # (ff_size, d_model)
    ff_b2: Tensor
    norm2_gain: Tensor
    norm2_bias: Tensor
    activation: str = "gelu"
    norm_eps: float = 1e-12


def init_encoder_block(rng, d_model, num_heads, ff_size, activation="gelu") -> EncoderBlockParams:
    return EncoderBlockParams(
        attn=init_multi_head(rng, d_model, num_heads),
        norm1_gain=parameter(np.ones(d_model)),
        norm1_bias=parameter(np.zeros(d_model)),
        ff_w1=parameter(xavier_uniform(rng, (d_model, ff_size))),
        ff_b1=parameter(np.zeros(ff_size)),
        ff_w2=parameter(xavier_uniform(rng, (ff_size, d_model))),
        ff_b2=parameter(np.zeros(d_model)),
        norm2_gain=parameter(np.ones(d_model)),
        norm2_bias=parameter(np.zeros(d_model)),
        activation=activation,
    )


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; call only in training mode."""
    if rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, constant(keep))


def encoder_block(x: Tensor, p: EncoderBlockParams, mask=None,
                  dropout_rate: float = 0.0, rng: np.random.Generator | None = None) -> Tensor:
    """Post-norm transformer layer: norm(x + attn(x)), then norm(h + ffn(h))."""
    attn_out = multi_head_attention(x, p.attn, mask)
    if dropout_rate > 0.0 and rng is not None:
        attn_out = dropout(attn_out, dropout_rate, rng)
    h = layer_norm(add(x, attn_out), p.norm1_gain, p.norm1_bias, p.norm_eps)
    ff_out = feed_forward(h, p.ff_w1, p.ff_b1, p.ff_w2, p.ff_b2, p.activation)
    if dropout_rate > 0.0 and rng is not None:
        ff_out = dropout(ff_out, dropout_rate, rng)
    return layer_norm(add(h, ff_out), p.norm2_gain, p.norm2_bias, p.norm_eps)
