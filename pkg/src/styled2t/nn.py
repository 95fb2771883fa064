"""Transformer and GRU building blocks on the autodiff tape.

Blocks are pre-normalization residual: each sublayer reads a layer-normed
copy of the stream and adds its output back, so zeroing a sublayer's
output projection makes it an exact identity.  No terminal norm is
applied after the last block.  All weights right-multiply row vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ShapeMismatch

NEG_INF = -1e9


def linear_init(rng: np.random.Generator, d_in: int, d_out: int) -> T.Tensor:
    return T.parameter(rng.normal(0.0, 1.0 / np.sqrt(d_in), (d_in, d_out)))


@dataclass
class AttentionParams:
    Wq: T.Tensor
    bq: T.Tensor
    Wk: T.Tensor
    bk: T.Tensor
    Wv: T.Tensor
    bv: T.Tensor
    Wo: T.Tensor
    bo: T.Tensor

    @classmethod
    def init(cls, rng, d1):
        return cls(
            Wq=linear_init(rng, d1, d1), bq=T.parameter(np.zeros(d1)),
            Wk=linear_init(rng, d1, d1), bk=T.parameter(np.zeros(d1)),
            Wv=linear_init(rng, d1, d1), bv=T.parameter(np.zeros(d1)),
            Wo=linear_init(rng, d1, d1), bo=T.parameter(np.zeros(d1)),
        )

    def named(self, prefix):
        for field in ("Wq", "bq", "Wk", "bk", "Wv", "bv", "Wo", "bo"):
            yield f"{prefix}.{field}", getattr(self, field)


@dataclass
class NormParams:
    gain: T.Tensor
    bias: T.Tensor

    @classmethod
    def init(cls, d1):
        return cls(T.parameter(np.ones(d1)), T.parameter(np.zeros(d1)))

    def named(self, prefix):
        yield f"{prefix}.gain", self.gain
        yield f"{prefix}.bias", self.bias


@dataclass
class FeedForwardParams:
    W1: T.Tensor
    b1: T.Tensor
    W2: T.Tensor
    b2: T.Tensor

    @classmethod
    def init(cls, rng, d1, d_ff):
        return cls(
            W1=linear_init(rng, d1, d_ff), b1=T.parameter(np.zeros(d_ff)),
            W2=linear_init(rng, d_ff, d1), b2=T.parameter(np.zeros(d1)),
        )

    def named(self, prefix):
        for field in ("W1", "b1", "W2", "b2"):
            yield f"{prefix}.{field}", getattr(self, field)


@dataclass
class EncoderLayerParams:
    norm1: NormParams
    attn: AttentionParams
    norm2: NormParams
    ffn: FeedForwardParams

    @classmethod
    def init(cls, rng, d1, d_ff):
        return cls(NormParams.init(d1), AttentionParams.init(rng, d1), NormParams.init(d1), FeedForwardParams.init(rng, d1, d_ff))

    def named(self, prefix):
        yield from self.norm1.named(f"{prefix}.norm1")
        yield from self.attn.named(f"{prefix}.attn")
        yield from self.norm2.named(f"{prefix}.norm2")
        yield from self.ffn.named(f"{prefix}.ffn")


@dataclass
class DecoderLayerParams:
    norm1: NormParams
    self_attn: AttentionParams
    norm2: NormParams
    cross_attn: AttentionParams
    norm3: NormParams
    ffn: FeedForwardParams

    @classmethod
    def init(cls, rng, d1, d_ff):
        return cls(
            NormParams.init(d1), AttentionParams.init(rng, d1),
            NormParams.init(d1), AttentionParams.init(rng, d1),
            NormParams.init(d1), FeedForwardParams.init(rng, d1, d_ff),
        )

    def named(self, prefix):
        yield from self.norm1.named(f"{prefix}.norm1")
        yield from self.self_attn.named(f"{prefix}.self_attn")
        yield from self.norm2.named(f"{prefix}.norm2")
        yield from self.cross_attn.named(f"{prefix}.cross_attn")
        yield from self.norm3.named(f"{prefix}.norm3")
        yield from self.ffn.named(f"{prefix}.ffn")


def multi_head_attention(query_in, kv_in, params: AttentionParams, num_heads: int, mask=None):
    """Scaled dot-product attention with ``num_heads`` parallel heads.

    ``mask`` is an additive (Tq, Tk) float array: 0 keeps a link, NEG_INF
    severs it.  Returns a (Tq, d1) tensor.
    """
    d1 = params.Wq.data.shape[0]
    if d1 % num_heads != 0:
        raise ShapeMismatch(f"model dim {d1} not divisible by {num_heads} heads")
    dh = d1 // num_heads
    q = T.add(T.matmul(query_in, params.Wq), params.bq)
    k = T.add(T.matmul(kv_in, params.Wk), params.bk)
    v = T.add(T.matmul(kv_in, params.Wv), params.bv)
    outputs = []
    scale = 1.0 / np.sqrt(dh)
    for h in range(num_heads):
        cols = (slice(None), slice(h * dh, (h + 1) * dh))
        qh, kh, vh = T.tslice(q, cols), T.tslice(k, cols), T.tslice(v, cols)
        scores = T.mul(T.matmul(qh, T.transpose(kh)), scale)
        if mask is not None:
            scores = T.add(scores, T.Tensor(mask))
        outputs.append(T.matmul(T.softmax(scores, axis=-1), vh))
    merged = T.concat(outputs, axis=1)
    return T.add(T.matmul(merged, params.Wo), params.bo)


def feed_forward(x, params: FeedForwardParams):
    hidden = T.relu(T.add(T.matmul(x, params.W1), params.b1))
    return T.add(T.matmul(hidden, params.W2), params.b2)


def key_padding_mask(key_real: np.ndarray, num_queries: int) -> np.ndarray:
    """Additive mask hiding padded key positions from every query."""
    mask = np.zeros((num_queries, key_real.shape[0]))
    mask[:, ~np.asarray(key_real, dtype=bool)] = NEG_INF
    return mask


def causal_mask(length: int) -> np.ndarray:
    return np.triu(np.full((length, length), NEG_INF), k=1)


def encoder_forward(x, layers, num_heads: int, key_real=None):
    """Bidirectional self-attention stack; ``key_real`` marks non-pad positions."""
    mask = None
    if key_real is not None:
        mask = key_padding_mask(key_real, x.data.shape[0])
    for layer in layers:
        normed = T.layer_norm(x, layer.norm1.gain, layer.norm1.bias)
        x = T.add(x, multi_head_attention(normed, normed, layer.attn, num_heads, mask))
        normed = T.layer_norm(x, layer.norm2.gain, layer.norm2.bias)
        x = T.add(x, feed_forward(normed, layer.ffn))
    return x


def decoder_forward(x, memory, layers, num_heads: int):
    """Causal self-attention plus cross-attention over ``memory``."""
    mask = causal_mask(x.data.shape[0])
    for layer in layers:
        normed = T.layer_norm(x, layer.norm1.gain, layer.norm1.bias)
        x = T.add(x, multi_head_attention(normed, normed, layer.self_attn, num_heads, mask))
        normed = T.layer_norm(x, layer.norm2.gain, layer.norm2.bias)
        x = T.add(x, multi_head_attention(normed, memory, layer.cross_attn, num_heads))
        normed = T.layer_norm(x, layer.norm3.gain, layer.norm3.bias)
        x = T.add(x, feed_forward(normed, layer.ffn))
    return x


# -- GRU ----------------------------------------------------------------------

@dataclass
class GruParams:
    """Single GRU cell; the step emission equals the updated hidden state."""

    W_ir: T.Tensor
    W_iz: T.Tensor
    W_in: T.Tensor
    W_hr: T.Tensor
    W_hz: T.Tensor
    W_hn: T.Tensor
    b_ir: T.Tensor
    b_iz: T.Tensor
    b_in: T.Tensor
    b_hr: T.Tensor
    b_hz: T.Tensor
    b_hn: T.Tensor

    @classmethod
    def init(cls, rng, d1):
        weights = {f"W_{g}": linear_init(rng, d1, d1) for g in ("ir", "iz", "in", "hr", "hz", "hn")}
        biases = {f"b_{g}": T.parameter(np.zeros(d1)) for g in ("ir", "iz", "in", "hr", "hz", "hn")}
        return cls(**weights, **biases)

    def named(self, prefix):
        for g in ("ir", "iz", "in", "hr", "hz", "hn"):
            yield f"{prefix}.W_{g}", getattr(self, f"W_{g}")
            yield f"{prefix}.b_{g}", getattr(self, f"b_{g}")


def gru_step(x, h, p: GruParams):
    """One GRU update: returns the new hidden state (1, d1)."""
    r = T.sigmoid(T.add(T.add(T.matmul(x, p.W_ir), p.b_ir), T.add(T.matmul(h, p.W_hr), p.b_hr)))
    z = T.sigmoid(T.add(T.add(T.matmul(x, p.W_iz), p.b_iz), T.add(T.matmul(h, p.W_hz), p.b_hz)))
    n = T.tanh(T.add(T.add(T.matmul(x, p.W_in), p.b_in), T.mul(r, T.add(T.matmul(h, p.W_hn), p.b_hn))))
    return T.add(T.mul(T.add(T.Tensor(np.ones_like(z.data)), T.mul(z, -1.0)), n), T.mul(z, h))


def gru_step_raw(x: np.ndarray, h: np.ndarray, p: GruParams) -> np.ndarray:
    """Tape-free mirror of :func:`gru_step` for inference-time planning."""
    sig = lambda a: 1.0 / (1.0 + np.exp(-a))
    r = sig(x @ p.W_ir.data + p.b_ir.data + h @ p.W_hr.data + p.b_hr.data)
    z = sig(x @ p.W_iz.data + p.b_iz.data + h @ p.W_hz.data + p.b_hz.data)
    n = np.tanh(x @ p.W_in.data + p.b_in.data + r * (h @ p.W_hn.data + p.b_hn.data))
    return (1.0 - z) * n + z * h
