"""Transformer decoding of the target text from the memory [H_o; s].

The style vector rides along as one extra memory position appended to the
planned data encoding.  Teacher forcing computes the summed token negative
log-likelihood including the end-of-sequence step; greedy search decodes
with an incremental key/value cache that reproduces the tape decoder's
logits exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import nn
from . import tensor as T
from .corpus import BOS_ID, EOS_ID
from .data_encoder import EmbeddingTable
from .errors import ShapeMismatch

DEFAULT_MAX_LEN = 200


@dataclass
class DecoderParams:
    """Causal decoder stack with cross-attention and output projection."""

    layers: list[nn.DecoderLayerParams]
    num_heads: int
    W_Y: T.Tensor  # (|V|, d1)
    b_Y: T.Tensor  # (|V|,)

    @classmethod
    def init(cls, rng, d1, num_layers, num_heads, d_ff, vocab_size):
        if d1 % num_heads != 0:
            raise ShapeMismatch(f"model dim {d1} not divisible by {num_heads} heads")
        return cls(
            layers=[nn.DecoderLayerParams.init(rng, d1, d_ff) for _ in range(num_layers)],
            num_heads=num_heads,
            W_Y=T.parameter(rng.normal(0.0, 1.0 / np.sqrt(d1), (vocab_size, d1))),
            b_Y=T.parameter(np.zeros(vocab_size)),
        )

    @property
    def dim(self) -> int:
        return self.W_Y.data.shape[1]

    def named(self, prefix="decoder"):
        for i, layer in enumerate(self.layers):
            yield from layer.named(f"{prefix}.layer{i}")
        yield f"{prefix}.W_Y", self.W_Y
        yield f"{prefix}.b_Y", self.b_Y


def build_memory(h_o, s):
    """Append the style vector as one extra memory position after H_o."""
    return T.concat([T.as_tensor(h_o), T.as_tensor(s)], axis=0)


def decode_step_logits(memory, prev_ids: Sequence[int], table: EmbeddingTable, params: DecoderParams):
    """Teacher-forced logits (len(prev_ids), |V|) over the whole prefix.

    Causal masking makes position t depend only on prev_ids[<= t]; every
    position attends to the full memory.
    """
    memory = T.as_tensor(memory)
    if memory.data.ndim != 2 or memory.data.shape[1] != params.dim:
        raise ShapeMismatch(f"memory shape {memory.data.shape} vs decoder dim {params.dim}")
    n = len(prev_ids)
    if n == 0:
        raise ShapeMismatch("decoder needs at least the BOS token")
    if n > table.max_positions:
        raise ShapeMismatch(f"{n} positions exceed the {table.max_positions}-entry table")
    x = T.add(
        T.rows(table.tokens, np.asarray(prev_ids, dtype=np.intp)),
        T.rows(table.positions, np.arange(n)),
    )
    h = nn.decoder_forward(x, memory, params.layers, params.num_heads)
    return T.add(T.matmul(h, T.transpose(params.W_Y)), params.b_Y)


def generation_loss(target_ids: Sequence[int], memory, table: EmbeddingTable, params: DecoderParams):
    """Summed negative log-likelihood of the target framed as BOS ... EOS."""
    prev = [BOS_ID] + list(target_ids)
    gold = list(target_ids) + [EOS_ID]
    logits = decode_step_logits(memory, prev, table, params)
    logp = T.log_softmax(logits, axis=-1)
    pick = np.zeros(logits.data.shape)
    pick[np.arange(len(gold)), gold] = 1.0
    return T.mul(T.tsum(T.mul(logp, T.Tensor(pick))), -1.0)


# -- incremental greedy decoding ------------------------------------------------

def _ln_raw(x, norm: nn.NormParams, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * norm.gain.data + norm.bias.data


def _heads(mat, num_heads):
    d = mat.shape[-1]
    dh = d // num_heads
    return [mat[:, h * dh : (h + 1) * dh] for h in range(num_heads)]


class _DecoderCache:
    """Per-layer self-attention K/V plus precomputed cross-attention K/V."""

    def __init__(self, memory: np.ndarray, params: DecoderParams):
        self.params = params
        self.self_k = [[] for _ in params.layers]
        self.self_v = [[] for _ in params.layers]
        self.cross_k = []
        self.cross_v = []
        for layer in params.layers:
            a = layer.cross_attn
            self.cross_k.append(memory @ a.Wk.data + a.bk.data)
            self.cross_v.append(memory @ a.Wv.data + a.bv.data)

    def step(self, x: np.ndarray) -> np.ndarray:
        """Advance one position; x is the (1, d1) embedded input token."""
        p = self.params
        nh = p.num_heads
        dh = x.shape[1] // nh
        scale = 1.0 / np.sqrt(dh)
        for li, layer in enumerate(p.layers):
            a = _ln_raw(x, layer.norm1)
            att = layer.self_attn
            q = a @ att.Wq.data + att.bq.data
            self.self_k[li].append(a @ att.Wk.data + att.bk.data)
            self.self_v[li].append(a @ att.Wv.data + att.bv.data)
            keys = np.concatenate(self.self_k[li], axis=0)
            vals = np.concatenate(self.self_v[li], axis=0)
            ctx = []
            for qh, kh, vh in zip(_heads(q, nh), _heads(keys, nh), _heads(vals, nh)):
                scores = (qh @ kh.T) * scale
                scores -= scores.max(axis=-1, keepdims=True)
                w = np.exp(scores)
                w /= w.sum(axis=-1, keepdims=True)
                ctx.append(w @ vh)
            x = x + np.concatenate(ctx, axis=1) @ att.Wo.data + att.bo.data

            a = _ln_raw(x, layer.norm2)
            att = layer.cross_attn
            q = a @ att.Wq.data + att.bq.data
            ctx = []
            for qh, kh, vh in zip(_heads(q, nh), _heads(self.cross_k[li], nh), _heads(self.cross_v[li], nh)):
                scores = (qh @ kh.T) * scale
                scores -= scores.max(axis=-1, keepdims=True)
                w = np.exp(scores)
                w /= w.sum(axis=-1, keepdims=True)
                ctx.append(w @ vh)
            x = x + np.concatenate(ctx, axis=1) @ att.Wo.data + att.bo.data

            a = _ln_raw(x, layer.norm3)
            hidden = np.maximum(a @ layer.ffn.W1.data + layer.ffn.b1.data, 0.0)
            x = x + hidden @ layer.ffn.W2.data + layer.ffn.b2.data
        return x


def greedy_decode(
    memory,
    table: EmbeddingTable,
    params: DecoderParams,
    max_len: int = DEFAULT_MAX_LEN,
    info: Optional[dict] = None,
) -> list[int]:
    """Greedily decode token ids until EOS or ``max_len`` tokens.

    Ties pick the smallest id.  The returned sequence excludes BOS and
    EOS; hitting ``max_len`` without EOS sets ``info["truncated"]`` when a
    diagnostics dict is supplied.
    """
    if max_len < 1:
        raise ShapeMismatch("max_len must be at least 1")
    mem = memory.data if isinstance(memory, T.Tensor) else np.asarray(memory, dtype=np.float64)
    max_len = min(max_len, table.max_positions - 1)
    cache = _DecoderCache(mem, params)
    tok = table.tokens.data
    pos = table.positions.data
    current = BOS_ID
    out: list[int] = []
    truncated = False
    for t in range(max_len + 1):
        x = tok[current : current + 1] + pos[t : t + 1]
        h = cache.step(x)
        logits = (h @ params.W_Y.data.T + params.b_Y.data)[0]
        nxt = int(np.argmax(logits))
        if nxt == EOS_ID:
            break
        if len(out) == max_len:
            truncated = True
            break
        out.append(nxt)
        current = nxt
    if info is not None:
        info["truncated"] = truncated
    return out
