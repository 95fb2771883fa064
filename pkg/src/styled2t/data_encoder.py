"""Token embedding and plan-ordered transformer encoding of the input pairs.

Each pair is laid out as ``attr tokens, <sep>, value tokens`` and embedded
through a trainable token table.  Positional embeddings are assigned to
the concatenated sequence after the pairs are arranged in plan order, so
a different plan puts tokens at different positions and changes the
encoding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nn
from . import tensor as T
from .corpus import AttributeValuePair, Plan, Vocabulary
from .errors import ShapeMismatch


@dataclass
class EmbeddingTable:
    """Trainable token and learned positional embeddings."""

    tokens: T.Tensor     # (|V|, d1)
    positions: T.Tensor  # (max_positions, d1)

    @classmethod
    def init(cls, rng: np.random.Generator, vocab_size: int, d1: int, max_positions: int, std=0.02):
        return cls(
            tokens=T.parameter(rng.normal(0.0, std, (vocab_size, d1))),
            positions=T.parameter(rng.normal(0.0, std, (max_positions, d1))),
        )

    @property
    def dim(self) -> int:
        return self.tokens.data.shape[1]

    @property
    def max_positions(self) -> int:
        return self.positions.data.shape[0]

    def named(self, prefix="embed"):
        yield f"{prefix}.tokens", self.tokens
        yield f"{prefix}.positions", self.positions


@dataclass
class EncoderParams:
    """A transformer encoder stack (separate instances encode data and style)."""

    layers: list[nn.EncoderLayerParams]
    num_heads: int

    @classmethod
    def init(cls, rng, d1, num_layers, num_heads, d_ff):
        if num_layers < 1 or num_heads < 1:
            raise ShapeMismatch("need at least one layer and one head")
        if d1 % num_heads != 0:
            raise ShapeMismatch(f"model dim {d1} not divisible by {num_heads} heads")
        return cls([nn.EncoderLayerParams.init(rng, d1, d_ff) for _ in range(num_layers)], num_heads)

    def named(self, prefix):
        for i, layer in enumerate(self.layers):
            yield from layer.named(f"{prefix}.layer{i}")


def embed_sequence(token_ids: Sequence[int], table: EmbeddingTable, position_offset: int = 0):
    """Token embeddings plus positional embeddings for a id sequence."""
    n = len(token_ids)
    if position_offset + n > table.max_positions:
        raise ShapeMismatch(
            f"sequence of {n} tokens at offset {position_offset} exceeds "
            f"{table.max_positions} learned positions"
        )
    tok = T.rows(table.tokens, np.asarray(token_ids, dtype=np.intp))
    pos = T.rows(table.positions, np.arange(position_offset, position_offset + n))
    return T.add(tok, pos)


def embed_pairs(pairs: Sequence[AttributeValuePair], vocab: Vocabulary, table: EmbeddingTable):
    """Per-pair token embedding matrices (t_k, d1), ordered by pair index.

    Unknown tokens map to the UNK row; positions are not added here but at
    encoding time, once the plan fixes where each pair's tokens sit.
    """
    out = []
    for p in sorted(pairs, key=lambda p: p.index):
        ids = vocab.encode(p.tokens())
        out.append(T.rows(table.tokens, np.asarray(ids, dtype=np.intp)))
    return out


def encode_planned(
    pairs: Sequence[AttributeValuePair],
    plan: Plan,
    vocab: Vocabulary,
    table: EmbeddingTable,
    params: EncoderParams,
):
    """Encode pair tokens concatenated in plan order.

    Returns the contextualized (T, d1) tensor with T the total token count
    of the planned pairs, plus the boolean attention mask (all-real here;
    padded batching would clear trailing entries).
    """
    by_index = {p.index: p for p in pairs}
    pieces = []
    for m in plan.order:
        if m not in by_index:
            raise ShapeMismatch(f"plan index {m} not among pair indices")
        pieces.append(T.rows(table.tokens, np.asarray(vocab.encode(by_index[m].tokens()), dtype=np.intp)))
    seq = T.concat(pieces, axis=0) if len(pieces) > 1 else pieces[0]
    total = seq.data.shape[0]
    if seq.data.shape[1] != table.dim:
        raise ShapeMismatch("pair embedding width differs from table dim")
    if total > table.max_positions:
        raise ShapeMismatch(f"{total} tokens exceed {table.max_positions} learned positions")
    x = T.add(seq, T.rows(table.positions, np.arange(total)))
    mask = np.ones(total, dtype=bool)
    h = nn.encoder_forward(x, params.layers, params.num_heads, key_real=mask)
    return h, mask


def encode_padded(x, real: np.ndarray, params: EncoderParams):
    """Encoder pass over an already-embedded sequence with explicit pad mask."""
    return nn.encoder_forward(x, params.layers, params.num_heads, key_real=real)
