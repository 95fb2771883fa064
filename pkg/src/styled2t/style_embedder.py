"""Style vector extraction from a reference text via a feature-level mask.

The style encoder contextualizes the reference; a per-position, per-dimension
sigmoid mask gates its states, and the style vector is the mean of the gated
states.  Two constraints shape the space: a classifier head trained with
cross-entropy, and a clustering penalty pulling each embedding to its style
center while pushing it from the other centers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import tensor as T
from .corpus import Vocabulary
from .data_encoder import EmbeddingTable, EncoderParams, embed_sequence
from .errors import EmptyReference, MissingCenter, ShapeMismatch
from . import nn

PROB_FLOOR = 1e-12


@dataclass
class StyleHeadParams:
    W_m: T.Tensor   # (d1, d1) mask map
    b_m: T.Tensor   # (d1,)
    W_s1: T.Tensor  # (d1, d1) classifier hidden
    b_s1: T.Tensor  # (d1,)
    W_s2: T.Tensor  # (d1, N_s) classifier output
    b_s2: T.Tensor  # (N_s,)

    @classmethod
    def init(cls, rng, d1, n_styles):
        return cls(
            W_m=nn.linear_init(rng, d1, d1), b_m=T.parameter(np.zeros(d1)),
            W_s1=nn.linear_init(rng, d1, d1), b_s1=T.parameter(np.zeros(d1)),
            W_s2=nn.linear_init(rng, d1, n_styles), b_s2=T.parameter(np.zeros(n_styles)),
        )

    def named(self, prefix="style_head"):
        for field in ("W_m", "b_m", "W_s1", "b_s1", "W_s2", "b_s2"):
            yield f"{prefix}.{field}", getattr(self, field)


def embed_style(
    ref_tokens: Sequence[str],
    vocab: Vocabulary,
    table: EmbeddingTable,
    encoder: EncoderParams,
    head: StyleHeadParams,
    use_mask: bool = True,
):
    """Style vector s (1, d1) and the mask (Q, d1) from a reference text.

    With ``use_mask`` off the mask is skipped entirely and s is the plain
    mean of the encoder states (the ablated variant); the mask slot of the
    return value is then None.
    """
    if len(ref_tokens) == 0:
        raise EmptyReference("style reference text is empty")
    ids = vocab.encode(ref_tokens)
    x = embed_sequence(ids, table)
    h_x = nn.encoder_forward(x, encoder.layers, encoder.num_heads)
    if not use_mask:
        return T.tmean(h_x, axis=0, keepdims=True), None
    mask = T.sigmoid(T.add(T.matmul(h_x, head.W_m), head.b_m))
    s = T.tmean(T.mul(mask, h_x), axis=0, keepdims=True)
    return s, mask


def classify_style(s, head: StyleHeadParams):
    """Predicted style distribution (1, N_s) from a style vector."""
    s = T.as_tensor(s)
    if s.data.ndim != 2 or s.data.shape[1] != head.W_s1.data.shape[0]:
        raise ShapeMismatch(f"style vector shape {s.data.shape} vs head dim {head.W_s1.data.shape[0]}")
    hidden = T.tanh(T.add(T.matmul(s, head.W_s1), head.b_s1))
    logits = T.add(T.matmul(hidden, head.W_s2), head.b_s2)
    return T.softmax(logits, axis=-1)


def style_cla_loss(probs, one_hot):
    """Cross entropy against a one-hot style label, clamped below 1e-12."""
    probs = T.as_tensor(probs)
    g = np.asarray(one_hot, dtype=np.float64).reshape(1, -1)
    if g.shape != probs.data.shape:
        raise ShapeMismatch(f"label shape {g.shape} vs probs {probs.data.shape}")
    logp = T.log(T.clamp_min(probs, PROB_FLOOR))
    return T.mul(T.tsum(T.mul(logp, T.Tensor(g))), -1.0)


def batch_style_centers(embeddings: Sequence[tuple[int, np.ndarray]]) -> dict[int, np.ndarray]:
    """Mean embedding per style over a batch, detached from the tape."""
    grouped: dict[int, list[np.ndarray]] = {}
    for style, vec in embeddings:
        grouped.setdefault(style, []).append(np.asarray(vec, dtype=np.float64).reshape(-1))
    return {u: np.mean(np.stack(vs), axis=0) for u, vs in grouped.items()}


def style_clu_loss(s, style: int, centers: Mapping[int, np.ndarray], n_styles: int):
    """Pull s toward its own style center, push from every other center.

    Centers are batch means treated as constants; gradients flow through s
    only.  The push term is the mean over the other styles, scaled by
    1/N_s, of exp(-squared distance).
    """
    for v in range(n_styles):
        if v not in centers:
            raise MissingCenter(f"style {v} has no center in this batch")
    s = T.as_tensor(s)
    own = T.add(s, T.Tensor(-np.asarray(centers[style]).reshape(1, -1)))
    loss = T.tsum(T.mul(own, own))
    for v in range(n_styles):
        if v == style:
            continue
        diff = T.add(s, T.Tensor(-np.asarray(centers[v]).reshape(1, -1)))
        dist_sq = T.tsum(T.mul(diff, diff))
        loss = T.add(loss, T.mul(T.exp(T.mul(dist_sq, -1.0)), 1.0 / n_styles))
    return loss


def fixed_style_vector(style: int, d1: int) -> np.ndarray:
    """Constant per-style vector: a one-hot indicator padded to d1."""
    v = np.zeros((1, d1))
    v[0, style % d1] = 1.0
    return v
