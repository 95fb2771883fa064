"""Model dimensions, the full parameter tree, checkpoints, and forward glue.

Every trainable array lives in :class:`ModelParams` under a stable dotted
name; checkpoints store the named arrays losslessly (float64 .npz plus a
shape manifest) so a reload reproduces forward passes bit-exactly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import nn
from . import tensor as T
from .corpus import Plan, Triplet, Vocabulary
from .data_encoder import EmbeddingTable, EncoderParams, encode_planned
from .errors import ConfigInvalid, ShapeMismatch
from .generator import DecoderParams, build_memory, greedy_decode
from .logic_graph import GcnParams, LogicGraph, gcn_propagate, init_gcn_params, uniform_graph
from .planner import PlannerParams, decode_plan
from .style_embedder import StyleHeadParams, embed_style, fixed_style_vector


@dataclass(frozen=True)
class ModelDims:
    """Width and depth settings; the desk preset drives all tests."""

    d1: int = 32
    encoder_layers: int = 2
    decoder_layers: int = 2
    num_heads: int = 4
    d_ff: int = 128
    gcn_layers: int = 1
    max_positions: int = 256
    n_styles: int = 2

    def __post_init__(self):
        if self.d1 % self.num_heads != 0:
            raise ConfigInvalid(f"d1={self.d1} not divisible by {self.num_heads} heads")
        if min(self.encoder_layers, self.decoder_layers, self.gcn_layers, self.num_heads) < 1:
            raise ConfigInvalid("layer and head counts must be positive")

    @classmethod
    def desk(cls, **overrides):
        return cls(**overrides)

    @classmethod
    def paper_scale(cls):
        """Full-size configuration; far too heavy for the test suite."""
        return cls(d1=768, encoder_layers=6, decoder_layers=6, num_heads=12, d_ff=3072, gcn_layers=1)


@dataclass(frozen=True)
class AblationFlags:
    """Switches disabling individual modules; all off is the full model."""

    no_style: bool = False            # style vector = plain mean of encoder states
    no_style_constraints: bool = False  # classifier and clustering losses off
    no_planner: bool = False          # bypass planning: original order, no plan loss
    no_gru: bool = False              # same bypass as no_planner
    plan_loss_only: bool = False      # keep the plan loss but encode in original order
    no_graph: bool = False            # skip propagation; planner sees raw pair means
    no_weight: bool = False           # replace graph weights with 1 for i != j
    no_pseudo: bool = False           # pseudo-triplet term off
    fixed_style: bool = False         # constant per-style vector instead of embedding
    learnable_style: bool = False     # learned per-style vector instead of embedding

    def __post_init__(self):
        if self.fixed_style and self.learnable_style:
            raise ConfigInvalid("fixed_style and learnable_style are mutually exclusive")

    @property
    def planner_bypassed(self) -> bool:
        return self.no_planner or self.no_gru

    @property
    def uses_reference_text(self) -> bool:
        return not (self.fixed_style or self.learnable_style)

    def asdict(self):
        return {k: getattr(self, k) for k in (
            "no_style", "no_style_constraints", "no_planner", "no_gru", "plan_loss_only",
            "no_graph", "no_weight", "no_pseudo", "fixed_style", "learnable_style",
        )}


@dataclass
class ModelParams:
    """All trainable tensors with explicit shapes, addressable by name."""

    dims: ModelDims
    vocab_size: int
    embed: EmbeddingTable
    gcn: GcnParams
    planner: PlannerParams
    data_encoder: EncoderParams
    style_encoder: EncoderParams
    style_head: StyleHeadParams
    decoder: DecoderParams
    style_table: Optional[T.Tensor] = None  # (N_s, d1), only for style-vector variants

    def named(self) -> dict[str, T.Tensor]:
        out = dict(self.embed.named("embed"))
        out.update(self.gcn.named("gcn"))
        out.update(self.planner.named("planner"))
        out.update(self.data_encoder.named("data_encoder"))
        out.update(self.style_encoder.named("style_encoder"))
        out.update(self.style_head.named("style_head"))
        out.update(self.decoder.named("decoder"))
        if self.style_table is not None:
            out["style_table"] = self.style_table
        return out

    def parameters(self) -> list[T.Tensor]:
        return list(self.named().values())

    def shape_manifest(self) -> dict[str, list[int]]:
        return {name: list(p.data.shape) for name, p in self.named().items()}


def init_model(
    rng: np.random.Generator,
    dims: ModelDims,
    vocab_size: int,
    with_style_table: bool = False,
) -> ModelParams:
    embed = EmbeddingTable.init(rng, vocab_size, dims.d1, dims.max_positions)
    gcn = init_gcn_params(rng, dims.d1, dims.gcn_layers)
    planner = PlannerParams.init(rng, dims.d1)
    data_enc = EncoderParams.init(rng, dims.d1, dims.encoder_layers, dims.num_heads, dims.d_ff)
    style_enc = EncoderParams.init(rng, dims.d1, dims.encoder_layers, dims.num_heads, dims.d_ff)
    head = StyleHeadParams.init(rng, dims.d1, dims.n_styles)
    decoder = DecoderParams.init(rng, dims.d1, dims.decoder_layers, dims.num_heads, dims.d_ff, vocab_size)
    style_table = None
    if with_style_table:
        table = np.zeros((dims.n_styles, dims.d1))
        for u in range(dims.n_styles):
            table[u] = fixed_style_vector(u, dims.d1)[0]
        style_table = T.parameter(table)
    return ModelParams(
        dims=dims, vocab_size=vocab_size, embed=embed, gcn=gcn, planner=planner,
        data_encoder=data_enc, style_encoder=style_enc, style_head=head,
        decoder=decoder, style_table=style_table,
    )


def save_params(params: ModelParams, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    named = params.named()
    manifest = {
        "dims": params.dims.__dict__,
        "vocab_size": params.vocab_size,
        "has_style_table": params.style_table is not None,
        "shapes": params.shape_manifest(),
    }
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    np.savez(os.path.join(directory, "arrays.npz"), **{k: v.data for k, v in named.items()})


def load_params(directory) -> ModelParams:
    with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    dims = ModelDims(**manifest["dims"])
    params = init_model(
        np.random.default_rng(0), dims, manifest["vocab_size"],
        with_style_table=manifest["has_style_table"],
    )
    arrays = np.load(os.path.join(directory, "arrays.npz"))
    named = params.named()
    if set(named) != set(arrays.files):
        missing = set(named) ^ set(arrays.files)
        raise ConfigInvalid(f"checkpoint arrays do not match the manifest: {sorted(missing)}")
    for name, tensor in named.items():
        stored = arrays[name]
        if stored.shape != tensor.data.shape:
            raise ShapeMismatch(f"{name}: stored {stored.shape} vs expected {tensor.data.shape}")
        tensor.data = stored.astype(np.float64)
    return params


# -- per-instance forward glue ---------------------------------------------------

def pair_node_inits(pairs, vocab: Vocabulary, embed: EmbeddingTable):
    """GCN node initializations: each pair's mean token embedding (K, d1)."""
    means = []
    for p in sorted(pairs, key=lambda p: p.index):
        ids = np.asarray(vocab.encode(p.tokens()), dtype=np.intp)
        means.append(T.tmean(T.rows(embed.tokens, ids), axis=0, keepdims=True))
    return T.concat(means, axis=0) if len(means) > 1 else means[0]


def effective_graph(graph: LogicGraph, flags: AblationFlags) -> LogicGraph:
    if flags.no_weight:
        return uniform_graph(graph.num_nodes)
    return graph


def refined_embeddings(pairs, graph: LogicGraph, vocab, params: ModelParams, flags: AblationFlags):
    """Refined pair embeddings: GCN output, or raw means when ablated."""
    inits = pair_node_inits(pairs, vocab, params.embed)
    if flags.no_graph:
        return inits
    return gcn_propagate(inits, effective_graph(graph, flags), params.gcn)


def identity_plan(pairs) -> Plan:
    return Plan(tuple(sorted(p.index for p in pairs)))


def choose_plan(pairs, refined, params: ModelParams, flags: AblationFlags) -> Plan:
    """The encoding order: greedy predicted plan, or original order when
    planning is bypassed or the plan loss runs without reordering."""
    if flags.planner_bypassed or flags.plan_loss_only:
        return identity_plan(pairs)
    return decode_plan(refined.data if isinstance(refined, T.Tensor) else refined, params.planner)


def style_vector(triplet_style: int, ref_tokens, vocab, params: ModelParams, flags: AblationFlags):
    """Style conditioning vector per the active variant: masked reference
    embedding (default), plain average, fixed one-hot, or learned row."""
    if flags.fixed_style:
        if params.style_table is None:
            raise ConfigInvalid("fixed_style needs a style table")
        return T.Tensor(params.style_table.data[triplet_style : triplet_style + 1].copy()), None
    if flags.learnable_style:
        if params.style_table is None:
            raise ConfigInvalid("learnable_style needs a style table")
        return T.rows(params.style_table, np.asarray([triplet_style], dtype=np.intp)), None
    return embed_style(
        ref_tokens, vocab, params.embed, params.style_encoder, params.style_head,
        use_mask=not flags.no_style,
    )


def generate_for_instance(
    params: ModelParams,
    vocab: Vocabulary,
    pairs,
    graph: LogicGraph,
    ref_tokens,
    style_id: int,
    flags: AblationFlags = AblationFlags(),
    max_len: int = 200,
    info: Optional[dict] = None,
) -> list[str]:
    """Full inference path: plan, encode, embed style, greedy decode to tokens."""
    refined = refined_embeddings(pairs, graph, vocab, params, flags)
    plan = choose_plan(pairs, refined, params, flags)
    h_o, _ = encode_planned(pairs, plan, vocab, params.embed, params.data_encoder)
    s, _ = style_vector(style_id, ref_tokens, vocab, params, flags)
    memory = build_memory(h_o, s)
    ids = greedy_decode(memory, params.embed, params.decoder, max_len=max_len, info=info)
    return vocab.decode(ids)
