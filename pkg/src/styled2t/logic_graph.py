"""Per-instance logic graphs from corpus rank statistics, and GCN refinement.

Edge weight from pair i to pair j accumulates, over every corpus text in
which both values appear, the reciprocal of their rank gap:

    w[i][j] = sum over texts of 1/(r_j - r_i)   whenever r_j > r_i > 0.

Closer mentions make stronger edges.  Propagation refines each pair's
embedding with a neighbor average normalized by the node's outgoing mass,
a separate self term, and a tanh nonlinearity; all weight matrices
right-multiply row vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import tensor as T
from .corpus import AttributeValuePair, first_occurrence
from .errors import ShapeMismatch


@dataclass
class LogicGraph:
    """Weighted directed graph over an instance's K attribute-value pairs."""

    weights: np.ndarray  # (K, K) float64, non-negative, zero diagonal

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ShapeMismatch(f"graph weights must be square, got {w.shape}")
        if (w < 0).any():
            raise ValueError("graph weights must be non-negative")
        if np.diagonal(w).any():
            raise ValueError("graph diagonal must be zero")
        self.weights = w

    @property
    def num_nodes(self) -> int:
        return self.weights.shape[0]


def uniform_graph(num_nodes: int) -> LogicGraph:
    """All off-diagonal weights 1: the graph used when weighting is ablated."""
    w = np.ones((num_nodes, num_nodes)) - np.eye(num_nodes)
    return LogicGraph(w)


def build_logic_graph(
    pairs: Sequence[AttributeValuePair],
    corpus_ranks: Iterable[Sequence[int]],
) -> LogicGraph:
    """Accumulate edge weights from per-text rank vectors of this instance's pairs.

    Each rank vector lists, by ascending pair index, the mention rank of every
    pair in one corpus text (0 = absent).  Texts mentioning fewer than two of
    the pairs contribute nothing; an empty corpus gives an all-zero graph.
    """
    k = len(pairs)
    w = np.zeros((k, k))
    for ranks in corpus_ranks:
        if len(ranks) != k:
            raise ShapeMismatch(f"rank vector has {len(ranks)} entries for {k} pairs")
        for i in range(k):
            ri = ranks[i]
            if ri <= 0:
                continue
            for j in range(k):
                rj = ranks[j]
                if rj > ri:
                    w[i, j] += 1.0 / (rj - ri)
    return LogicGraph(w)


def corpus_rank_vectors(
    pairs: Sequence[AttributeValuePair],
    targets: Iterable[Sequence[str]],
) -> list[tuple[int, ...]]:
    """Rank vectors of ``pairs`` against every corpus text, by direct scan."""
    from .corpus import rank_pairs_in_text

    return [rank_pairs_in_text(pairs, text) for text in targets]


class RankIndex:
    """Value-occurrence index over corpus targets for fast graph building.

    Scans the corpus once per distinct value and caches where it first
    occurs, so building graphs for thousands of instances stays cheap.
    """

    def __init__(self, targets: Sequence[Sequence[str]]):
        self.targets = [tuple(t) for t in targets]
        self._occurrences: dict[tuple[str, ...], dict[int, int]] = {}

    def occurrences(self, value: tuple[str, ...]) -> dict[int, int]:
        hit = self._occurrences.get(value)
        if hit is None:
            hit = {}
            for text_id, text in enumerate(self.targets):
                pos = first_occurrence(text, value)
                if pos is not None:
                    hit[text_id] = pos
            self._occurrences[value] = hit
        return hit

    def rank_vectors(self, pairs: Sequence[AttributeValuePair]) -> list[tuple[int, ...]]:
        """Rank vectors for every text mentioning at least two of the pairs."""
        ordered = sorted(pairs, key=lambda p: p.index)
        occ = [self.occurrences(tuple(p.value)) for p in ordered]
        text_hits: dict[int, list[tuple[int, int]]] = {}
        for slot, hits in enumerate(occ):
            for text_id, pos in hits.items():
                text_hits.setdefault(text_id, []).append((pos, slot))
        vectors = []
        for text_id in sorted(text_hits):
            hits = text_hits[text_id]
            if len(hits) < 2:
                continue
            ranks = [0] * len(ordered)
            for rank, (_, slot) in enumerate(sorted(hits), start=1):
                ranks[slot] = rank
            vectors.append(tuple(ranks))
        return vectors

    def graph(self, pairs: Sequence[AttributeValuePair]) -> LogicGraph:
        return build_logic_graph(pairs, self.rank_vectors(pairs))


# -- propagation --------------------------------------------------------------

@dataclass
class GcnLayerParams:
    W_a: T.Tensor
    W_b: T.Tensor
    W_c: T.Tensor
    b_c: T.Tensor


@dataclass
class GcnParams:
    """Stack of propagation layers over d1-dimensional node states."""

    layers: list[GcnLayerParams]

    @property
    def dim(self) -> int:
        return self.layers[0].W_a.data.shape[0]

    def named(self, prefix="gcn"):
        for l, layer in enumerate(self.layers):
            yield f"{prefix}.l{l}.W_a", layer.W_a
            yield f"{prefix}.l{l}.W_b", layer.W_b
            yield f"{prefix}.l{l}.W_c", layer.W_c
            yield f"{prefix}.l{l}.b_c", layer.b_c


def init_gcn_params(rng: np.random.Generator, d1: int, num_layers: int, scale=None) -> GcnParams:
    scale = scale if scale is not None else 1.0 / np.sqrt(d1)
    layers = []
    for _ in range(num_layers):
        layers.append(
            GcnLayerParams(
                W_a=T.parameter(rng.normal(0.0, scale, (d1, d1))),
                W_b=T.parameter(rng.normal(0.0, scale, (d1, d1))),
                W_c=T.parameter(rng.normal(0.0, scale, (d1, d1))),
                b_c=T.parameter(np.zeros(d1)),
            )
        )
    return GcnParams(layers)


def normalized_adjacency(graph: LogicGraph) -> np.ndarray:
    """Row-normalized weights: entry (i, j) is e_ij / e_i*; zero rows stay zero."""
    w = graph.weights
    row_sums = w.sum(axis=1, keepdims=True)
    out = np.zeros_like(w)
    np.divide(w, row_sums, out=out, where=row_sums > 0)
    return out


def gcn_propagate(node_inits, graph: LogicGraph, params: GcnParams) -> T.Tensor:
    """Refine node embeddings by logical-context propagation.

    Per layer, node i aggregates its out-neighbors j (e_ij > 0) weighted by
    e_ij / e_i*, adds a separate self term, and applies a tanh-activated
    output transform.  Nodes with no neighbors use a zero aggregation.
    """
    z = T.as_tensor(node_inits)
    if z.data.ndim != 2 or z.data.shape[0] != graph.num_nodes:
        raise ShapeMismatch(f"node_inits shape {z.data.shape} vs {graph.num_nodes} nodes")
    if z.data.shape[1] != params.dim:
        raise ShapeMismatch(f"node width {z.data.shape[1]} != parameter dim {params.dim}")
    adj = T.Tensor(normalized_adjacency(graph))
    for layer in params.layers:
        neighbor = T.matmul(adj, T.matmul(z, layer.W_a))
        inner = T.add(neighbor, T.matmul(z, layer.W_b))
        z = T.tanh(T.add(T.matmul(inner, layer.W_c), layer.b_c))
    return z


# -- inspection exports ---------------------------------------------------------

def graph_to_json(graph: LogicGraph, pairs: Sequence[AttributeValuePair]) -> str:
    labels = [
        " ".join(p.attribute) + "=" + " ".join(p.value)
        for p in sorted(pairs, key=lambda p: p.index)
    ]
    return json.dumps({"nodes": labels, "weights": graph.weights.tolist()})


def graph_to_dot(graph: LogicGraph, pairs: Sequence[AttributeValuePair]) -> str:
    labels = [
        " ".join(p.attribute) + "=" + " ".join(p.value)
        for p in sorted(pairs, key=lambda p: p.index)
    ]
    lines = ["digraph logic {"]
    for i, label in enumerate(labels):
        lines.append(f'  n{i} [label="{label}"];')
    w = graph.weights
    for i in range(graph.num_nodes):
        for j in range(graph.num_nodes):
            if w[i, j] > 0:
                lines.append(f'  n{i} -> n{j} [label="{w[i, j]:.3f}"];')
    lines.append("}")
    return "\n".join(lines)
