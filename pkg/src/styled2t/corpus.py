"""Data model, tokenization, JSONL I/O, plan extraction, and the synthetic corpus.

A training sample is a triplet: a set of attribute-value pairs, a style
reference text of the desired style, and (when available) a target text
of that style.  Ground-truth content plans are read off the target text
by the order in which each pair's value first occurs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigInvalid, PlanUnderivable, SchemaError

PAD_ID, BOS_ID, EOS_ID, UNK_ID, SEP_ID = 0, 1, 2, 3, 4
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>", "<sep>")
NUM_SPECIALS = len(SPECIAL_TOKENS)


def tokenize(text: str) -> list[str]:
    """Split a string on whitespace; empty input gives an empty sequence."""
    return text.split()


def detokenize(tokens: Sequence[str]) -> str:
    return " ".join(tokens)


@dataclass(frozen=True)
class AttributeValuePair:
    """One (attribute, value) record; ``index`` is its 1-based slot."""

    attribute: tuple[str, ...]
    value: tuple[str, ...]
    index: int

    def __post_init__(self):
        if not self.attribute or not self.value:
            raise ConfigInvalid("attribute and value must be non-empty token sequences")
        if self.index < 1:
            raise ConfigInvalid(f"pair index must be >= 1, got {self.index}")

    def tokens(self) -> list[str]:
        """Pair token layout fed to the embedding: attr tokens, <sep>, value tokens."""
        return list(self.attribute) + [SPECIAL_TOKENS[SEP_ID]] + list(self.value)


@dataclass
class Triplet:
    """One sample: pairs P, style reference X, optional target Y, style id."""

    data: list[AttributeValuePair]
    style_ref: tuple[str, ...]
    target: Optional[tuple[str, ...]]
    style: int

    def __post_init__(self):
        if not self.data:
            raise ConfigInvalid("a triplet needs at least one attribute-value pair")
        indices = [p.index for p in self.data]
        if sorted(indices) != list(range(1, len(self.data) + 1)):
            raise ConfigInvalid(f"pair indices must be a permutation of 1..K, got {indices}")
        if self.style < 0:
            raise ConfigInvalid(f"style id must be >= 0, got {self.style}")

    @property
    def num_pairs(self) -> int:
        return len(self.data)

    def pair(self, index: int) -> AttributeValuePair:
        """Look up a pair by its 1-based index."""
        for p in self.data:
            if p.index == index:
                return p
        raise KeyError(index)

    def style_one_hot(self, n_styles: int) -> np.ndarray:
        g = np.zeros(n_styles)
        g[self.style] = 1.0
        return g


@dataclass(frozen=True)
class Plan:
    """An ordering of pair indices: the sequence in which a text mentions them."""

    order: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.order)) != len(self.order):
            raise ConfigInvalid(f"plan repeats a pair index: {self.order}")

    def __len__(self):
        return len(self.order)


class Vocabulary:
    """Bijective token-id map with five reserved specials at ids 0-4."""

    def __init__(self, tokens: Sequence[str]):
        self._tokens = list(tokens)
        self._ids = {}
        for i, tok in enumerate(self._tokens):
            if tok in self._ids or tok in SPECIAL_TOKENS:
                raise ConfigInvalid(f"duplicate or reserved token in vocabulary: {tok!r}")
            self._ids[tok] = NUM_SPECIALS + i

    @classmethod
    def from_texts(cls, texts: Iterable[Sequence[str]]) -> "Vocabulary":
        seen = sorted({tok for text in texts for tok in text if tok not in SPECIAL_TOKENS})
        return cls(seen)

    def __len__(self):
        return NUM_SPECIALS + len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids or token in SPECIAL_TOKENS

    def id_of(self, token: str) -> int:
        if token in self._ids:
            return self._ids[token]
        if token in SPECIAL_TOKENS:
            return SPECIAL_TOKENS.index(token)
        return UNK_ID

    def token_of(self, idx: int) -> str:
        if 0 <= idx < NUM_SPECIALS:
            return SPECIAL_TOKENS[idx]
        return self._tokens[idx - NUM_SPECIALS]

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.id_of(t) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.token_of(i) for i in ids]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self._tokens:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh if line.rstrip("\n")])


# -- ranks and plans ---------------------------------------------------------

def first_occurrence(haystack: Sequence[str], needle: Sequence[str]) -> Optional[int]:
    """Index of the first contiguous, case-sensitive match, or None."""
    n, m = len(haystack), len(needle)
    if m == 0 or m > n:
        return None
    for i in range(n - m + 1):
        if list(haystack[i : i + m]) == list(needle):
            return i
    return None


def rank_pairs_in_text(pairs: Sequence[AttributeValuePair], text: Sequence[str]) -> tuple[int, ...]:
    """Mention ranks of each pair's value in ``text``; 0 when absent.

    Present pairs are ranked 1..m by ascending first-occurrence position,
    ties broken by ascending pair index.
    """
    position = {p.index: first_occurrence(text, p.value) for p in pairs}
    present = sorted(
        (pos, idx) for idx, pos in position.items() if pos is not None
    )
    rank_of = {idx: r + 1 for r, (_, idx) in enumerate(present)}
    return tuple(rank_of.get(p.index, 0) for p in sorted(pairs, key=lambda p: p.index))


def extract_ranks(triplet: Triplet) -> tuple[int, ...]:
    """Ranks of the triplet's pairs in its own target text."""
    if triplet.target is None:
        raise PlanUnderivable("triplet has no target text")
    ranks = rank_pairs_in_text(triplet.data, triplet.target)
    if all(r == 0 for r in ranks):
        raise PlanUnderivable("no attribute value occurs in the target text")
    return ranks


def extract_plan(triplet: Triplet) -> Plan:
    """Ground-truth plan: pair indices with nonzero rank, by ascending rank."""
    ranks = extract_ranks(triplet)
    indexed = [(r, i + 1) for i, r in enumerate(ranks) if r > 0]
    return Plan(tuple(idx for _, idx in sorted(indexed)))


# -- JSONL I/O ---------------------------------------------------------------

def _triplet_to_record(t: Triplet) -> dict:
    return {
        "data": [
            {"attr": detokenize(p.attribute), "value": detokenize(p.value)}
            for p in sorted(t.data, key=lambda p: p.index)
        ],
        "style_ref": detokenize(t.style_ref),
        "target": detokenize(t.target) if t.target is not None else None,
        "style": t.style,
    }


def _record_to_triplet(rec: dict, line: int) -> Triplet:
    if not isinstance(rec, dict):
        raise SchemaError("record is not a JSON object", line=line)
    for key in ("data", "style_ref", "target", "style"):
        if key not in rec:
            raise SchemaError(f"missing key {key!r}", line=line)
    if not isinstance(rec["data"], list) or not rec["data"]:
        raise SchemaError("'data' must be a non-empty list", line=line)
    pairs = []
    for k, item in enumerate(rec["data"], start=1):
        if not isinstance(item, dict) or "attr" not in item or "value" not in item:
            raise SchemaError(f"pair {k} must have 'attr' and 'value'", line=line)
        attr, value = tokenize(str(item["attr"])), tokenize(str(item["value"]))
        if not attr or not value:
            raise SchemaError(f"pair {k} has an empty attr or value", line=line)
        pairs.append(AttributeValuePair(tuple(attr), tuple(value), k))
    if not isinstance(rec["style_ref"], str):
        raise SchemaError("'style_ref' must be a string", line=line)
    if rec["target"] is not None and not isinstance(rec["target"], str):
        raise SchemaError("'target' must be a string or null", line=line)
    if not isinstance(rec["style"], int) or isinstance(rec["style"], bool) or rec["style"] < 0:
        raise SchemaError("'style' must be a non-negative integer", line=line)
    target = tuple(tokenize(rec["target"])) if rec["target"] is not None else None
    return Triplet(pairs, tuple(tokenize(rec["style_ref"])), target, rec["style"])


def read_jsonl(path) -> list[Triplet]:
    triplets = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"invalid JSON: {e.msg}", line=line_no) from e
            triplets.append(_record_to_triplet(rec, line_no))
    return triplets


def write_jsonl(path, triplets: Iterable[Triplet]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in triplets:
            fh.write(json.dumps(_triplet_to_record(t), ensure_ascii=False) + "\n")


def build_vocabulary(triplets: Iterable[Triplet]) -> Vocabulary:
    """Vocabulary over every token observed in pairs, references, and targets."""
    texts = []
    for t in triplets:
        texts.append(t.style_ref)
        if t.target is not None:
            texts.append(t.target)
        for p in t.data:
            texts.append(p.attribute)
            texts.append(p.value)
    return Vocabulary.from_texts(texts)


# -- synthetic two-style corpus ----------------------------------------------

# Attribute catalog: canonical mention priority is catalog order.  Values are
# one or two tokens so contiguous matching is exercised.
ATTRIBUTE_CATALOG: list[tuple[str, list[tuple[str, ...]]]] = [
    ("color", [("crimson",), ("azure",), ("emerald",), ("ivory",), ("deep", "violet"), ("pale", "gold")]),
    ("material", [("oak",), ("steel",), ("linen",), ("ceramic",), ("carbon", "fiber"), ("soft", "wool")]),
    ("size", [("compact",), ("medium",), ("oversized",), ("pocket", "sized"), ("extra", "wide"), ("slim",)]),
    ("pattern", [("striped",), ("dotted",), ("plain",), ("checkered",), ("wave", "printed"), ("floral",)]),
    ("origin", [("nordic",), ("alpine",), ("coastal",), ("island", "made"), ("urban",), ("rural",)]),
    ("finish", [("matte",), ("glossy",), ("brushed",), ("polished",), ("stone", "washed"), ("satin",)]),
    ("weight", [("featherlight",), ("hefty",), ("balanced",), ("ultra", "light"), ("solid",), ("airy",)]),
    ("grade", [("standard",), ("deluxe",), ("prime",), ("studio", "level"), ("basic",), ("select",)]),
    ("scent", [("cedar",), ("citrus",), ("lavender",), ("sea", "breeze"), ("vanilla",), ("minty",)]),
    ("trim", [("leather",), ("velvet",), ("cork",), ("rubber",), ("woven", "cord"), ("chrome",)]),
    ("shape", [("round",), ("square",), ("oval",), ("hexagonal",), ("teardrop",), ("arched",)]),
    ("era", [("classic",), ("modern",), ("retro",), ("futuristic",), ("mid", "century"), ("timeless",)]),
    ("feel", [("smooth",), ("textured",), ("plush",), ("crisp",), ("springy",), ("silky",)]),
    ("sound", [("quiet",), ("resonant",), ("muffled",), ("bright", "toned"), ("mellow",), ("sharp",)]),
    ("care", [("washable",), ("wipeable",), ("foldable",), ("stackable",), ("reusable",), ("sealed",)]),
    ("mood", [("calming",), ("bold",), ("playful",), ("serene",), ("vivid",), ("subtle",)]),
]

# Two styles with disjoint marker tokens; values appear verbatim in both.
_STYLE_OPENERS = (("presenting", "one", "fine", "piece", "."), ("hey", "hey", "pals", "come", "see"))
_STYLE_CLOSERS = (("a", "truly", "refined", "buy", "."), ("grab", "yours", "before", "gone", "!"))


def _render_pair(style: int, attr: str, value: tuple[str, ...]) -> list[str]:
    if style == 0:
        return ["the", attr, "comes", "finished", "in"] + list(value) + ["."]
    return ["this", attr, "just", "screams"] + list(value) + ["!"]


@dataclass
class GeneratorConfig:
    """Settings for the synthetic two-style corpus."""

    counts: tuple[int, ...] = (100, 100)
    pool_size: int = 10
    pairs_min: int = 3
    pairs_max: int = 6
    seed: int = 0
    shuffle_pair_order: bool = True

    def __post_init__(self):
        self.counts = tuple(self.counts)
        if len(self.counts) != 2 or any(c <= 0 for c in self.counts):
            raise ConfigInvalid(f"need exactly two positive per-style counts, got {self.counts}")
        if not (1 <= self.pairs_min <= self.pairs_max):
            raise ConfigInvalid("need 1 <= pairs_min <= pairs_max")
        if self.pairs_max > self.pool_size:
            raise ConfigInvalid("pairs_max cannot exceed pool_size")
        if self.pool_size > len(ATTRIBUTE_CATALOG):
            raise ConfigInvalid(f"pool_size extends past the {len(ATTRIBUTE_CATALOG)}-attribute catalog")

    @property
    def n_styles(self) -> int:
        return len(self.counts)


def _render_target(style: int, pairs: list[AttributeValuePair], priority: dict[str, int]) -> tuple[str, ...]:
    ordered = sorted(pairs, key=lambda p: priority[p.attribute[0]])
    tokens = list(_STYLE_OPENERS[style % 2])
    for p in ordered:
        tokens.extend(_render_pair(style % 2, p.attribute[0], p.value))
    tokens.extend(_STYLE_CLOSERS[style % 2])
    return tuple(tokens)


def generate_synthetic_corpus(config: GeneratorConfig) -> list[Triplet]:
    """Deterministic templated corpus: every value appears in its target,
    mention order follows a fixed attribute priority, and each style ref
    is the target of another same-style instance."""
    rng = np.random.default_rng(config.seed)
    catalog = ATTRIBUTE_CATALOG[: config.pool_size]
    priority = {attr: i for i, (attr, _) in enumerate(catalog)}

    per_style_instances: list[list[list[AttributeValuePair]]] = []
    for style, count in enumerate(config.counts):
        seen_signatures = set()
        instances = []
        while len(instances) < count:
            k = int(rng.integers(config.pairs_min, config.pairs_max + 1))
            attr_ids = rng.choice(config.pool_size, size=k, replace=False)
            chosen = []
            for a in attr_ids:
                attr, values = catalog[a]
                value = values[int(rng.integers(len(values)))]
                chosen.append((attr, value))
            signature = frozenset(chosen)
            if signature in seen_signatures and len(seen_signatures) < 10 * count:
                continue
            seen_signatures.add(signature)
            if config.shuffle_pair_order:
                order = rng.permutation(k)
            else:
                order = np.arange(k)
            pairs = [
                AttributeValuePair((chosen[j][0],), tuple(chosen[j][1]), i + 1)
                for i, j in enumerate(order)
            ]
            instances.append(pairs)
        per_style_instances.append(instances)

    triplets: list[Triplet] = []
    for style, instances in enumerate(per_style_instances):
        targets = [_render_target(style, pairs, priority) for pairs in instances]
        for j, pairs in enumerate(instances):
            if len(instances) > 1:
                ref_j = int(rng.integers(len(instances) - 1))
                if ref_j >= j:
                    ref_j += 1
            else:
                ref_j = j
            triplets.append(Triplet(pairs, targets[ref_j], targets[j], style))
    return triplets
