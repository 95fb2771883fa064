"""Quality gate for pseudo triplets: length, fluency, style, and coverage.

A candidate text enters the pseudo loss only when every condition holds
strictly: its token count sits inside (L_min, L_max), its perplexity under
an interpolated 5-gram language model is below the threshold, a bag-of-
n-grams classifier assigns it the same style as the reference text, and
its coverage of the input values exceeds the threshold.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .corpus import AttributeValuePair, Triplet, first_occurrence
from .errors import ConfigInvalid, EmptyCorpus, EmptyInput, EmptyText, SingleStyleCorpus

BOS_MARK = "<bos>"
EOS_MARK = "<eos>"


# -- language model ------------------------------------------------------------

@dataclass
class NgramLM:
    """Interpolated maximum-likelihood n-gram model with add-one unigrams.

    P(w | ctx) = sum over n of lambda_n * P_n(w | last n-1 context tokens),
    where P_n is the MLE estimate (0 when that context was never seen) and
    the unigram level is add-one smoothed over the model's event space
    (training tokens plus the end marker).  With uniform lambdas the mass
    reaching unseen events never drops to zero.
    """

    order: int
    lambdas: tuple[float, ...]
    vocab: tuple[str, ...]  # event space, end marker included
    ngram_counts: list[dict]  # per n (1-based at index n-1): {(ctx..., w): count}
    context_counts: list[dict]  # per n: {(ctx...): count}
    total_events: int

    def __post_init__(self):
        if len(self.lambdas) != self.order:
            raise ConfigInvalid("need one interpolation weight per order")
        if any(l < 0 for l in self.lambdas) or abs(sum(self.lambdas) - 1.0) > 1e-9:
            raise ConfigInvalid("interpolation weights must be non-negative and sum to 1")

    def prob(self, word: str, context: Sequence[str]) -> float:
        """Interpolated probability of ``word`` after ``context`` tokens."""
        padded = [BOS_MARK] * (self.order - 1) + list(context)
        p = self.lambdas[0] * self._unigram(word)
        for n in range(2, self.order + 1):
            ctx = tuple(padded[len(padded) - (n - 1) :])
            denom = self.context_counts[n - 1].get(ctx, 0)
            if denom:
                p += self.lambdas[n - 1] * self.ngram_counts[n - 1].get(ctx + (word,), 0) / denom
        return p

    def _unigram(self, word: str) -> float:
        count = self.ngram_counts[0].get((word,), 0)
        return (count + 1.0) / (self.total_events + len(self.vocab))

    def to_json(self) -> str:
        payload = {
            "order": self.order,
            "lambdas": list(self.lambdas),
            "vocab": list(self.vocab),
            "total_events": self.total_events,
            "ngram_counts": [
                [[list(key), count] for key, count in sorted(level.items())]
                for level in self.ngram_counts
            ],
            "context_counts": [
                [[list(key), count] for key, count in sorted(level.items())]
                for level in self.context_counts
            ],
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, blob: str) -> "NgramLM":
        raw = json.loads(blob)
        return cls(
            order=raw["order"],
            lambdas=tuple(raw["lambdas"]),
            vocab=tuple(raw["vocab"]),
            ngram_counts=[{tuple(k): c for k, c in level} for level in raw["ngram_counts"]],
            context_counts=[{tuple(k): c for k, c in level} for level in raw["context_counts"]],
            total_events=raw["total_events"],
        )


def train_lm(targets: Sequence[Sequence[str]], order: int = 5, lambdas: Optional[Sequence[float]] = None) -> NgramLM:
    """Count n-grams (n = 1..order) over the training targets.

    Every text is padded with order-1 begin markers and closed with the end
    marker, which is itself a predicted event.
    """
    targets = [tuple(t) for t in targets]
    if not targets:
        raise EmptyCorpus("language model needs at least one training text")
    lambdas = tuple(lambdas) if lambdas is not None else tuple([1.0 / order] * order)
    ngram_counts: list[dict] = [dict() for _ in range(order)]
    context_counts: list[dict] = [dict() for _ in range(order)]
    total = 0
    events = set()
    for text in targets:
        padded = [BOS_MARK] * (order - 1) + list(text) + [EOS_MARK]
        for pos in range(order - 1, len(padded)):
            word = padded[pos]
            events.add(word)
            total += 1
            for n in range(1, order + 1):
                ctx = tuple(padded[pos - (n - 1) : pos])
                gram = ctx + (word,)
                ngram_counts[n - 1][gram] = ngram_counts[n - 1].get(gram, 0) + 1
                context_counts[n - 1][ctx] = context_counts[n - 1].get(ctx, 0) + 1
    return NgramLM(
        order=order, lambdas=lambdas, vocab=tuple(sorted(events)),
        ngram_counts=ngram_counts, context_counts=context_counts, total_events=total,
    )


def perplexity(lm: NgramLM, text: Sequence[str]) -> float:
    """exp of the mean negative log probability over the tokens plus EOS."""
    text = list(text)
    if not text:
        raise EmptyText("cannot score an empty token sequence")
    nll = 0.0
    history: list[str] = []
    for word in text + [EOS_MARK]:
        nll -= math.log(lm.prob(word, history))
        history.append(word)
    return math.exp(nll / (len(text) + 1))


# -- style classifier -----------------------------------------------------------

class NgramHashClassifier:
    """Multinomial logistic regression over hashed bag-of-n-grams features.

    Token order is discarded entirely: the sequence is canonicalized by
    sorting before 1- and 2-grams are extracted, so predictions are
    invariant to permutations of the input.  Grams hash into 2^16 buckets;
    features are bucket counts averaged over the gram total.
    """

    N_BUCKETS = 1 << 16

    def __init__(self, n_styles: int, seed: int = 0):
        self.n_styles = n_styles
        self.seed = seed
        self.bucket_ids = np.zeros(0, dtype=np.int64)
        self._column: dict[int, int] = {}
        self.weights = np.zeros((0, n_styles))
        self.bias = np.zeros(n_styles)

    @staticmethod
    def _grams(tokens: Sequence[str]) -> list[str]:
        canon = sorted(tokens)
        grams = list(canon)
        grams.extend(f"{a} {b}" for a, b in zip(canon, canon[1:]))
        return grams

    @classmethod
    def _buckets(cls, tokens: Sequence[str]) -> list[int]:
        return [zlib.crc32(g.encode("utf-8")) % cls.N_BUCKETS for g in cls._grams(tokens)]

    def _features(self, tokens: Sequence[str]) -> np.ndarray:
        x = np.zeros(len(self._column))
        buckets = self._buckets(tokens)
        if not buckets:
            return x
        for b in buckets:
            col = self._column.get(b)
            if col is not None:
                x[col] += 1.0
        return x / len(buckets)

    def fit(self, texts: Sequence[Sequence[str]], labels: Sequence[int], iters: int = 300, lr: float = 4.0, l2: float = 1e-4):
        if len(texts) != len(labels) or not texts:
            raise EmptyInput("need matching non-empty texts and labels")
        if len(set(labels)) < 2:
            raise SingleStyleCorpus("classifier training needs at least two styles")
        observed = sorted({b for t in texts for b in self._buckets(t)})
        self.bucket_ids = np.asarray(observed, dtype=np.int64)
        self._column = {b: i for i, b in enumerate(observed)}
        x = np.stack([self._features(t) for t in texts])
        y = np.asarray(labels, dtype=np.intp)
        n, f = x.shape
        onehot = np.zeros((n, self.n_styles))
        onehot[np.arange(n), y] = 1.0
        self.weights = np.zeros((f, self.n_styles))
        self.bias = np.zeros(self.n_styles)
        for _ in range(iters):
            logits = x @ self.weights + self.bias
            logits -= logits.max(axis=1, keepdims=True)
            probs = np.exp(logits)
            probs /= probs.sum(axis=1, keepdims=True)
            grad = (probs - onehot) / n
            self.weights -= lr * (x.T @ grad + l2 * self.weights)
            self.bias -= lr * grad.sum(axis=0)
        return self

    def predict_proba(self, tokens: Sequence[str]) -> np.ndarray:
        logits = self._features(tokens) @ self.weights + self.bias
        logits -= logits.max()
        probs = np.exp(logits)
        return probs / probs.sum()

    def predict(self, tokens: Sequence[str]) -> int:
        return int(np.argmax(self.predict_proba(tokens)))

    def save(self, path):
        np.savez(
            path, bucket_ids=self.bucket_ids, weights=self.weights, bias=self.bias,
            n_styles=np.array([self.n_styles]), seed=np.array([self.seed]),
        )

    @classmethod
    def load(cls, path) -> "NgramHashClassifier":
        data = np.load(path)
        clf = cls(int(data["n_styles"][0]), seed=int(data["seed"][0]))
        clf.bucket_ids = data["bucket_ids"]
        clf._column = {int(b): i for i, b in enumerate(clf.bucket_ids)}
        clf.weights = data["weights"]
        clf.bias = data["bias"]
        return clf


def train_gate_classifier(triplets: Sequence[Triplet], seed: int = 0) -> NgramHashClassifier:
    """Fit the style classifier on the corpus targets and their labels."""
    texts = [t.target for t in triplets if t.target is not None]
    labels = [t.style for t in triplets if t.target is not None]
    if not texts:
        raise EmptyCorpus("no targets available for classifier training")
    styles = sorted(set(labels))
    if len(styles) < 2:
        raise SingleStyleCorpus("classifier training needs at least two styles")
    clf = NgramHashClassifier(n_styles=max(styles) + 1, seed=seed)
    return clf.fit(texts, labels)


# -- coverage and the confidence function -----------------------------------------

def coverage(text: Sequence[str], pairs: Sequence[AttributeValuePair]) -> float:
    """Fraction of pairs whose value occurs contiguously in the text."""
    if not pairs:
        raise EmptyInput("coverage needs at least one attribute-value pair")
    hit = sum(1 for p in pairs if first_occurrence(text, p.value) is not None)
    return hit / len(pairs)


@dataclass
class GateConfig:
    """Thresholds for the four confidence conditions (all strict)."""

    l_min: int = 60
    l_max: int = 160
    ppl_threshold: float = 50.0
    coverage_threshold: float = 0.95
    use_ref_label: bool = False  # trust the reference's known style id instead of classifying it

    def __post_init__(self):
        if not (0 < self.l_min < self.l_max):
            raise ConfigInvalid(f"need 0 < l_min < l_max, got ({self.l_min}, {self.l_max})")
        if self.ppl_threshold <= 1.0:
            raise ConfigInvalid("perplexity threshold must exceed 1")
        if not (0.0 <= self.coverage_threshold <= 1.0):
            raise ConfigInvalid("coverage threshold must lie in [0, 1]")


@dataclass
class ConfidenceVerdict:
    """Binary gate decision plus per-condition diagnostics."""

    tau: int
    length_ok: bool
    ppl_ok: bool
    style_ok: bool
    coverage_ok: bool
    length: int
    ppl: float
    candidate_style: int
    ref_style: int
    coverage: float

    def asdict(self):
        return {
            "tau": self.tau, "length_ok": self.length_ok, "ppl_ok": self.ppl_ok,
            "style_ok": self.style_ok, "coverage_ok": self.coverage_ok,
            "length": self.length, "ppl": self.ppl,
            "candidate_style": self.candidate_style, "ref_style": self.ref_style,
            "coverage": self.coverage,
        }


def assign_confidence(
    candidate: Sequence[str],
    ref: Sequence[str],
    pairs: Sequence[AttributeValuePair],
    lm: NgramLM,
    classifier: NgramHashClassifier,
    config: GateConfig,
    ref_style_id: Optional[int] = None,
) -> ConfidenceVerdict:
    """Confidence = 1 iff all four strict conditions hold for the candidate."""
    candidate = list(candidate)
    length = len(candidate)
    length_ok = config.l_min < length < config.l_max
    ppl = perplexity(lm, candidate) if candidate else float("inf")
    ppl_ok = ppl < config.ppl_threshold
    candidate_style = classifier.predict(candidate)
    if config.use_ref_label and ref_style_id is not None:
        ref_style = int(ref_style_id)
    else:
        ref_style = classifier.predict(ref)
    style_ok = candidate_style == ref_style
    cov = coverage(candidate, pairs)
    coverage_ok = cov > config.coverage_threshold
    tau = 1 if (length_ok and ppl_ok and style_ok and coverage_ok) else 0
    return ConfidenceVerdict(
        tau=tau, length_ok=length_ok, ppl_ok=ppl_ok, style_ok=style_ok,
        coverage_ok=coverage_ok, length=length, ppl=ppl,
        candidate_style=candidate_style, ref_style=ref_style, coverage=cov,
    )


def calibrate_gate_config(
    lm: NgramLM,
    targets: Sequence[Sequence[str]],
    ppl_percentile: float = 95.0,
    coverage_threshold: float = 0.95,
    use_ref_label: bool = False,
) -> GateConfig:
    """Corpus-driven thresholds for a freshly trained model.

    The perplexity cut is the given percentile of training-target
    perplexities; length bounds bracket the training lengths with a wide
    margin so they only reject degenerate candidates.
    """
    if not targets:
        raise EmptyCorpus("calibration needs training targets")
    lengths = [len(t) for t in targets]
    ppls = [perplexity(lm, t) for t in targets]
    return GateConfig(
        l_min=max(1, min(lengths) // 2),
        l_max=2 * max(lengths),
        ppl_threshold=max(float(np.percentile(ppls, ppl_percentile)), 1.0 + 1e-9),
        coverage_threshold=coverage_threshold,
        use_ref_label=use_ref_label,
    )
