"""Candidate pair generation with similarity-stratified negative sampling.

Negatives for a text are drawn from two strata of the context registry: a
"hard" stratum of topics most similar to the text's own topic, and the "easy"
remainder. Similar topics share surface vocabulary, so they make harder
negatives than distant ones.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import (
    LabelSource,
    PairExample,
    Split,
    TextSample,
    TopicContext,
    normalize_text,
)
from .errors import ConfigurationError, SamplingError


@dataclass(frozen=True)
class NegativeBudget:
    """How many negatives to sample per text and how to stratify them.

    Defaults (3 negatives, half of them hard, hard stratum = top quartile by
    similarity) give roughly a 3:1 negative:positive ratio per text.
    """

    negatives_per_text: int = 3
    hard_fraction: float = 0.5
    hard_stratum_quantile: float = 0.25

    def __post_init__(self) -> None:
        if self.negatives_per_text < 0:
            raise ConfigurationError("negatives_per_text must be >= 0")
        if not 0.0 <= self.hard_fraction <= 1.0:
            raise ConfigurationError(f"hard_fraction must be in [0, 1], got {self.hard_fraction}")
        if not 0.0 < self.hard_stratum_quantile < 1.0:
            raise ConfigurationError(
                f"hard_stratum_quantile must be in (0, 1), got {self.hard_stratum_quantile}"
            )


@dataclass(frozen=True)
class SimilarityMatrix:
    """Symmetric topic-similarity scores over an ordered context registry."""

    ids: tuple[str, ...]
    scores: np.ndarray  # (n, n) float64, values in [0, 1], unit diagonal
    contexts: tuple[TopicContext, ...]

    def index_of(self, context_id: str) -> int:
        try:
            return self.ids.index(context_id)
        except ValueError:
            raise ConfigurationError(f"context {context_id!r} not in similarity matrix") from None

    def similarity(self, a: str, b: str) -> float:
        return float(self.scores[self.index_of(a), self.index_of(b)])


def char_ngrams(text: str, n: int = 3) -> frozenset[str]:
    return frozenset(text[i : i + n] for i in range(len(text) - n + 1))


def trigram_jaccard(a: str, b: str) -> float:
    """Jaccard overlap of character 3-gram sets of the normalized strings."""
    na, nb = normalize_text(a), normalize_text(b)
    if na == nb:
        return 1.0
    ga, gb = char_ngrams(na), char_ngrams(nb)
    union = ga | gb
    if not union:
        return 0.0
    return len(ga & gb) / len(union)


def topic_similarity(
    contexts: Sequence[TopicContext],
    scorer: Callable[[str, str], float] = trigram_jaccard,
) -> SimilarityMatrix:
    """Score every context pair with `scorer` (default: character 3-gram Jaccard).

    A custom scorer must return values in [0, 1] and 1.0 for identical
    descriptions; violations raise ConfigurationError.
    """
    if not contexts:
        raise ConfigurationError("topic_similarity requires at least one context")
    n = len(contexts)
    scores = np.ones((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            value = float(scorer(contexts[i].description, contexts[j].description))
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(
                    f"scorer returned {value} for ({contexts[i].id}, {contexts[j].id}); "
                    "similarities must lie in [0, 1]"
                )
            if (
                normalize_text(contexts[i].description) == normalize_text(contexts[j].description)
                and value != 1.0
            ):
                raise ConfigurationError(
                    f"scorer returned {value} for identical descriptions "
                    f"({contexts[i].id}, {contexts[j].id}); must be 1.0"
                )
            scores[i, j] = scores[j, i] = value
    return SimilarityMatrix(
        ids=tuple(c.id for c in contexts), scores=scores, contexts=tuple(contexts)
    )


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def hard_stratum_ids(target: TopicContext, matrix: SimilarityMatrix, quantile: float) -> list[str]:
    """Ids of the top-`quantile` non-target contexts by similarity to target.

    Stratum size is round(quantile * n) over the n non-target contexts; ties at
    the boundary break lexicographically by id so the stratum is deterministic.
    """
    t = matrix.index_of(target.id)
    others = [
        (-float(matrix.scores[t, j]), matrix.ids[j])
        for j in range(len(matrix.ids))
        if matrix.ids[j] != target.id
    ]
    others.sort()
    size = _round_half_up(quantile * len(others))
    return [cid for _, cid in others[:size]]


def sample_negative_contexts(
    target: TopicContext,
    matrix: SimilarityMatrix,
    budget: NegativeBudget,
    seed: int,
) -> list[TopicContext]:
    """Draw `budget.negatives_per_text` non-target contexts, stratified by similarity.

    round(hard_fraction * k) negatives come uniformly from the hard stratum,
    the remainder uniformly from the rest. Never returns the target, never
    duplicates. Raises SamplingError when a stratum cannot cover its share.
    """
    k = budget.negatives_per_text
    if k == 0:
        return []
    by_id = {c.id: c for c in matrix.contexts}
    non_target = [cid for cid in matrix.ids if cid != target.id]
    if len(non_target) < k:
        raise SamplingError(
            f"need {k} negative contexts for {target.id!r} but only "
            f"{len(non_target)} non-target contexts exist"
        )

    hard_ids = hard_stratum_ids(target, matrix, budget.hard_stratum_quantile)
    hard_set = set(hard_ids)
    easy_ids = [cid for cid in non_target if cid not in hard_set]

    hard_count = _round_half_up(budget.hard_fraction * k)
    easy_count = k - hard_count
    if hard_count > len(hard_ids):
        raise SamplingError(
            f"hard stratum for {target.id!r} holds {len(hard_ids)} contexts, "
            f"cannot draw {hard_count}"
        )
    if easy_count > len(easy_ids):
        raise SamplingError(
            f"easy stratum for {target.id!r} holds {len(easy_ids)} contexts, "
            f"cannot draw {easy_count}"
        )

    rng = random.Random(seed)
    chosen = rng.sample(hard_ids, hard_count) + rng.sample(easy_ids, easy_count)
    return [by_id[cid] for cid in chosen]


def derive_seed(seed: int, tag: str) -> int:
    """Stable per-item seed; Python's builtin hash is salted, so hash bytes instead."""
    digest = hashlib.blake2b(f"{seed}:{tag}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def build_candidate_pairs(
    texts: Sequence[TextSample],
    topic_of_text: Mapping[str, str],
    matrix: SimilarityMatrix,
    budget: NegativeBudget,
    seed: int,
) -> list[PairExample]:
    """Pair each text with its own topic plus sampled negative topics.

    Output pairs are unlabeled (split unassigned, label_source pending); one
    candidate positive and `budget.negatives_per_text` candidate negatives per
    text, in input text order.
    """
    by_id = {c.id: c for c in matrix.contexts}
    pairs: list[PairExample] = []
    for text in texts:
        topic_id = topic_of_text.get(text.id)
        if topic_id is None:
            raise ConfigurationError(f"text {text.id!r} is not mapped to any context")
        target = by_id.get(topic_id)
        if target is None:
            raise ConfigurationError(
                f"text {text.id!r} maps to unregistered context {topic_id!r}"
            )
        pairs.append(
            PairExample(
                context_id=topic_id,
                text_id=text.id,
                label=None,
                stage=text.stage,
                split=Split.UNASSIGNED,
                label_source=LabelSource.PENDING,
            )
        )
        negatives = sample_negative_contexts(
            target, matrix, budget, derive_seed(seed, text.id)
        )
        for ctx in negatives:
            pairs.append(
                PairExample(
                    context_id=ctx.id,
                    text_id=text.id,
                    label=None,
                    stage=text.stage,
                    split=Split.UNASSIGNED,
                    label_source=LabelSource.PENDING,
                )
            )
    return pairs
