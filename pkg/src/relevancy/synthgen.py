"""Constrained generation of implicit relevant texts and synthetic hard negatives.

Implicit texts must express a topic without using any of its keywords. The
keyword constraint is enforced mechanically here: every candidate is checked
against a per-topic blocklist and regenerated on a leak, regardless of how well
the provider honors its instructions. Because the construction itself fixes
the intended label, generated pairs bypass the labeling oracle and carry
label_source = synthetic-construction.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Protocol, Sequence

from .corpus import (
    Label,
    LabelSource,
    PairExample,
    Register,
    Split,
    TextSample,
    normalize_text,
)
from .errors import GenerationError, InputError, ProviderFailure


class Polarity(str, Enum):
    IMPLICIT_POSITIVE = "implicit_positive"
    HARD_NEGATIVE = "hard_negative"


@dataclass(frozen=True)
class KeywordBlocklist:
    """Normalized keywords a synthetic text for this topic must not contain."""

    topic_id: str
    keywords: frozenset[str]

    def __post_init__(self) -> None:
        for keyword in self.keywords:
            if not keyword:
                raise InputError(f"blocklist {self.topic_id!r}: empty keyword")
            if keyword != normalize_text(keyword):
                raise InputError(
                    f"blocklist {self.topic_id!r}: keyword {keyword!r} is not normalized"
                )

    @classmethod
    def from_keywords(cls, topic_id: str, keywords: Iterable[str]) -> "KeywordBlocklist":
        normalized = {normalize_text(k) for k in keywords}
        normalized.discard("")
        return cls(topic_id=topic_id, keywords=frozenset(normalized))


@dataclass(frozen=True)
class LeakReport:
    passed: bool
    matched: tuple[str, ...]


@dataclass(frozen=True)
class GenerationSpec:
    """What to generate for one topic: how many texts, in what style, which polarity."""

    topic_id: str
    count: int
    style_directive: str
    polarity: Polarity

    def __post_init__(self) -> None:
        if self.count < 0:
            raise InputError(f"generation spec for {self.topic_id!r}: count must be >= 0")


@dataclass(frozen=True)
class GenerationResult:
    """Accepted samples with their pre-labeled pairs and rejection statistics."""

    samples: tuple[TextSample, ...]
    pairs: tuple[PairExample, ...]
    rejected: int
    leak_counts: Mapping[str, int]


class GenerationProvider(Protocol):
    provider_id: str

    def generate(self, spec: GenerationSpec, index: int) -> str:
        """Produce candidate text number `index` for the spec."""
        ...


def keyword_leak_check(text: str, blocklist: KeywordBlocklist) -> LeakReport:
    """Report a violation iff a blocklist keyword occurs in the normalized text.

    Matching is whole-token (or whole contiguous token sequence for multi-word
    keywords), never substring: Indonesian affixation makes bare substring
    matching over-aggressive, so affixed forms belong in the blocklist
    explicitly.
    """
    tokens = normalize_text(text).split()
    matched = []
    for keyword in sorted(blocklist.keywords):
        parts = keyword.split()
        width = len(parts)
        if width == 0 or width > len(tokens):
            continue
        for start in range(len(tokens) - width + 1):
            if tokens[start : start + width] == parts:
                matched.append(keyword)
                break
    return LeakReport(passed=not matched, matched=tuple(matched))


def _sample(spec: GenerationSpec, provider_id: str, serial: int, text: str) -> TextSample:
    tag = "implicit" if spec.polarity == Polarity.IMPLICIT_POSITIVE else "hardneg"
    return TextSample(
        id=f"{spec.topic_id}-{tag}-{serial:04d}",
        text=text,
        register=Register.IMPLICIT_SYNTHETIC,
        stage=3,
        source=f"synthetic:{provider_id}",
    )


def _pair(spec: GenerationSpec, sample: TextSample, label: Label) -> PairExample:
    return PairExample(
        context_id=spec.topic_id,
        text_id=sample.id,
        label=label,
        stage=3,
        split=Split.UNASSIGNED,
        label_source=LabelSource.SYNTHETIC_CONSTRUCTION,
    )


def generate_implicit(
    provider: GenerationProvider,
    spec: GenerationSpec,
    blocklist: KeywordBlocklist,
    max_rejections: int = 200,
) -> GenerationResult:
    """Generate spec.count implicit texts, rejecting every keyword leak.

    Accepted samples are stage-3 implicit-synthetic texts pre-labeled relevant
    to the spec topic. Exhausting the rejection budget raises GenerationError
    with leak statistics.
    """
    if spec.polarity != Polarity.IMPLICIT_POSITIVE:
        raise InputError("generate_implicit requires polarity = implicit_positive")
    samples: list[TextSample] = []
    leak_counts: Counter[str] = Counter()
    rejected = 0
    index = 0
    while len(samples) < spec.count:
        if rejected > max_rejections:
            raise GenerationError(
                f"topic {spec.topic_id!r}: rejection budget {max_rejections} exhausted "
                f"after {rejected} leaking candidates; leaked keywords: "
                f"{dict(leak_counts)}"
            )
        try:
            candidate = provider.generate(spec, index)
        except ProviderFailure as exc:
            raise GenerationError(f"topic {spec.topic_id!r}: provider failed: {exc}") from exc
        index += 1
        report = keyword_leak_check(candidate, blocklist)
        if not report.passed:
            rejected += 1
            leak_counts.update(report.matched)
            continue
        samples.append(_sample(spec, provider.provider_id, len(samples), candidate))
    pairs = tuple(_pair(spec, s, Label.RELEVANT) for s in samples)
    return GenerationResult(
        samples=tuple(samples), pairs=pairs, rejected=rejected, leak_counts=dict(leak_counts)
    )


def generate_hard_negatives(
    provider: GenerationProvider,
    spec: GenerationSpec,
) -> GenerationResult:
    """Generate spec.count superficially-related texts pre-labeled not relevant.

    No leak check applies: hard negatives may (and should) share surface
    vocabulary with the topic.
    """
    if spec.polarity != Polarity.HARD_NEGATIVE:
        raise InputError("generate_hard_negatives requires polarity = hard_negative")
    samples: list[TextSample] = []
    for index in range(spec.count):
        try:
            candidate = provider.generate(spec, index)
        except ProviderFailure as exc:
            raise GenerationError(f"topic {spec.topic_id!r}: provider failed: {exc}") from exc
        samples.append(_sample(spec, provider.provider_id, index, candidate))
    pairs = tuple(_pair(spec, s, Label.NOT_RELEVANT) for s in samples)
    return GenerationResult(samples=tuple(samples), pairs=pairs, rejected=0, leak_counts={})


class MockGenerationProvider:
    """Deterministic generation provider replaying per-topic text pools.

    Candidate `index` for a topic cycles through the pool, suffixing a variant
    marker on each full cycle so texts stay distinct. When `leak_rate` > 0,
    a deterministic Bresenham pattern makes that fraction of implicit
    candidates leak a blocklisted term, exercising the rejection filter.
    """

    def __init__(
        self,
        pools: Mapping[tuple[str, Polarity], Sequence[str]],
        leak_terms: Mapping[str, Sequence[str]] | None = None,
        leak_rate: float = 0.0,
        provider_id: str = "mock-gen",
    ):
        if not 0.0 <= leak_rate <= 1.0:
            raise InputError(f"leak_rate must be in [0, 1], got {leak_rate}")
        self._pools = {k: list(v) for k, v in pools.items()}
        self._leak_terms = {k: list(v) for k, v in (leak_terms or {}).items()}
        self.leak_rate = leak_rate
        self.provider_id = provider_id
        self.generated = 0

    def _should_leak(self, index: int) -> bool:
        if self.leak_rate <= 0.0:
            return False
        return int((index + 1) * self.leak_rate) > int(index * self.leak_rate)

    def generate(self, spec: GenerationSpec, index: int) -> str:
        pool = self._pools.get((spec.topic_id, spec.polarity))
        if not pool:
            raise ProviderFailure(
                f"no generation pool for topic {spec.topic_id!r} / {spec.polarity.value}"
            )
        self.generated += 1
        text = pool[index % len(pool)]
        cycle = index // len(pool)
        if cycle:
            text = f"{text} (takes {cycle})"
        if spec.polarity == Polarity.IMPLICIT_POSITIVE and self._should_leak(index):
            terms = self._leak_terms.get(spec.topic_id)
            if terms:
                text = f"{text} {terms[index % len(terms)]}"
        return text


GENERATION_PROMPTS = {
    Polarity.IMPLICIT_POSITIVE: (
        "Write one short social-media post (candidate {index}) that is clearly "
        "relevant to the topic {topic} through {style}, without using any "
        "obvious topic keywords. Avoid all of these words: {avoid}. "
        "Reply with the post text only."
    ),
    Polarity.HARD_NEGATIVE: (
        "Write one short social-media post (candidate {index}) that might "
        "superficially seem related to the topic {topic} but is actually about "
        "a different topic. Reply with the post text only."
    ),
}


class HttpGenerationProvider:
    """Generation over the same wire contract as HTTP labeling.

    POSTs {"model": ..., "prompt": ...} and reads the candidate text from the
    "completion" field. The implicit-positive prompt carries the topic's
    blocklist as an avoid-list, but the mechanical leak filter stays
    authoritative regardless of how well the endpoint complies.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        blocklists: Mapping[str, KeywordBlocklist] | None = None,
        api_key: str | None = None,
        timeout: float = 30.0,
        session=None,
    ):
        from .labeling import HttpLabelProvider

        self._transport = HttpLabelProvider(
            endpoint, model, api_key=api_key, timeout=timeout, session=session
        )
        self._blocklists = dict(blocklists or {})
        self.provider_id = f"http-gen:{model}"

    def generate(self, spec: GenerationSpec, index: int) -> str:
        blocklist = self._blocklists.get(spec.topic_id)
        avoid = ", ".join(sorted(blocklist.keywords)) if blocklist else "(none)"
        prompt = GENERATION_PROMPTS[spec.polarity].format(
            index=index, topic=spec.topic_id, style=spec.style_directive, avoid=avoid
        )
        return self._transport.post_completion(prompt)
