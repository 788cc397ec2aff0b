"""Pluggable pair labeling: prompt templates, providers, caching, and retries.

A provider is anything with a `provider_id` and a `label(request, prompt)`
method returning the raw verdict text. The HTTP provider talks to a real LLM
endpoint; the mock provider answers from a hidden ground-truth predicate and
is the workhorse for desk-scale runs and tests.

Responses are parsed as a strict single-token verdict (RELEVANT /
NOT_RELEVANT). Anything else is a protocol error, never silently coerced, so
prompt drift surfaces immediately.
"""

from __future__ import annotations

import datetime
import hashlib
import json
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import requests

from .corpus import Label, LabelSource, PairExample, TextSample, TopicContext, normalize_text
from .errors import (
    ConfigurationError,
    InputError,
    LabelingError,
    ProtocolError,
    ProviderFailure,
    RelevancyError,
    TemplateError,
)

VERDICT_RELEVANT = "RELEVANT"
VERDICT_NOT_RELEVANT = "NOT_RELEVANT"

# Stage-2 and stage-3 instructions must carry this clause verbatim: the text's
# register is never grounds for a relevancy judgment.
REGISTER_NEUTRALITY_CLAUSE = (
    "Informal language, slang, abbreviations, and non-standard spelling must "
    "not affect the relevancy judgment."
)

API_KEY_ENV_VAR = "RELEVANCY_LLM_API_KEY"


@dataclass(frozen=True)
class PromptTemplate:
    """Instruction text with {context} and {text} placeholders, bound to a stage."""

    id: str
    stage: int
    instruction: str

    def __post_init__(self) -> None:
        if self.stage not in (1, 2, 3):
            raise TemplateError(f"template {self.id!r}: stage must be 1, 2, or 3")
        if self.stage >= 2 and REGISTER_NEUTRALITY_CLAUSE not in self.instruction:
            raise TemplateError(
                f"template {self.id!r}: stage-{self.stage} instructions must contain "
                "the register-neutrality clause (labeling.REGISTER_NEUTRALITY_CLAUSE)"
            )


_VERDICT_REQUEST = (
    "Answer with exactly one token: RELEVANT or NOT_RELEVANT."
)

DEFAULT_TEMPLATES: dict[str, PromptTemplate] = {
    t.id: t
    for t in (
        PromptTemplate(
            id="stage1-formal",
            stage=1,
            instruction=(
                "You judge whether a text is meaningfully about a topic.\n"
                "Topic: {context}\n"
                "Text: {text}\n"
                "Is the text relevant to the topic? " + _VERDICT_REQUEST
            ),
        ),
        PromptTemplate(
            id="stage2-informal",
            stage=2,
            instruction=(
                "You judge whether a text is meaningfully about a topic.\n"
                "Topic: {context}\n"
                "Text: {text}\n"
                + REGISTER_NEUTRALITY_CLAUSE
                + "\nIs the text relevant to the topic? "
                + _VERDICT_REQUEST
            ),
        ),
        PromptTemplate(
            id="stage3-implicit",
            stage=3,
            instruction=(
                "You judge whether a text is meaningfully about a topic.\n"
                "Topic: {context}\n"
                "Text: {text}\n"
                + REGISTER_NEUTRALITY_CLAUSE
                + "\nThe text may express the topic implicitly, through personal "
                "experiences, complaints, or everyday observations, without naming "
                "it. Is the text relevant to the topic? " + _VERDICT_REQUEST
            ),
        ),
    )
}

STAGE_TEMPLATE_IDS = {1: "stage1-formal", 2: "stage2-informal", 3: "stage3-implicit"}


def template_for_stage(stage: int) -> PromptTemplate:
    try:
        return DEFAULT_TEMPLATES[STAGE_TEMPLATE_IDS[stage]]
    except KeyError:
        raise TemplateError(f"no default template for stage {stage!r}") from None


@dataclass(frozen=True)
class LabelRequest:
    context_description: str
    text: str
    stage: int
    prompt_template_id: str

    def __post_init__(self) -> None:
        if not normalize_text(self.context_description):
            raise InputError("label request: empty context description")
        if not normalize_text(self.text):
            raise InputError("label request: empty text")


@dataclass(frozen=True)
class LabelResult:
    label: Label
    provider_id: str
    cached: bool
    attempts: int

    def __post_init__(self) -> None:
        if self.cached and self.attempts != 0:
            raise InputError("cached results must report attempts = 0")
        if not self.cached and self.attempts < 1:
            raise InputError("fresh results must report attempts >= 1")


def render_prompt(template: PromptTemplate, request: LabelRequest) -> str:
    """Substitute {context} and {text} verbatim. Missing placeholders are an error."""
    for placeholder in ("{context}", "{text}"):
        if placeholder not in template.instruction:
            raise TemplateError(
                f"template {template.id!r} is missing the {placeholder} placeholder"
            )
    return template.instruction.replace("{context}", request.context_description).replace(
        "{text}", request.text
    )


def cache_key(template_id: str, context_description: str, text: str) -> str:
    """Key labels by template id + normalized inputs; prompt edits invalidate entries."""
    material = "\x1f".join(
        (template_id, normalize_text(context_description), normalize_text(text))
    )
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


class LabelCache:
    """Append-only JSONL label store, reloaded at startup, safe for concurrent use.

    Rows: {"key": ..., "label": ..., "provider_id": ..., "timestamp": ...}.
    A path of None keeps the cache purely in memory.
    """

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._entries: dict[str, tuple[Label, str]] = {}
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    row = json.loads(line)
                    self._entries[row["key"]] = (Label(row["label"]), row["provider_id"])

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> tuple[Label, str] | None:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: str, label: Label, provider_id: str) -> None:
        row = {
            "key": key,
            "label": label.value,
            "provider_id": provider_id,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }
        with self._lock:
            self._entries[key] = (label, provider_id)
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(row, ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff with jitter for transient provider failures."""

    max_attempts: int = 3
    initial_delay: float = 1.0
    factor: float = 2.0
    jitter: float = 0.2

    def delay(self, attempt: int, rng: random.Random) -> float:
        base = self.initial_delay * self.factor ** (attempt - 1)
        return base * (1.0 + rng.uniform(-self.jitter, self.jitter))


class LabelProvider(Protocol):
    provider_id: str

    def label(self, request: LabelRequest, prompt: str) -> str: ...


class MockLabelProvider:
    """Deterministic provider answering from a hidden ground-truth predicate.

    `truth(context_description, text)` returns whether the pair is relevant.
    Calls are recorded for instrumentation (cache and concurrency tests).
    """

    def __init__(self, truth: Callable[[str, str], bool], provider_id: str = "mock"):
        self._truth = truth
        self.provider_id = provider_id
        self.calls: list[LabelRequest] = []
        self._lock = threading.Lock()

    @classmethod
    def from_truth_table(
        cls,
        topic_by_context: Mapping[str, str],
        topic_by_text: Mapping[str, str | None],
        provider_id: str = "mock",
    ) -> "MockLabelProvider":
        """Build the predicate from normalized-description and normalized-text maps.

        Texts mapping to None are relevant to nothing (pure chatter).
        """

        def truth(context_description: str, text: str) -> bool:
            ctx_key = normalize_text(context_description)
            text_key = normalize_text(text)
            if ctx_key not in topic_by_context:
                raise ProviderFailure(f"mock provider has no topic for context {ctx_key!r}")
            if text_key not in topic_by_text:
                raise ProviderFailure(f"mock provider has no ground truth for text {text_key!r}")
            topic = topic_by_text[text_key]
            return topic is not None and topic == topic_by_context[ctx_key]

        return cls(truth, provider_id=provider_id)

    @property
    def call_count(self) -> int:
        return len(self.calls)

    def label(self, request: LabelRequest, prompt: str) -> str:
        with self._lock:
            self.calls.append(request)
        return (
            VERDICT_RELEVANT
            if self._truth(request.context_description, request.text)
            else VERDICT_NOT_RELEVANT
        )


class HttpLabelProvider:
    """LLM endpoint speaking the package wire format.

    POSTs {"model": ..., "prompt": ...} as JSON with a bearer token from
    RELEVANCY_LLM_API_KEY (or an explicit api_key). Expects a 200 response
    whose JSON body carries the verdict in a "completion" field. Transport
    failures and non-200 statuses raise ProviderFailure (retryable); a body
    outside the contract raises ProtocolError (not retryable).
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 30.0,
        session: requests.Session | None = None,
    ):
        if not endpoint:
            raise ConfigurationError("HTTP provider requires an endpoint URL")
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV_VAR)
        self.timeout = timeout
        self._session = session or requests.Session()
        self.provider_id = f"http:{model}"

    def post_completion(self, prompt: str) -> str:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = self._session.post(
                self.endpoint,
                json={"model": self.model, "prompt": prompt},
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise ProviderFailure(f"request to {self.endpoint} failed: {exc}") from exc
        if response.status_code != 200:
            raise ProviderFailure(
                f"provider returned HTTP {response.status_code}: {response.text[:200]}"
            )
        try:
            body = response.json()
            completion = body["completion"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ProtocolError(
                f"provider response is not a JSON object with a 'completion' field: "
                f"{response.text[:200]!r}"
            ) from exc
        if not isinstance(completion, str):
            raise ProtocolError(f"'completion' must be a string, got {type(completion).__name__}")
        return completion

    def label(self, request: LabelRequest, prompt: str) -> str:
        return self.post_completion(prompt)


def parse_verdict(raw: str) -> Label:
    verdict = raw.strip()
    if verdict == VERDICT_RELEVANT:
        return Label.RELEVANT
    if verdict == VERDICT_NOT_RELEVANT:
        return Label.NOT_RELEVANT
    raise ProtocolError(
        f"expected exactly {VERDICT_RELEVANT!r} or {VERDICT_NOT_RELEVANT!r}, got {raw!r}"
    )


def label_pair(
    provider: LabelProvider,
    request: LabelRequest,
    cache: LabelCache,
    templates: Mapping[str, PromptTemplate] | None = None,
    retry: RetryPolicy = RetryPolicy(),
    sleep: Callable[[float], None] = time.sleep,
    rng: random.Random | None = None,
) -> LabelResult:
    """Label one pair, going to the provider only on a cache miss.

    Successful fresh labels are written back to the cache keyed by
    (template id, normalized context, normalized text). Transient provider
    failures are retried with exponential backoff up to retry.max_attempts,
    then raised as LabelingError carrying the last failure.
    """
    templates = templates if templates is not None else DEFAULT_TEMPLATES
    template = templates.get(request.prompt_template_id)
    if template is None:
        raise TemplateError(f"unknown prompt template {request.prompt_template_id!r}")

    key = cache_key(request.prompt_template_id, request.context_description, request.text)
    hit = cache.get(key)
    if hit is not None:
        label, provider_id = hit
        return LabelResult(label=label, provider_id=provider_id, cached=True, attempts=0)

    prompt = render_prompt(template, request)
    rng = rng or random.Random()
    last_failure: ProviderFailure | None = None
    for attempt in range(1, retry.max_attempts + 1):
        try:
            raw = provider.label(request, prompt)
        except ProviderFailure as exc:
            last_failure = exc
            if attempt < retry.max_attempts:
                sleep(retry.delay(attempt, rng))
            continue
        label = parse_verdict(raw)
        cache.put(key, label, provider.provider_id)
        return LabelResult(
            label=label, provider_id=provider.provider_id, cached=False, attempts=attempt
        )
    raise LabelingError(
        f"provider {provider.provider_id!r} failed after {retry.max_attempts} attempts: "
        f"{last_failure}"
    ) from last_failure


def label_batch(
    provider: LabelProvider,
    requests_: Sequence[LabelRequest],
    cache: LabelCache,
    parallelism: int = 1,
    templates: Mapping[str, PromptTemplate] | None = None,
    retry: RetryPolicy = RetryPolicy(),
    sleep: Callable[[float], None] = time.sleep,
) -> list[LabelResult | RelevancyError]:
    """Label many pairs with at most `parallelism` provider calls in flight.

    Results align with request order. A failing request contributes its error
    object instead of aborting the batch.
    """
    if parallelism < 1:
        raise ConfigurationError(f"parallelism must be >= 1, got {parallelism}")
    if not requests_:
        return []

    def work(request: LabelRequest) -> LabelResult:
        return label_pair(
            provider, request, cache, templates=templates, retry=retry, sleep=sleep
        )

    results: list[LabelResult | RelevancyError] = []
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = [pool.submit(work, request) for request in requests_]
        for future in futures:
            try:
                results.append(future.result())
            except RelevancyError as exc:
                results.append(exc)
    return results


def request_for_pair(
    pair: PairExample,
    contexts_by_id: Mapping[str, TopicContext],
    texts_by_id: Mapping[str, TextSample],
) -> LabelRequest:
    """Build the labeling request for a candidate pair, using its stage template."""
    if pair.context_id not in contexts_by_id:
        raise InputError(f"pair references unknown context {pair.context_id!r}")
    if pair.text_id not in texts_by_id:
        raise InputError(f"pair references unknown text {pair.text_id!r}")
    return LabelRequest(
        context_description=contexts_by_id[pair.context_id].description,
        text=texts_by_id[pair.text_id].text,
        stage=pair.stage,
        prompt_template_id=STAGE_TEMPLATE_IDS[pair.stage],
    )


def label_candidate_pairs(
    provider: LabelProvider,
    pairs: Sequence[PairExample],
    contexts_by_id: Mapping[str, TopicContext],
    texts_by_id: Mapping[str, TextSample],
    cache: LabelCache,
    parallelism: int = 1,
    retry: RetryPolicy = RetryPolicy(),
    sleep: Callable[[float], None] = time.sleep,
) -> list[PairExample]:
    """Label candidate pairs via the provider, returning oracle-labeled copies.

    Pairs that already carry a label pass through untouched. Any per-request
    failure aborts with a LabelingError summarizing the batch, since a
    partially labeled dataset must not silently continue downstream.
    """
    pending = [p for p in pairs if p.label is None]
    requests_ = [request_for_pair(p, contexts_by_id, texts_by_id) for p in pending]
    results = label_batch(
        provider, requests_, cache, parallelism=parallelism, retry=retry, sleep=sleep
    )
    failures = [r for r in results if isinstance(r, RelevancyError)]
    if failures:
        raise LabelingError(
            f"{len(failures)} of {len(requests_)} label requests failed; first: {failures[0]}"
        ) from failures[0]

    labeled = iter(results)
    out = []
    for pair in pairs:
        if pair.label is not None:
            out.append(pair)
            continue
        result = next(labeled)
        assert isinstance(result, LabelResult)
        out.append(
            PairExample(
                context_id=pair.context_id,
                text_id=pair.text_id,
                label=result.label,
                stage=pair.stage,
                split=pair.split,
                label_source=LabelSource.ORACLE,
            )
        )
    return out
