"""Dataset entities, text normalization, manifest accounting, and stratified splits.

All operations here are pure functions over immutable records, so they are safe
to call concurrently. JSONL readers/writers for the on-disk formats live at the
bottom of the module.
"""

from __future__ import annotations

import json
import math
import random
import unicodedata
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import AccountingError, ConfigurationError, InputError


class Register(str, Enum):
    FORMAL = "formal"
    INFORMAL = "informal"
    IMPLICIT_SYNTHETIC = "implicit-synthetic"


class Label(str, Enum):
    RELEVANT = "relevant"
    NOT_RELEVANT = "not_relevant"


class Split(str, Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    UNASSIGNED = "unassigned"


class LabelSource(str, Enum):
    ORACLE = "oracle"
    SYNTHETIC_CONSTRUCTION = "synthetic-construction"
    MANUAL = "manual"
    PENDING = "pending"


# Register is determined by the construction stage that produced the text.
STAGE_REGISTER = {
    1: Register.FORMAL,
    2: Register.INFORMAL,
    3: Register.IMPLICIT_SYNTHETIC,
}


def normalize_text(raw: str) -> str:
    """Lowercase, Unicode-normalize (NFKC), and collapse all whitespace runs.

    Punctuation and diacritics are kept: slang texts differ meaningfully in
    punctuation, and folding further would merge genuinely distinct posts.
    """
    return " ".join(unicodedata.normalize("NFKC", raw).lower().split())


@dataclass(frozen=True)
class TopicContext:
    """A topic description used as the first classifier input."""

    id: str
    description: str
    domain: str

    def __post_init__(self) -> None:
        if not self.id:
            raise InputError("context id must be non-empty")
        if not normalize_text(self.description):
            raise InputError(f"context {self.id!r}: description is empty after normalization")


@dataclass(frozen=True)
class TextSample:
    """A candidate text with register and provenance metadata."""

    id: str
    text: str
    register: Register
    stage: int
    source: str = ""

    def __post_init__(self) -> None:
        if not self.id:
            raise InputError("text id must be non-empty")
        if not normalize_text(self.text):
            raise InputError(f"text {self.id!r}: empty after normalization")
        if self.stage not in STAGE_REGISTER:
            raise InputError(f"text {self.id!r}: stage must be 1, 2, or 3, got {self.stage!r}")
        expected = STAGE_REGISTER[self.stage]
        if self.register != expected:
            raise InputError(
                f"text {self.id!r}: stage {self.stage} requires register "
                f"{expected.value!r}, got {self.register.value!r}"
            )


@dataclass(frozen=True)
class PairExample:
    """A (context, text) pair, optionally labeled and assigned to a split."""

    context_id: str
    text_id: str
    label: Label | None
    stage: int
    split: Split = Split.UNASSIGNED
    label_source: LabelSource = LabelSource.PENDING

    def __post_init__(self) -> None:
        if self.stage not in STAGE_REGISTER:
            raise InputError(f"pair ({self.context_id}, {self.text_id}): bad stage {self.stage!r}")
        if self.split != Split.UNASSIGNED and self.label is None:
            raise InputError(
                f"pair ({self.context_id}, {self.text_id}): split {self.split.value} "
                "requires a label"
            )

    @property
    def key(self) -> tuple[str, str]:
        return (self.context_id, self.text_id)


class ContextRegistry:
    """Topic contexts with unique ids and a declared domain set.

    If `domains` is omitted, the declared set is derived from the contexts
    themselves.
    """

    def __init__(self, contexts: Iterable[TopicContext], domains: Iterable[str] | None = None):
        contexts = list(contexts)
        self.domains = frozenset(domains) if domains is not None else frozenset(
            c.domain for c in contexts
        )
        self._by_id: dict[str, TopicContext] = {}
        for ctx in contexts:
            if ctx.id in self._by_id:
                raise InputError(f"duplicate context id {ctx.id!r}")
            if ctx.domain not in self.domains:
                raise InputError(
                    f"context {ctx.id!r}: domain {ctx.domain!r} not in the declared set"
                )
            self._by_id[ctx.id] = ctx
        self._ordered = tuple(contexts)

    def __len__(self) -> int:
        return len(self._ordered)

    def __iter__(self):
        return iter(self._ordered)

    def __contains__(self, context_id: str) -> bool:
        return context_id in self._by_id

    def get(self, context_id: str) -> TopicContext:
        try:
            return self._by_id[context_id]
        except KeyError:
            raise InputError(f"unknown context id {context_id!r}") from None

    @property
    def contexts(self) -> tuple[TopicContext, ...]:
        return self._ordered


@dataclass(frozen=True)
class ManifestRecord:
    """Counts for one stage (or the totals row) of a dataset manifest."""

    pair_count: int
    relevant_count: int
    not_relevant_count: int
    context_count: int

    def __post_init__(self) -> None:
        if self.pair_count != self.relevant_count + self.not_relevant_count:
            raise AccountingError(
                f"pair_count {self.pair_count} != relevant {self.relevant_count} "
                f"+ not_relevant {self.not_relevant_count}"
            )


@dataclass(frozen=True)
class DatasetManifest:
    """Per-stage dataset accounting plus a totals record.

    Pair/label totals are column sums of the stage records. The totals
    context_count is the number of *distinct* contexts across stages, since a
    context typically contributes pairs to several stages.
    """

    stages: tuple[tuple[int, ManifestRecord], ...]
    totals: ManifestRecord

    def stage_record(self, stage: int) -> ManifestRecord:
        for s, record in self.stages:
            if s == stage:
                return record
        raise InputError(f"manifest has no record for stage {stage}")


def dedup_samples(samples: Sequence[TextSample]) -> list[TextSample]:
    """Drop texts whose normalized form was already seen, keeping input order."""
    seen: set[str] = set()
    kept = []
    for sample in samples:
        key = normalize_text(sample.text)
        if key in seen:
            continue
        seen.add(key)
        kept.append(sample)
    return kept


def build_manifest(pairs: Sequence[PairExample]) -> DatasetManifest:
    """Tally labeled pairs into per-stage counts plus totals.

    Raises AccountingError naming the first unlabeled pair encountered.
    """
    per_stage_counts: dict[int, dict[str, int]] = {}
    per_stage_contexts: dict[int, set[str]] = {}
    all_contexts: set[str] = set()
    for pair in pairs:
        if pair.label is None:
            raise AccountingError(
                f"unlabeled pair ({pair.context_id}, {pair.text_id}) cannot be counted"
            )
        counts = per_stage_counts.setdefault(pair.stage, {"pairs": 0, "relevant": 0})
        counts["pairs"] += 1
        if pair.label == Label.RELEVANT:
            counts["relevant"] += 1
        per_stage_contexts.setdefault(pair.stage, set()).add(pair.context_id)
        all_contexts.add(pair.context_id)

    stage_records = []
    for stage in sorted(per_stage_counts):
        counts = per_stage_counts[stage]
        stage_records.append(
            (
                stage,
                ManifestRecord(
                    pair_count=counts["pairs"],
                    relevant_count=counts["relevant"],
                    not_relevant_count=counts["pairs"] - counts["relevant"],
                    context_count=len(per_stage_contexts[stage]),
                ),
            )
        )
    totals = ManifestRecord(
        pair_count=sum(r.pair_count for _, r in stage_records),
        relevant_count=sum(r.relevant_count for _, r in stage_records),
        not_relevant_count=sum(r.not_relevant_count for _, r in stage_records),
        context_count=len(all_contexts),
    )
    return DatasetManifest(stages=tuple(stage_records), totals=totals)


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def stratified_split(
    pairs: Sequence[PairExample], val_fraction: float, seed: int
) -> tuple[list[PairExample], list[PairExample]]:
    """Partition labeled pairs into train/validation preserving label proportions.

    The validation set holds round(val_fraction * N) pairs, apportioned across
    labels by largest-remainder rounding so every label's validation share is
    within one pair of val_fraction times that label's count. Pair selection
    within a label is a seeded uniform draw. Returned pairs carry their split
    assignment; input order is preserved within each part.
    """
    if not 0.0 <= val_fraction <= 1.0:
        raise ConfigurationError(f"val_fraction must be in [0, 1], got {val_fraction}")
    for pair in pairs:
        if pair.label is None:
            raise AccountingError(
                f"unlabeled pair ({pair.context_id}, {pair.text_id}) cannot be split"
            )

    n = len(pairs)
    total_val = _round_half_up(val_fraction * n)

    by_label: dict[Label, list[int]] = {}
    for i, pair in enumerate(pairs):
        by_label.setdefault(pair.label, []).append(i)

    # Largest-remainder apportionment of total_val across labels.
    labels = sorted(by_label, key=lambda lab: lab.value)
    quotas = {lab: val_fraction * len(by_label[lab]) for lab in labels}
    counts = {lab: math.floor(quotas[lab]) for lab in labels}
    leftover = total_val - sum(counts.values())
    for lab in sorted(labels, key=lambda lab: (-(quotas[lab] - counts[lab]), lab.value)):
        if leftover <= 0:
            break
        if counts[lab] < len(by_label[lab]):
            counts[lab] += 1
            leftover -= 1

    rng = random.Random(seed)
    val_indices: set[int] = set()
    for lab in labels:
        indices = list(by_label[lab])
        rng.shuffle(indices)
        val_indices.update(indices[: counts[lab]])

    train, validation = [], []
    for i, pair in enumerate(pairs):
        if i in val_indices:
            validation.append(replace(pair, split=Split.VALIDATION))
        else:
            train.append(replace(pair, split=Split.TRAIN))
    return train, validation


def check_unique_pairs(pairs: Sequence[PairExample]) -> None:
    """Raise InputError if any (context_id, text_id) key occurs twice."""
    seen: set[tuple[str, str]] = set()
    for pair in pairs:
        if pair.key in seen:
            raise InputError(f"duplicate pair key {pair.key}")
        seen.add(pair.key)


# ---------------------------------------------------------------------------
# On-disk formats (JSONL rows, one object per line; manifest is a JSON object)
# ---------------------------------------------------------------------------


def _write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def write_texts(path: str | Path, samples: Iterable[TextSample]) -> None:
    _write_jsonl(
        Path(path),
        (
            {
                "id": s.id,
                "text": s.text,
                "register": s.register.value,
                "stage": s.stage,
                "source": s.source,
            }
            for s in samples
        ),
    )


def read_texts(path: str | Path) -> list[TextSample]:
    return [
        TextSample(
            id=row["id"],
            text=row["text"],
            register=Register(row["register"]),
            stage=int(row["stage"]),
            source=row.get("source", ""),
        )
        for row in _read_jsonl(Path(path))
    ]


def write_contexts(path: str | Path, contexts: Iterable[TopicContext]) -> None:
    _write_jsonl(
        Path(path),
        ({"id": c.id, "description": c.description, "domain": c.domain} for c in contexts),
    )


def read_contexts(path: str | Path) -> list[TopicContext]:
    return [
        TopicContext(id=row["id"], description=row["description"], domain=row["domain"])
        for row in _read_jsonl(Path(path))
    ]


def write_pairs(path: str | Path, pairs: Iterable[PairExample]) -> None:
    rows = []
    for p in pairs:
        row = {"context_id": p.context_id, "text_id": p.text_id}
        if p.label is not None:
            row["label"] = p.label.value
        row.update(
            {"stage": p.stage, "split": p.split.value, "label_source": p.label_source.value}
        )
        rows.append(row)
    _write_jsonl(Path(path), rows)


def read_pairs(path: str | Path) -> list[PairExample]:
    pairs = []
    for row in _read_jsonl(Path(path)):
        raw_label = row.get("label")
        pairs.append(
            PairExample(
                context_id=row["context_id"],
                text_id=row["text_id"],
                label=Label(raw_label) if raw_label is not None else None,
                stage=int(row["stage"]),
                split=Split(row.get("split", "unassigned")),
                label_source=LabelSource(row.get("label_source", "pending")),
            )
        )
    return pairs


def manifest_to_dict(manifest: DatasetManifest) -> dict:
    def record(rec: ManifestRecord) -> dict:
        return {
            "pair_count": rec.pair_count,
            "relevant_count": rec.relevant_count,
            "not_relevant_count": rec.not_relevant_count,
            "context_count": rec.context_count,
        }

    return {
        "stages": [{"stage": stage, **record(rec)} for stage, rec in manifest.stages],
        "totals": record(manifest.totals),
    }


def manifest_from_dict(data: Mapping) -> DatasetManifest:
    def record(raw: Mapping) -> ManifestRecord:
        return ManifestRecord(
            pair_count=int(raw["pair_count"]),
            relevant_count=int(raw["relevant_count"]),
            not_relevant_count=int(raw["not_relevant_count"]),
            context_count=int(raw["context_count"]),
        )

    stages = tuple((int(s["stage"]), record(s)) for s in data["stages"])
    return DatasetManifest(stages=stages, totals=record(data["totals"]))


def write_manifest(path: str | Path, manifest: DatasetManifest) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest_to_dict(manifest), fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def read_manifest(path: str | Path) -> DatasetManifest:
    with open(path, encoding="utf-8") as fh:
        return manifest_from_dict(json.load(fh))
