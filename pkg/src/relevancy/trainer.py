"""Pair encoding and the class-weighted training loop with F1 early stopping.

The loop is backend-agnostic: a backend supplies a tokenizer, a probability
forward pass, and a parameter update for a weighted binary loss. Model
selection keeps the parameters of the best-F1 epoch, so every epoch is
checkpointed (in memory, and on disk when a checkpoint directory is given).
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .corpus import Label, PairExample, TextSample, TopicContext
from .errors import ConfigurationError, InputError, StateError, TrainingError
from .metrics import MetricsReport, confusion, metrics

INVERSE_FREQUENCY = "inverse_frequency"
NO_WEIGHTING = "none"


@dataclass
class TrainConfig:
    """Training hyperparameters. Defaults are the full-scale settings."""

    epochs: int = 5
    learning_rate: float = 2e-5
    batch_size: int = 16
    max_sequence_length: int = 256
    patience: int = 2
    val_fraction: float = 0.15
    class_weighting: str = INVERSE_FREQUENCY
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.patience < 0:
            raise ConfigurationError("patience must be >= 0")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigurationError("val_fraction must be in [0, 1)")
        if self.class_weighting not in (INVERSE_FREQUENCY, NO_WEIGHTING):
            raise ConfigurationError(
                f"class_weighting must be {INVERSE_FREQUENCY!r} or {NO_WEIGHTING!r}"
            )

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "max_sequence_length": self.max_sequence_length,
            "patience": self.patience,
            "val_fraction": self.val_fraction,
            "class_weighting": self.class_weighting,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ClassWeights:
    weight_relevant: float
    weight_not_relevant: float

    def __post_init__(self) -> None:
        if self.weight_relevant <= 0 or self.weight_not_relevant <= 0:
            raise ConfigurationError("class weights must be > 0")

    def for_label(self, label: Label) -> float:
        return self.weight_relevant if label == Label.RELEVANT else self.weight_not_relevant


UNIT_WEIGHTS = ClassWeights(1.0, 1.0)


def compute_class_weights(relevant_count: int, not_relevant_count: int) -> ClassWeights:
    """Inverse-frequency weights w_c = N / (K * N_c) over K = 2 classes.

    The weight ratio equals the inverse count ratio, and the count-weighted
    mean of the two weights is exactly 1.
    """
    if relevant_count <= 0 or not_relevant_count <= 0:
        raise ConfigurationError(
            f"both classes need examples, got relevant={relevant_count}, "
            f"not_relevant={not_relevant_count}"
        )
    total = relevant_count + not_relevant_count
    return ClassWeights(
        weight_relevant=total / (2 * relevant_count),
        weight_not_relevant=total / (2 * not_relevant_count),
    )


class Tokenizer(Protocol):
    start_id: int
    sep_id: int
    pad_id: int

    def token_ids(self, text: str) -> list[int]: ...


@dataclass(frozen=True)
class EncodedPair:
    """One start marker, context tokens, separator, text tokens, separator.

    Segment ids are 0 through the first separator and 1 after it, so backends
    can tell the two inputs apart.
    """

    token_ids: tuple[int, ...]
    segment_ids: tuple[int, ...]
    attention_mask: tuple[int, ...]


def encode_pair(
    context: str, text: str, tokenizer: Tokenizer, max_sequence_length: int
) -> EncodedPair:
    """Encode a context-text pair, truncating text tokens first, then context.

    Contexts are short topic descriptions carrying the conditioning signal, so
    they are the last thing cut. Both separators always survive truncation.
    """
    if max_sequence_length < 4:
        raise ConfigurationError(
            f"max_sequence_length must be >= 4 (markers plus one token per segment), "
            f"got {max_sequence_length}"
        )
    context_tokens = tokenizer.token_ids(context)
    text_tokens = tokenizer.token_ids(text)
    budget = max_sequence_length - 3
    context_keep = min(len(context_tokens), budget)
    text_keep = min(len(text_tokens), budget - context_keep)
    context_tokens = context_tokens[:context_keep]
    text_tokens = text_tokens[:text_keep]

    ids = [tokenizer.start_id, *context_tokens, tokenizer.sep_id, *text_tokens, tokenizer.sep_id]
    segments = [0] * (len(context_tokens) + 2) + [1] * (len(text_tokens) + 1)
    return EncodedPair(
        token_ids=tuple(ids),
        segment_ids=tuple(segments),
        attention_mask=tuple([1] * len(ids)),
    )


class EncoderBackend(Protocol):
    """Trainable scorer mapping encoded pairs to relevance probabilities."""

    tokenizer: Tokenizer
    max_sequence_length: int
    trained: bool

    def predict_proba(self, pairs: Sequence[EncodedPair]) -> np.ndarray: ...

    def train_batch(
        self,
        pairs: Sequence[EncodedPair],
        labels: np.ndarray,
        weights: np.ndarray,
        learning_rate: float,
    ) -> float: ...

    def get_state(self) -> dict: ...

    def set_state(self, state: dict) -> None: ...

    def save(self, directory: str | Path) -> None: ...


@dataclass(frozen=True)
class PairInstance:
    """A resolved training example: raw context description, raw text, label."""

    context: str
    text: str
    label: Label


def instances_from_pairs(
    pairs: Iterable[PairExample],
    contexts_by_id: Mapping[str, TopicContext],
    texts_by_id: Mapping[str, TextSample],
) -> list[PairInstance]:
    """Resolve PairExample references into raw (context, text, label) instances."""
    instances = []
    for pair in pairs:
        if pair.label is None:
            raise InputError(f"pair ({pair.context_id}, {pair.text_id}) is unlabeled")
        if pair.context_id not in contexts_by_id:
            raise InputError(f"pair references unknown context {pair.context_id!r}")
        if pair.text_id not in texts_by_id:
            raise InputError(f"pair references unknown text {pair.text_id!r}")
        instances.append(
            PairInstance(
                context=contexts_by_id[pair.context_id].description,
                text=texts_by_id[pair.text_id].text,
                label=pair.label,
            )
        )
    return instances


class EarlyStopper:
    """Stop when validation F1 has not strictly improved for `patience` epochs.

    After each epoch the streak of consecutive non-improving epochs is compared
    against the patience; patience 0 therefore stops after the first epoch.
    """

    def __init__(self, patience: int):
        if patience < 0:
            raise ConfigurationError("patience must be >= 0")
        self.patience = patience
        self.best_f1 = float("-inf")
        self.best_epoch = 0
        self.streak = 0

    def update(self, epoch: int, f1: float) -> bool:
        """Record one epoch's F1; return True when training should stop."""
        if f1 > self.best_f1:
            self.best_f1 = f1
            self.best_epoch = epoch
            self.streak = 0
        else:
            self.streak += 1
        return self.streak >= self.patience


def simulate_early_stopping(f1_trace: Sequence[float], patience: int) -> tuple[int, int]:
    """Run the patience rule over a fixed F1 trace.

    Returns (stop_epoch, best_epoch), both 1-indexed; stop_epoch is the last
    epoch that would run, len(trace) if training never stops early.
    """
    stopper = EarlyStopper(patience)
    for epoch, f1 in enumerate(f1_trace, start=1):
        if stopper.update(epoch, f1):
            return epoch, stopper.best_epoch
    return len(f1_trace), stopper.best_epoch


@dataclass
class TrainResult:
    backend: "EncoderBackend"
    history: list[MetricsReport] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0


def _evaluate(
    backend: EncoderBackend, encoded: Sequence[EncodedPair], truths: Sequence[Label]
) -> MetricsReport:
    probs = backend.predict_proba(encoded)
    preds = [Label.RELEVANT if p >= 0.5 else Label.NOT_RELEVANT for p in probs]
    return metrics(confusion(preds, truths))


def train(
    config: TrainConfig,
    train_pairs: Sequence[PairInstance],
    val_pairs: Sequence[PairInstance],
    backend: EncoderBackend,
    checkpoint_dir: str | Path | None = None,
    log_path: str | Path | None = None,
) -> TrainResult:
    """Train `backend` with weighted binary loss and F1-based early stopping.

    Runs at most config.epochs epochs, evaluating F1 on val_pairs after each.
    The returned backend carries the parameters of the best-F1 epoch. The
    training log (one JSONL record per epoch: epoch, accuracy, precision,
    recall, f1) is written to log_path when given; per-epoch checkpoints and a
    `best` marker go under checkpoint_dir when given.
    """
    if not train_pairs or not val_pairs:
        raise ConfigurationError("train and validation sets must both be non-empty")
    train_labels = {p.label for p in train_pairs}
    if len(train_labels) < 2:
        raise ConfigurationError(
            f"training set contains a single class ({next(iter(train_labels)).value}); "
            "both classes are required"
        )

    if config.class_weighting == INVERSE_FREQUENCY:
        relevant = sum(1 for p in train_pairs if p.label == Label.RELEVANT)
        weights = compute_class_weights(relevant, len(train_pairs) - relevant)
    else:
        weights = UNIT_WEIGHTS

    encoded_train = [
        encode_pair(p.context, p.text, backend.tokenizer, config.max_sequence_length)
        for p in train_pairs
    ]
    encoded_val = [
        encode_pair(p.context, p.text, backend.tokenizer, config.max_sequence_length)
        for p in val_pairs
    ]
    val_truths = [p.label for p in val_pairs]
    example_weights = np.array([weights.for_label(p.label) for p in train_pairs])
    example_labels = np.array(
        [1.0 if p.label == Label.RELEVANT else 0.0 for p in train_pairs]
    )

    checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    log_fh = None
    if log_path is not None:
        log_path = Path(log_path)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log_fh = open(log_path, "w", encoding="utf-8")

    rng = random.Random(config.seed)
    stopper = EarlyStopper(config.patience)
    result = TrainResult(backend=backend)
    best_state: dict | None = None
    try:
        order = list(range(len(train_pairs)))
        for epoch in range(1, config.epochs + 1):
            rng.shuffle(order)
            try:
                for start in range(0, len(order), config.batch_size):
                    batch = order[start : start + config.batch_size]
                    backend.train_batch(
                        [encoded_train[i] for i in batch],
                        example_labels[batch],
                        example_weights[batch],
                        config.learning_rate,
                    )
                report = _evaluate(backend, encoded_val, val_truths)
            except (ConfigurationError, StateError):
                raise
            except Exception as exc:
                raise TrainingError(f"backend failed during epoch {epoch}: {exc}") from exc

            result.history.append(report)
            result.stopped_epoch = epoch
            if log_fh is not None:
                log_fh.write(
                    json.dumps(
                        {
                            "epoch": epoch,
                            "accuracy": report.accuracy,
                            "precision": report.precision,
                            "recall": report.recall,
                            "f1": report.f1,
                        }
                    )
                    + "\n"
                )
            if checkpoint_dir is not None:
                backend.save(checkpoint_dir / f"epoch-{epoch}")

            improved = report.f1 > stopper.best_f1
            stop = stopper.update(epoch, report.f1)
            if improved:
                best_state = backend.get_state()
            if stop:
                break
    finally:
        if log_fh is not None:
            log_fh.close()

    result.best_epoch = stopper.best_epoch
    if best_state is not None:
        backend.set_state(best_state)
    backend.trained = True
    if checkpoint_dir is not None:
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
        (checkpoint_dir / "best").write_text(f"epoch-{result.best_epoch}\n", encoding="utf-8")
    return result


def predict(
    backend: EncoderBackend, context: str, text: str, threshold: float = 0.5
) -> tuple[Label, float]:
    """Score one pair with a trained backend; relevant iff score >= threshold."""
    if not getattr(backend, "trained", False):
        raise StateError("backend has not been trained; train it or load a checkpoint")
    encoded = encode_pair(context, text, backend.tokenizer, backend.max_sequence_length)
    score = float(backend.predict_proba([encoded])[0])
    label = Label.RELEVANT if score >= threshold else Label.NOT_RELEVANT
    return label, score
