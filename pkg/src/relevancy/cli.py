"""Command-line entry point wiring the pipeline stages together.

Subcommands: ingest, build-pairs, label, synth, split, train, evaluate,
predict, report, and pipeline (all stages in order). Exit codes: 0 success,
1 domain error, 2 usage error. All randomness flows from --seed (or the
config's seed).
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

from . import corpus
from .backends import DeskEncoderBackend, TransformerBackend, load_backend
from .config import HTTP, MOCK, PipelineConfig, load_pipeline_config
from .errors import ConfigurationError, RelevancyError
from .labeling import (
    HttpLabelProvider,
    LabelCache,
    MockLabelProvider,
    RetryPolicy,
    label_candidate_pairs,
)
from .metrics import confusion, format_metrics_table, metrics
from .pairgen import build_candidate_pairs, derive_seed, topic_similarity
from .synthgen import (
    GenerationSpec,
    HttpGenerationProvider,
    KeywordBlocklist,
    MockGenerationProvider,
    Polarity,
    generate_hard_negatives,
    generate_implicit,
)
from .trainer import encode_pair, instances_from_pairs, predict, train

# Artifact names under the working directory.
TEXTS_CLEAN = "texts_clean.jsonl"
CANDIDATES = "candidates.jsonl"
PAIRS_LABELED = "pairs_labeled.jsonl"
TEXTS_FULL = "texts_full.jsonl"
PAIRS_FULL = "pairs_full.jsonl"
PAIRS_SPLIT = "pairs_split.jsonl"
MANIFEST = "manifest.json"
CACHE_FILE = "label_cache.jsonl"
CHECKPOINTS = "checkpoints"
TRAINING_LOG = "training_log.jsonl"
METRICS_JSON = "metrics_report.json"
METRICS_TABLE = "metrics_table.txt"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relevancy",
        description="Build relevancy datasets and train/evaluate the pair classifier.",
    )
    parser.add_argument("--config", default="relevancy.yaml", help="pipeline config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument(
        "--stage", type=int, choices=(1, 2, 3), default=None,
        help="restrict build-pairs/label to one construction stage",
    )
    parser.add_argument(
        "--parallelism", type=int, default=None, help="override labeling parallelism"
    )
    parser.add_argument(
        "--threshold", type=float, default=None, help="override the decision threshold"
    )
    parser.add_argument(
        "--no-class-weights", action="store_true", help="disable inverse-frequency weighting"
    )

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", help="normalize and deduplicate raw texts")
    sub.add_parser("build-pairs", help="generate candidate pairs with stratified negatives")
    sub.add_parser("label", help="label candidate pairs through the configured provider")
    sub.add_parser("synth", help="generate stage-3 implicit texts and hard negatives")
    sub.add_parser("split", help="assign a stratified train/validation split")
    sub.add_parser("train", help="train the classifier on the split dataset")
    sub.add_parser("evaluate", help="score the best checkpoint on the validation split")

    p_predict = sub.add_parser("predict", help="classify one context/text pair")
    p_predict.add_argument("--context", required=True)
    p_predict.add_argument("--text", required=True)

    p_report = sub.add_parser("report", help="print a manifest as a dataset table")
    p_report.add_argument("--manifest", default=None, help="manifest JSON path")

    sub.add_parser("pipeline", help="run every stage in order")
    return parser


def _apply_overrides(cfg: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.parallelism is not None:
        cfg.labeling.parallelism = args.parallelism
    if args.threshold is not None:
        cfg.train.threshold = args.threshold
    if args.no_class_weights:
        cfg.train.class_weighting = "none"
    return cfg


def _read_topic_map(path: Path) -> dict[str, str]:
    mapping = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                row = json.loads(line)
                mapping[row["text_id"]] = row["context_id"]
    return mapping


def _read_truth(path: Path) -> dict[str, str | None]:
    truth: dict[str, str | None] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                row = json.loads(line)
                truth[corpus.normalize_text(row["text"])] = row["topic_id"]
    return truth


def _read_blocklists(path: Path) -> dict[str, KeywordBlocklist]:
    blocklists = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                row = json.loads(line)
                blocklists[row["topic_id"]] = KeywordBlocklist.from_keywords(
                    row["topic_id"], row["keywords"]
                )
    return blocklists


def _read_synth_pools(path: Path):
    pools: dict[tuple[str, Polarity], list[str]] = {}
    leak_terms: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            topic = row["topic_id"]
            pools[(topic, Polarity.IMPLICIT_POSITIVE)] = row.get("implicit", [])
            pools[(topic, Polarity.HARD_NEGATIVE)] = row.get("hard_negative", [])
            leak_terms[topic] = row.get("leak_terms", [])
    return pools, leak_terms


def _label_provider(cfg: PipelineConfig):
    if cfg.provider.kind == HTTP:
        return HttpLabelProvider(cfg.provider.endpoint, cfg.provider.model)
    cfg.require_inputs("truth", "contexts")
    contexts = corpus.read_contexts(cfg.resolve(cfg.paths.contexts))
    topic_by_context = {corpus.normalize_text(c.description): c.id for c in contexts}
    truth = _read_truth(cfg.resolve(cfg.paths.truth))
    return MockLabelProvider.from_truth_table(topic_by_context, truth)


def _generation_provider(cfg: PipelineConfig, blocklists):
    if cfg.generation.kind == HTTP:
        return HttpGenerationProvider(
            cfg.generation.endpoint, cfg.generation.model, blocklists=blocklists
        )
    cfg.require_inputs("synth_pools")
    pools, leak_terms = _read_synth_pools(cfg.resolve(cfg.paths.synth_pools))
    return MockGenerationProvider(
        pools, leak_terms=leak_terms, leak_rate=cfg.generation.leak_rate
    )


def _retry_policy(cfg: PipelineConfig) -> RetryPolicy:
    return RetryPolicy(
        max_attempts=cfg.labeling.max_attempts,
        initial_delay=cfg.labeling.initial_delay,
        factor=cfg.labeling.backoff_factor,
        jitter=cfg.labeling.jitter,
    )


def _build_backend(cfg: PipelineConfig):
    if cfg.train.backend == "transformer":
        if not cfg.train.model_name_or_path:
            raise ConfigurationError("train.model_name_or_path is required for the transformer backend")
        return TransformerBackend(
            model_name_or_path=cfg.train.model_name_or_path,
            max_sequence_length=cfg.train.max_sequence_length,
            seed=cfg.seed,
        )
    return DeskEncoderBackend(
        vocab_size=cfg.train.vocab_size,
        embedding_dim=cfg.train.embedding_dim,
        hidden_dim=cfg.train.hidden_dim,
        max_sequence_length=cfg.train.max_sequence_length,
        seed=cfg.seed,
    )


def _load_best_backend(cfg: PipelineConfig):
    marker = cfg.artifact(CHECKPOINTS) / "best"
    if not marker.exists():
        raise ConfigurationError(
            f"no best-checkpoint marker at {marker}; run the train stage first"
        )
    epoch_dir = cfg.artifact(CHECKPOINTS) / marker.read_text(encoding="utf-8").strip()
    return load_backend(epoch_dir)


# --- subcommands -----------------------------------------------------------


def cmd_ingest(cfg: PipelineConfig, args) -> int:
    cfg.require_inputs("texts", "contexts")
    texts = corpus.read_texts(cfg.resolve(cfg.paths.texts))
    contexts = corpus.read_contexts(cfg.resolve(cfg.paths.contexts))
    corpus.ContextRegistry(contexts)  # validates ids and domains
    kept = corpus.dedup_samples(texts)
    corpus.write_texts(cfg.artifact(TEXTS_CLEAN), kept)
    print(f"ingest: {len(texts)} texts in, {len(kept)} kept, "
          f"{len(texts) - len(kept)} duplicates dropped")
    return 0


def cmd_build_pairs(cfg: PipelineConfig, args) -> int:
    cfg.require_inputs("contexts", "topic_map")
    contexts = corpus.read_contexts(cfg.resolve(cfg.paths.contexts))
    texts = corpus.read_texts(cfg.artifact(TEXTS_CLEAN))
    if args.stage is not None:
        texts = [t for t in texts if t.stage == args.stage]
    topic_map = _read_topic_map(cfg.resolve(cfg.paths.topic_map))
    matrix = topic_similarity(contexts)

    mapped = [t for t in texts if t.id in topic_map]
    unmapped = [t for t in texts if t.id not in topic_map]
    pairs = build_candidate_pairs(mapped, topic_map, matrix, cfg.budget, cfg.seed)

    # Texts without a home topic (chatter controls) get negative-only pairs.
    context_ids = [c.id for c in contexts]
    per_text = min(2, len(context_ids))
    for text in unmapped:
        rng = random.Random(derive_seed(cfg.seed, f"unmapped:{text.id}"))
        for context_id in rng.sample(context_ids, per_text):
            pairs.append(
                corpus.PairExample(
                    context_id=context_id,
                    text_id=text.id,
                    label=None,
                    stage=text.stage,
                    split=corpus.Split.UNASSIGNED,
                    label_source=corpus.LabelSource.PENDING,
                )
            )
    corpus.check_unique_pairs(pairs)
    corpus.write_pairs(cfg.artifact(CANDIDATES), pairs)
    print(f"build-pairs: {len(pairs)} candidates from {len(texts)} texts "
          f"({len(unmapped)} unmapped texts got negative-only pairs)")
    return 0


def cmd_label(cfg: PipelineConfig, args) -> int:
    cfg.require_inputs("contexts")
    contexts = corpus.read_contexts(cfg.resolve(cfg.paths.contexts))
    texts = corpus.read_texts(cfg.artifact(TEXTS_CLEAN))
    pairs = corpus.read_pairs(cfg.artifact(CANDIDATES))
    if args.stage is not None:
        pairs = [p for p in pairs if p.stage == args.stage]
    provider = _label_provider(cfg)
    cache = LabelCache(cfg.artifact(CACHE_FILE))
    labeled = label_candidate_pairs(
        provider,
        pairs,
        {c.id: c for c in contexts},
        {t.id: t for t in texts},
        cache,
        parallelism=cfg.labeling.parallelism,
        retry=_retry_policy(cfg),
    )
    corpus.write_pairs(cfg.artifact(PAIRS_LABELED), labeled)
    relevant = sum(1 for p in labeled if p.label == corpus.Label.RELEVANT)
    print(f"label: {len(labeled)} pairs labeled ({relevant} relevant), "
          f"cache now holds {len(cache)} entries")
    return 0


def cmd_synth(cfg: PipelineConfig, args) -> int:
    cfg.require_inputs("blocklists")
    blocklists = _read_blocklists(cfg.resolve(cfg.paths.blocklists))
    provider = _generation_provider(cfg, blocklists)
    texts = corpus.read_texts(cfg.artifact(TEXTS_CLEAN))
    pairs = corpus.read_pairs(cfg.artifact(PAIRS_LABELED))

    rejected = 0
    for topic_id in sorted(blocklists):
        implicit = generate_implicit(
            provider,
            GenerationSpec(
                topic_id=topic_id,
                count=cfg.generation.implicit_per_topic,
                style_directive="personal experiences, complaints, everyday observations",
                polarity=Polarity.IMPLICIT_POSITIVE,
            ),
            blocklists[topic_id],
            max_rejections=cfg.generation.max_rejections,
        )
        hard = generate_hard_negatives(
            provider,
            GenerationSpec(
                topic_id=topic_id,
                count=cfg.generation.hard_negatives_per_topic,
                style_directive="superficially related texts about other topics",
                polarity=Polarity.HARD_NEGATIVE,
            ),
        )
        texts.extend(implicit.samples)
        texts.extend(hard.samples)
        pairs.extend(implicit.pairs)
        pairs.extend(hard.pairs)
        rejected += implicit.rejected

    corpus.write_texts(cfg.artifact(TEXTS_FULL), texts)
    corpus.check_unique_pairs(pairs)
    corpus.write_pairs(cfg.artifact(PAIRS_FULL), pairs)
    print(f"synth: {len(blocklists)} topics, rejected {rejected} leaking candidates, "
          f"{len(pairs)} total pairs")
    return 0


def cmd_split(cfg: PipelineConfig, args) -> int:
    pairs = corpus.read_pairs(cfg.artifact(PAIRS_FULL))
    train_pairs, val_pairs = corpus.stratified_split(
        pairs, cfg.train.val_fraction, cfg.seed
    )
    split_by_key = {p.key: p for p in train_pairs}
    split_by_key.update({p.key: p for p in val_pairs})
    ordered = [split_by_key[p.key] for p in pairs]
    corpus.write_pairs(cfg.artifact(PAIRS_SPLIT), ordered)
    manifest = corpus.build_manifest(ordered)
    corpus.write_manifest(cfg.artifact(MANIFEST), manifest)
    print(f"split: {len(train_pairs)} train / {len(val_pairs)} validation "
          f"(fraction {cfg.train.val_fraction})")
    return 0


def cmd_train(cfg: PipelineConfig, args) -> int:
    cfg.require_inputs("contexts")
    contexts = corpus.read_contexts(cfg.resolve(cfg.paths.contexts))
    texts = corpus.read_texts(cfg.artifact(TEXTS_FULL))
    pairs = corpus.read_pairs(cfg.artifact(PAIRS_SPLIT))
    contexts_by_id = {c.id: c for c in contexts}
    texts_by_id = {t.id: t for t in texts}
    train_inst = instances_from_pairs(
        [p for p in pairs if p.split == corpus.Split.TRAIN], contexts_by_id, texts_by_id
    )
    val_inst = instances_from_pairs(
        [p for p in pairs if p.split == corpus.Split.VALIDATION], contexts_by_id, texts_by_id
    )
    backend = _build_backend(cfg)
    result = train(
        cfg.train.train_config(cfg.seed),
        train_inst,
        val_inst,
        backend,
        checkpoint_dir=cfg.artifact(CHECKPOINTS),
        log_path=cfg.artifact(TRAINING_LOG),
    )
    best = result.history[result.best_epoch - 1]
    print(f"train: ran {result.stopped_epoch} epoch(s), best epoch {result.best_epoch} "
          f"with validation F1 {best.f1:.3f}")
    return 0


def cmd_evaluate(cfg: PipelineConfig, args) -> int:
    cfg.require_inputs("contexts")
    contexts = corpus.read_contexts(cfg.resolve(cfg.paths.contexts))
    texts = corpus.read_texts(cfg.artifact(TEXTS_FULL))
    pairs = corpus.read_pairs(cfg.artifact(PAIRS_SPLIT))
    val_inst = instances_from_pairs(
        [p for p in pairs if p.split == corpus.Split.VALIDATION],
        {c.id: c for c in contexts},
        {t.id: t for t in texts},
    )
    backend = _load_best_backend(cfg)
    encoded = [
        encode_pair(p.context, p.text, backend.tokenizer, backend.max_sequence_length)
        for p in val_inst
    ]
    probs = backend.predict_proba(encoded)
    preds = [
        corpus.Label.RELEVANT if p >= cfg.train.threshold else corpus.Label.NOT_RELEVANT
        for p in probs
    ]
    report = metrics(confusion(preds, [p.label for p in val_inst]))
    cfg.artifact(METRICS_JSON).write_text(
        json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    table = format_metrics_table([("validation", report)])
    cfg.artifact(METRICS_TABLE).write_text(table + "\n", encoding="utf-8")
    print(table)
    return 0


def cmd_predict(cfg: PipelineConfig, args) -> int:
    backend = _load_best_backend(cfg)
    label, score = predict(backend, args.context, args.text, threshold=cfg.train.threshold)
    print(f"{label.value} {score:.3f}")
    return 0


def cmd_report(cfg: PipelineConfig, args) -> int:
    explicit = getattr(args, "manifest", None)
    manifest_path = Path(explicit) if explicit else cfg.artifact(MANIFEST)
    if not manifest_path.exists():
        raise ConfigurationError(f"manifest {manifest_path} does not exist")
    manifest = corpus.read_manifest(manifest_path)
    header = f"{'Stage':<10} {'Pairs':>10} {'Relevant':>10} {'Not rel.':>10} {'Contexts':>10}"
    print(header)
    print("-" * len(header))
    for stage, rec in manifest.stages:
        print(f"{stage:<10} {rec.pair_count:>10,} {rec.relevant_count:>10,} "
              f"{rec.not_relevant_count:>10,} {rec.context_count:>10,}")
    totals = manifest.totals
    print(f"{'Total':<10} {totals.pair_count:>10,} {totals.relevant_count:>10,} "
          f"{totals.not_relevant_count:>10,} {totals.context_count:>10,}")
    return 0


def cmd_pipeline(cfg: PipelineConfig, args) -> int:
    for step in (cmd_ingest, cmd_build_pairs, cmd_label, cmd_synth, cmd_split,
                 cmd_train, cmd_evaluate, cmd_report):
        code = step(cfg, args)
        if code != 0:
            return code
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "build-pairs": cmd_build_pairs,
    "label": cmd_label,
    "synth": cmd_synth,
    "split": cmd_split,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "report": cmd_report,
    "pipeline": cmd_pipeline,
}


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        cfg = load_pipeline_config(args.config)
        cfg = _apply_overrides(cfg, args)
        cfg.workdir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except RelevancyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    return run_command(argv)


if __name__ == "__main__":
    sys.exit(main())
