#!/usr/bin/env python3
"""Write the desk-scale toy corpus as pipeline input files plus a config.

Produces everything `relevancy pipeline` needs to run offline with the
deterministic mock providers:

    contexts.jsonl    topic registry
    texts.jsonl       stage-1/2 texts plus chatter controls
    topic_map.jsonl   text_id -> context_id (chatter texts are unmapped)
    truth.jsonl       hidden ground truth for the mock labeling oracle
    blocklists.jsonl  per-topic keyword blocklists
    synth_pools.jsonl per-topic generation pools for the mock generator
    config.yaml       desk-scale pipeline configuration

Usage:
    python scripts/make_toy_corpus.py --out data/toy --seed 7
"""

import argparse
import json
from pathlib import Path

from relevancy.corpus import write_contexts, write_texts
from relevancy.toydata import generate_toy_corpus

CONFIG_TEMPLATE = """\
# Desk-scale pipeline configuration (generated by make_toy_corpus.py).
paths:
  contexts: contexts.jsonl
  texts: texts.jsonl
  topic_map: topic_map.jsonl
  truth: truth.jsonl
  blocklists: blocklists.jsonl
  synth_pools: synth_pools.jsonl
  workdir: out
provider:
  kind: mock
generation:
  kind: mock
  implicit_per_topic: 12
  hard_negatives_per_topic: 4
  leak_rate: 0.2
  max_rejections: 60
budget:
  negatives_per_text: 3
  hard_fraction: 0.5
  hard_stratum_quantile: 0.25
labeling:
  parallelism: 4
train:
  backend: desk
  epochs: 12
  learning_rate: 0.01
  batch_size: 32
  max_sequence_length: 32
  patience: 4
  val_fraction: 0.15
  class_weighting: inverse_frequency
  vocab_size: 4096
  embedding_dim: 48
  hidden_dim: 64
seed: {seed}
"""


def write_jsonl(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/toy", help="output directory")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = generate_toy_corpus(seed=args.seed)

    write_contexts(out / "contexts.jsonl", corpus.contexts)
    write_texts(out / "texts.jsonl", corpus.texts)
    write_jsonl(
        out / "topic_map.jsonl",
        (
            {"text_id": text_id, "context_id": context_id}
            for text_id, context_id in corpus.topic_of_text.items()
        ),
    )
    write_jsonl(
        out / "truth.jsonl",
        (
            {"text": text, "topic_id": topic}
            for text, topic in corpus.truth_topic_by_text.items()
        ),
    )
    write_jsonl(
        out / "blocklists.jsonl",
        (
            {"topic_id": topic, "keywords": sorted(bl.keywords)}
            for topic, bl in corpus.blocklists.items()
        ),
    )
    write_jsonl(
        out / "synth_pools.jsonl",
        (
            {
                "topic_id": c.id,
                "implicit": corpus.implicit_pools[c.id],
                "hard_negative": corpus.hard_negative_pools[c.id],
                "leak_terms": corpus.leak_terms[c.id],
            }
            for c in corpus.contexts
        ),
    )
    (out / "config.yaml").write_text(CONFIG_TEMPLATE.format(seed=args.seed), encoding="utf-8")

    print(f"toy corpus written to {out}/ "
          f"({len(corpus.contexts)} contexts, {len(corpus.texts)} texts)")
    print(f"run: relevancy --config {out}/config.yaml pipeline")


if __name__ == "__main__":
    main()
