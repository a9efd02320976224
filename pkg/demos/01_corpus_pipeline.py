"""Walkthrough: loading, deduplicating, language-tagging, and splitting a corpus."""

import tempfile
from pathlib import Path

from cbrs.corpus import deduplicate, load_corpus, save_corpus, split, tag_corpus_languages
from cbrs.synth import imbalanced_bilingual_corpus

workdir = Path(tempfile.mkdtemp(prefix="cbrs-demo-"))
corpus_path = workdir / "messages.jsonl"

# Build a synthetic stream of 500 messages (5% genuine requests) and write
# it in the line-delimited JSON format the loader expects.
save_corpus(imbalanced_bilingual_corpus(500, seed=29), corpus_path)
corpus = load_corpus(corpus_path)
print(f"loaded {len(corpus)} samples from {corpus_path} (skipped {corpus.skipped_lines})")

labels = corpus.label_counts()
print(f"label distribution: {labels[1]} requests / {labels[0]} non-requests")

deduped = deduplicate(corpus)
print(f"after dedup: {len(deduped)} samples")

tagged = tag_corpus_languages(deduped)
per_language = {}
for s in tagged:
    per_language[s.language] = per_language.get(s.language, 0) + 1
print("language tags:", dict(sorted(per_language.items())))

train, val, test = split(tagged, (0.8, 0.1, 0.1), seed=7)
print(f"80:10:10 split -> {len(train)} / {len(val)} / {len(test)}")
print("split is stratified: positives per part:",
      [sum(s.label for s in part) for part in (train, val, test)])
