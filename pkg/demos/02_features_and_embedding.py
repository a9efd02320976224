"""Walkthrough: subword units, hashed features, embedding bag, tf-idf."""

import numpy as np

from cbrs.corpus import Corpus, LabeledSample
from cbrs.textrep import (
    embed_message,
    hash_features,
    subword_units,
    tfidf_fit,
    tfidf_transform,
    tokenize,
    word_ngrams,
)

text = "need O- blood!"
words = tokenize(text)
print(f"tokenize({text!r}) -> {words}")

units = subword_units("blood", 3, 6)
print(f"subword_units('blood', 3, 6): {len(units)} units")
print("  ", list(units))

grams = word_ngrams(["urgent", "blood", "needed", "today"], 3)
print(f"word n-grams (orders 2..3) of 4 words: {len(grams)}")

buckets = 1 << 16
ids = hash_features(units, buckets)
print(f"hashed into {buckets} buckets: {ids[:6]} ...")

# Embedding bag: average subword rows per word, then average across the
# message (word n-grams join the outer average).
rng = np.random.default_rng(0)
table = rng.normal(scale=0.1, size=(buckets, 8))
vec = embed_message(words, table, minn=3, maxn=6, word_n=3)
print(f"message vector shape {vec.shape}, norm {np.linalg.norm(vec):.4f}")

# The baseline featurizer: unigram+bigram tf-idf.
docs = Corpus(samples=(
    LabeledSample(text="urgent blood needed at Dhaka", label=1),
    LabeledSample(text="lunch plans for tomorrow", label=0),
    LabeledSample(text="blood donation camp announcement", label=0),
))
vocab = tfidf_fit(docs)
sparse = tfidf_transform(vocab, "urgent blood needed")
print(f"tf-idf vocabulary size {len(vocab)}; transformed vector has {len(sparse)} nonzeros")
print("L2 norm:", round(sum(v * v for v in sparse.values()) ** 0.5, 6))
