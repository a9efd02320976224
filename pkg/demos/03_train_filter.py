"""Walkthrough: training the first-layer filter and weighing the loss asymmetry."""

import tempfile
from pathlib import Path

from cbrs import layer1
from cbrs.corpus import split
from cbrs.layer1 import Hyper
from cbrs.synth import imbalanced_bilingual_corpus, separable_corpus

# A quick model on the separable corpus. Desk-scale hyperparameters; the
# production defaults are dim=100, buckets=2^21, epochs=1000, lr=1.0.
corpus = separable_corpus(400, seed=13)
hyper = Hyper(dim=16, buckets=2**14, epochs=8, lr=0.5, seed=7)
model = layer1.train(corpus, hyper)

report = layer1.classification_report(model, corpus, timing_calls=2000)
print(f"train-set accuracy {report.accuracy:.3f}")
print(f"median forward {report.median_forward_seconds * 1e6:.0f} us")

for text in (
    "Urgent! 2 bags O+ blood needed at Square Hospital, Dhaka. Call 01712345678 today.",
    "Anyone up for cricket practice this evening at the field?",
):
    pred = layer1.forward(model, text)
    print(f"p_positive={pred.p_positive:.3f} label={pred.label}  {text[:60]}")

# The asymmetric loss in action: same data, same budget, alpha 1 vs 12.
stream = imbalanced_bilingual_corpus(2000, positive_rate=0.05, seed=29)
train_set, _, test_set = split(stream, (0.8, 0.1, 0.1), seed=1)
for alpha in (1.0, 12.0):
    h = Hyper(dim=16, buckets=2**14, epochs=3, lr=0.5, seed=3, alpha=alpha)
    m = layer1.train(train_set, h)
    fn = sum(1 for s in test_set if s.label == 1 and layer1.forward(m, s.text).label == 0)
    fp = sum(1 for s in test_set if s.label == 0 and layer1.forward(m, s.text).label == 1)
    print(f"alpha={alpha:>4}: held-out false negatives {fn}, false positives {fp}")

# Model files round-trip bit-exactly.
path = Path(tempfile.mkdtemp(prefix="cbrs-demo-")) / "filter.bin"
layer1.save_model(model, path)
loaded = layer1.load_model(path)
print(f"saved {path.stat().st_size} bytes; reload agrees:",
      layer1.forward(loaded, "rokto dorkar dhaka").label
      == layer1.forward(model, "rokto dorkar dhaka").label)
