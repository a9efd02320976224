"""Walkthrough: tree edit distance, the weighted parsing score, and the cost model."""

import numpy as np

from cbrs.evalkit import cost_report, evaluate_parser, parsing_score
from cbrs.layer2 import RulesBackend
from cbrs.schema import Contact, ParsedRequest, ParseOutcome
from cbrs.synth import goldset
from cbrs.ted import random_tree, ted_oracle, tree_edit_distance

# The distance engine agrees with an exhaustive mapping search on small trees.
rng = np.random.default_rng(0)
agree = all(
    tree_edit_distance(a, b) == ted_oracle(a, b)
    for a, b in ((random_tree(rng, 6), random_tree(rng, 6)) for _ in range(50))
)
print("Zhang-Shasha vs exhaustive oracle on 50 random pairs:", "agree" if agree else "DISAGREE")

# Scoring a prediction against gold: 80% field accuracy, 20% tree distance.
gold = ParseOutcome.positive(
    ParsedRequest(
        blood_group="AB-",
        bags_needed="2",
        location="AIIMS Hospital",
        hospital_name="AIIMS Hospital",
        location_markers=("Delhi",),
        probable_day="21/06",
        contacts=(Contact(contact_numbers=("981XXXXXXX", "724XXXXXXX")),),
    )
)
pred = ParseOutcome.positive(
    ParsedRequest(
        blood_group="AB-",
        bags_needed="2",
        location="AIIMS Hospital",
        hospital_name="AIIMS Hospital",
        location_markers=("AIIMS Hospital",),   # wrong marker
        probable_day="Jun_21",                   # unnormalized date
        probable_time="before 24:00",            # hallucinated time
        contacts=(Contact(contact_numbers=("981XXXXXXX", "724XXXXXXX")),),
    )
)
score = parsing_score(gold, pred)
print(f"field_accuracy={score.field_accuracy:.4f} ted={score.ted} "
      f"ted_normalized={score.ted_normalized:.4f} weighted={score.weighted:.4f}")

# Harness over a gold set: per-language and overall means.
items = goldset(45, seed=17)
report = evaluate_parser(RulesBackend(), items)
print(report.table())

# Dual-layer economics: only first-layer positives reach the paid parser.
print()
for volume, blood in ((15, 1), (55, 3), (95, 5)):
    print(cost_report(volume, blood, "0.0003").formatted())
