"""
Scoring trees: F1, label recall and length breakdowns
=====================================================

Only non-trivial spans count: single tokens and the whole sentence are
dropped before comparison.  Corpus F1 pools counts over all sentences,
sentence F1 averages per-sentence scores.
"""

import numpy as np

from cpcfg import evaluator as ev
from cpcfg.treebank import parse_bracketed

gold = [parse_bracketed(s) for s in [
    "(S (NP (DT the) (NN dog)) (VP (VBD chased) (NP (DT a) (NN cat))))",
    "(S (NP (PRP she)) (VP (VBD sat) (PP (IN on) (NP (DT the) (NN mat)))))",
    "(S (NP (NNS birds)) (VP (VBP sing)))",
]]

# Predicted span sets; these might come from ``cpcfg parse``.
predicted = [
    {(0, 2), (2, 5), (3, 5)},
    {(0, 2), (2, 6), (4, 6)},
    set(),
]
report = ev.evaluate(gold, predicted)
print(f"corpus F1 {report.corpus_f1:.2f}, sentence F1 {report.sentence_f1:.2f}")
print("recall by label:", report.label_recall)

# Width buckets show where the errors are.
print(report.length_csv())
print("NP widths:", report.label_distribution["NP"])

# Trivial baselines need no model.  Random trees are uniform over binary
# tree shapes, so each of the five 4-token shapes turns up about 20% of the time.
print("right branching, n=5:", sorted(ev.baseline_tree("right", 5)))
print("left branching,  n=5:", sorted(ev.baseline_tree("left", 5)))
rng = np.random.default_rng(0)
shapes = {}
for _ in range(10_000):
    key = tuple(sorted(ev.baseline_tree("random", 4, rng=rng)))
    shapes[key] = shapes.get(key, 0) + 1
for key, count in sorted(shapes.items()):
    print(key, count / 10_000)
