"""
Inducing a grammar from synthetic sentences
===========================================

Sample a treebank from a hidden random PCFG, train a small compound PCFG
on the words alone and compare its trees with the hidden ones.  This takes
about a minute on one CPU core.
"""

import logging

from cpcfg import evaluator as ev
from cpcfg.model import decode
from cpcfg.synth import SynthConfig, synthetic_corpus
from cpcfg.trainer import TrainConfig, perplexity, train_seed
from cpcfg.treebank import to_bracketed

logging.basicConfig(level=logging.INFO, format="%(message)s")

# The generator has 4 nonterminals, 8 preterminals and 50 words.
vocab, splits = synthetic_corpus(SynthConfig(n_train=1000, n_valid=100, n_test=200))
print({k: len(v) for k, v in splits.items()}, "vocabulary", len(vocab))

# Train one seed of the small preset.  The checkpoint with the lowest
# validation perplexity is kept.
config = TrainConfig(preset="small", epochs=6, seeds=[1])
result = train_seed(config, 1, splits["train"], splits["valid"], len(vocab))
best = result.checkpoint
print(f"best epoch {best.epoch}, validation perplexity {best.val_ppl:.2f}")

model = best.model()
print(f"test perplexity {perplexity(model, splits['test']):.2f}")

# Decode test sentences at the posterior mean and score the spans.
test = splits["test"].sentences
gold = [s.tree for s in test]
predicted = [tree.spans() for tree, _ in decode(model, test)]
report = ev.evaluate(gold, predicted, labels=[])
print(f"C-PCFG      S-F1 {report.sentence_f1:5.1f}  C-F1 {report.corpus_f1:5.1f}")
for mode in ("left", "right", "random"):
    r = ev.evaluate(gold, ev.baseline_predictions(mode, gold, seed=0), labels=[])
    print(f"{mode:11s} S-F1 {r.sentence_f1:5.1f}  C-F1 {r.corpus_f1:5.1f}")

# One short sentence side by side with its hidden tree.
example = min((s for s in test if len(s) >= 6), key=len)
tree, score = decode(model, [example])[0]
print("predicted:", tree.to_bracketed(example.tree.tokens))
print("gold:     ", to_bracketed(example.tree.tokens, example.tree.spans))
