"""
Inside, Viterbi and the enumeration oracle
==========================================

A rule table holds three blocks of log-probabilities: start rules S -> A,
binary rules A -> B C over nonterminals and preterminals, and emissions
T -> w.  The inside chart sums over every binary tree; CYK keeps the best.
"""

import numpy as np

from cpcfg.chart import enumerate_parses, expected_rule_counts, inside_logZ, viterbi_parse
from cpcfg.grammar import RuleTable, random_table

# One nonterminal, one preterminal, one word, and a uniform binary block:
# every tree over n tokens has probability (1/4)^(n-1).
uniform = RuleTable.from_arrays([0.0], np.full((1, 2, 2), np.log(0.25)), [[0.0]])
print("logZ, 2 tokens:", inside_logZ([0, 0], uniform).item(), "=", np.log(1 / 4))
print("logZ, 3 tokens:", inside_logZ([0, 0, 0], uniform).item(), "=", np.log(1 / 8))

# Both 3-token shapes tie; the smallest split wins.
tree, score = viterbi_parse([0, 0, 0], uniform)
print(tree.to_bracketed(["a", "b", "c"]), score)

# A random grammar.  Brute force over all 14 shapes and all labelings gives
# the same numbers as the chart.
rng = np.random.default_rng(0)
table = RuleTable.from_arrays(*random_table(rng, 2, 3, 5))
ids = [4, 0, 2, 2, 1]
parses = enumerate_parses(ids, table)
scores = np.array([s for _, s in parses])
print(len(parses), "labelled parses")
print("inside   ", inside_logZ(ids, table).item())
print("enumerate", np.logaddexp.reduce(scores))
print("viterbi  ", viterbi_parse(ids, table)[1], "vs max", scores.max())

# Expected rule counts come from differentiating logZ with respect to the
# log-probabilities.  A binary tree over n tokens has n - 1 internal nodes.
counts = expected_rule_counts(ids, table)
print("expected binary rule uses:", counts["binary"].sum())

# Sentences of equal length are processed together as a batch.
batch = rng.integers(0, 5, size=(3, 6))
print("batched logZ:", inside_logZ(batch, table).data)
