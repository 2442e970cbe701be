"""
From bracketed trees to training data
=====================================

Gold trees arrive as one s-expression per line.  Preterminals become the
tokens and their POS tags; every other labelled node becomes a span.
"""

from cpcfg import treebank as tb

line = "(S (NP-SBJ (DT The) (NN dog)) (VP (VBZ barks) (PP (IN at) (NP (NNS cats)))) (. .))"
tree = tb.parse_bracketed(line)
print(tree.tokens)
print(sorted(tree.spans))

# Punctuation is removed by POS tag, and spans are re-indexed.
clean = tb.strip_punctuation(tree)
print(clean.tokens)
print(sorted(clean.spans))

# Spans plus tokens are enough to rebuild the bracketing.
print(tb.to_bracketed(clean.tokens, clean.spans, clean.pos_tags))

# Malformed input reports the character offset of the problem.
try:
    tb.parse_bracketed("(S (NP")
except tb.BracketError as exc:
    print("error:", exc)

# The vocabulary keeps the most frequent training tokens, with <unk> at 0,
# and splits drop one-token sentences and over-long training sentences.
more = [tb.strip_punctuation(tb.parse_bracketed(s)) for s in [
    "(S (NP (DT The) (NN cat)) (VP (VBZ sleeps)))",
    "(S (NP (NNS dogs)) (VP (VBP bark)))",
    "(S (INTJ (UH Wow)) (. !))",
]]
vocab = tb.build_vocab([clean] + more, cap=5)
print(vocab.itos)
splits = tb.make_splits({"train": [clean] + more}, vocab, max_train_len=4)
for s in splits["train"].sentences:
    print(s.tree.tokens, "->", s.ids)
