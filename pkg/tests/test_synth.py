import json
import math

import numpy as np
import pytest

from cpcfg import synth
from cpcfg.treebank import parse_bracketed, to_bracketed


def small(**kw):
    base = dict(n_train=300, n_valid=20, n_test=20, seed=13)
    base.update(kw)
    return synth.SynthConfig(**base)


def test_corpus_is_reproducible():
    g1, a = synth.sample_corpus(small())
    g2, b = synth.sample_corpus(small())
    assert a == b
    assert synth.dump_grammar(g1, small()) == synth.dump_grammar(g2, small())
    _, c = synth.sample_corpus(small(seed=14))
    assert c != a


def test_split_sizes_and_lengths():
    config = small()
    _, splits = synth.sample_corpus(config)
    assert {k: len(v) for k, v in splits.items()} == {"train": 300, "valid": 20, "test": 20}
    for line in splits["train"]:
        n = len(parse_bracketed(line).tokens)
        assert config.min_len <= n <= config.max_len


def test_trees_parse_and_are_binary():
    _, splits = synth.sample_corpus(small())
    for line in splits["train"][:50]:
        t = parse_bracketed(line)
        assert len(t.spans) == len(t.tokens) - 1
        assert parse_bracketed(to_bracketed(t.tokens, t.spans, t.pos_tags)).spans == t.spans


def test_grammar_is_normalised_and_emissions_disjoint():
    g = synth.productive_grammar(small(), np.random.default_rng(0))
    assert g.start.sum() == pytest.approx(1.0)
    for probs in g.rule_probs:
        assert sum(probs) == pytest.approx(1.0)
    np.testing.assert_allclose(g.emit.sum(axis=1), 1.0)
    assert ((g.emit > 0).sum(axis=0) == 1).all()
    json.dumps(g.to_json())


def test_length_histogram_matches_dynamic_program():
    config = small(n_train=3000, n_valid=0, n_test=0)
    g, splits = synth.sample_corpus(config)
    expected = synth.conditional_length_distribution(g, config)
    lengths = np.bincount([len(parse_bracketed(line).tokens) for line in splits["train"]],
                          minlength=config.max_len + 1)
    n = lengths.sum()
    for k in range(config.min_len, config.max_len + 1):
        p = expected[k]
        assert abs(lengths[k] / n - p) <= 4 * math.sqrt(p * (1 - p) / n) + 1e-3, k


def test_unproductive_grammar_reported():
    config = small(min_mean_len=1e9, max_draws=3)
    with pytest.raises(synth.UnproductiveGrammar):
        synth.productive_grammar(config, np.random.default_rng(0))


def test_synthetic_corpus_helper():
    vocab, splits = synth.synthetic_corpus(small(), max_train_len=10)
    assert all(len(s) <= 10 for s in splits["train"].sentences)
    assert vocab.itos[0] == "<unk>"
