"""Synthetic treebanks sampled from a fixed random PCFG.

The generator grammar has the same form as the learned one: start rules,
binary rules over nonterminals and preterminals, and preterminal emissions.
Each word belongs to exactly one preterminal and each nonterminal has a
handful of binary expansions, which keeps the structure recoverable.
"""

import json
import logging
from dataclasses import asdict, dataclass

import numpy as np

log = logging.getLogger(__name__)


class UnproductiveGrammar(RuntimeError):
    pass


@dataclass
class SynthConfig:
    n_nonterminals: int = 4
    n_preterminals: int = 8
    vocab_size: int = 50
    rules_per_nonterminal: int = 3
    n_train: int = 2000
    n_valid: int = 250
    n_test: int = 250
    max_len: int = 20
    min_len: int = 2
    seed: int = 13
    min_mass: float = 0.5
    min_mean_len: float = 8.0
    max_draws: int = 1000


@dataclass
class GeneratorPCFG:
    start: np.ndarray  # (NT,)
    rules: list  # per nonterminal: list of (B, C) symbol ids in chart numbering
    rule_probs: list  # per nonterminal: probabilities aligned with ``rules``
    emit: np.ndarray  # (T, V)
    n_nonterminals: int

    @property
    def n_preterminals(self):
        return self.emit.shape[0]

    def label(self, sym):
        nt = self.n_nonterminals
        return f"N{sym}" if sym < nt else f"P{sym - nt}"

    def length_distribution(self, max_len):
        """P(sentence length = k) for k = 0..max_len, by dynamic programming."""
        nt, t = self.n_nonterminals, self.n_preterminals
        dist = np.zeros((nt + t, max_len + 1))
        dist[nt:, 1] = 1.0
        for k in range(2, max_len + 1):
            for a in range(nt):
                total = 0.0
                for (b, c), p in zip(self.rules[a], self.rule_probs[a]):
                    total += p * sum(dist[b, j] * dist[c, k - j] for j in range(1, k))
                dist[a, k] = total
        return self.start @ dist[:nt]

    def to_json(self):
        return {
            "start": self.start.tolist(),
            "rules": [[list(r) for r in rs] for rs in self.rules],
            "rule_probs": [list(map(float, p)) for p in self.rule_probs],
            "emit": self.emit.tolist(),
            "n_nonterminals": self.n_nonterminals,
        }


def draw_grammar(config, rng):
    nt, t, v = config.n_nonterminals, config.n_preterminals, config.vocab_size
    if v < t:
        raise ValueError("need at least one word per preterminal")
    s = nt + t
    start = rng.dirichlet(np.ones(nt))
    rules, probs = [], []
    pairs = [(b, c) for b in range(s) for c in range(s)]
    for _ in range(nt):
        chosen = rng.choice(len(pairs), size=config.rules_per_nonterminal, replace=False)
        rules.append([pairs[i] for i in chosen])
        probs.append(rng.dirichlet(np.ones(config.rules_per_nonterminal)))
    owner = rng.permutation(np.arange(v) % t)
    emit = np.zeros((t, v))
    for p in range(t):
        words = np.flatnonzero(owner == p)
        emit[p, words] = rng.dirichlet(np.ones(len(words)))
    return GeneratorPCFG(start, rules, probs, emit, nt)


def productive_grammar(config, rng):
    """Draw grammars until one puts enough mass on usable sentence lengths.

    The mean-length target is capped at 0.4 * ``max_len`` so that short
    ``max_len`` settings remain satisfiable.
    """
    target = min(config.min_mean_len, 0.4 * config.max_len)
    for attempt in range(config.max_draws):
        g = draw_grammar(config, rng)
        dist = g.length_distribution(config.max_len)
        window = dist[config.min_len :]
        mass = window.sum()
        mean = (np.arange(config.min_len, config.max_len + 1) * window).sum() / max(mass, 1e-300)
        if mass >= config.min_mass and mean >= target:
            return g
        log.info("grammar draw %d rejected: length mass %.3f, mean length %.2f", attempt, mass, mean)
    raise UnproductiveGrammar(f"no productive grammar after {config.max_draws} draws")


class _TooLong(Exception):
    pass


def sample_tree(g, rng, max_len):
    """One (tokens, bracketed string) sample, or raise _TooLong."""
    nt = g.n_nonterminals
    words = []

    def expand(sym, depth=0):
        if depth >= max_len:
            raise _TooLong
        if sym >= nt:
            if len(words) >= max_len:
                raise _TooLong
            w = int(rng.choice(g.emit.shape[1], p=g.emit[sym - nt]))
            words.append(w)
            return f"({g.label(sym)} w{w:02d})"
        r = int(rng.choice(len(g.rules[sym]), p=g.rule_probs[sym]))
        b, c = g.rules[sym][r]
        left = expand(b, depth + 1)
        right = expand(c, depth + 1)
        return f"({g.label(sym)} {left} {right})"

    root = int(rng.choice(nt, p=g.start))
    return words, expand(root)


def sample_corpus(config):
    """Returns (grammar, {split: [bracketed lines]})."""
    rng = np.random.default_rng(config.seed)
    g = productive_grammar(config, rng)
    splits = {}
    for split, count in (("train", config.n_train), ("valid", config.n_valid), ("test", config.n_test)):
        lines = []
        while len(lines) < count:
            try:
                words, tree = sample_tree(g, rng, config.max_len)
            except _TooLong:
                continue
            if len(words) >= config.min_len:
                lines.append(tree)
        splits[split] = lines
    return g, splits


def conditional_length_distribution(g, config):
    dist = g.length_distribution(config.max_len)
    dist[: config.min_len] = 0.0
    return dist / dist.sum()


def dump_grammar(g, config):
    return json.dumps({"config": asdict(config), "grammar": g.to_json()}, sort_keys=True, indent=1)


def synthetic_corpus(config=None, max_train_len=40):
    """Sample, strip and numericalise a synthetic treebank in one go.

    Returns ``(vocab, {split: Corpus})``.
    """
    from . import treebank as tb

    _, lines = sample_corpus(config or SynthConfig())
    trees = {split: [tb.parse_bracketed(line) for line in ls] for split, ls in lines.items()}
    vocab = tb.build_vocab(trees["train"])
    return vocab, tb.make_splits(trees, vocab, max_train_len)
