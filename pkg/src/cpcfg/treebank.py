"""Bracketed treebank reading, punctuation removal, vocabulary and splits."""

import json
import re
from collections import Counter
from dataclasses import dataclass, field

from .checkpoint import atomic_write

DEFAULT_PUNCT_TAGS = frozenset({".", ",", ":", "``", "''", "-LRB-", "-RRB-", "#", "$", "PUNC", "PU"})
EMPTY_TAGS = frozenset({"-NONE-"})
UNK = "<unk>"

_TOKEN = re.compile(r"\(|\)|[^\s()]+")


class BracketError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class EmptySentence(ValueError):
    """Raised when a tree has no tokens left after punctuation removal."""


@dataclass
class GoldTree:
    tokens: list
    pos_tags: list
    spans: set = field(default_factory=set)

    def __len__(self):
        return len(self.tokens)

    def unlabeled(self):
        return {(s, e) for s, e, _ in self.spans}


def base_label(label):
    """Strip function tags and indices: ``NP-SBJ-1`` -> ``NP``, ``NP=2`` -> ``NP``."""
    if not label or label.startswith("-"):
        return label
    return re.split(r"[-=]", label, maxsplit=1)[0] or label


def _tokenize(line):
    return [(m.group(), m.start()) for m in _TOKEN.finditer(line)]


def parse_bracketed(line, strip_function_tags=True):
    """Read one PTB-style s-expression.

    Preterminal nodes ``(TAG word)`` become tokens and POS tags; every other
    labelled node contributes a (start, end, label) span.  An unlabelled
    outer wrapper, as in ``( (S ...) )``, contributes nothing.
    """
    toks = _tokenize(line)
    if not toks:
        raise BracketError("empty input", 0)
    tokens, tags, spans = [], [], set()
    pos = 0

    def node():
        nonlocal pos
        if pos >= len(toks):
            raise BracketError("unexpected end of input", len(line))
        tok, off = toks[pos]
        if tok != "(":
            raise BracketError(f"expected '(' but found {tok!r}", off)
        pos += 1
        label = ""
        if pos < len(toks) and toks[pos][0] not in "()":
            label = toks[pos][0]
            pos += 1
        start = len(tokens)
        if pos >= len(toks):
            raise BracketError("unexpected end of input", len(line))
        tok, off = toks[pos]
        if tok not in "()":
            # preterminal: (TAG word)
            pos += 1
            if pos >= len(toks):
                raise BracketError("unexpected end of input", len(line))
            if toks[pos][0] != ")":
                raise BracketError("preterminal must hold exactly one word", toks[pos][1])
            pos += 1
            tokens.append(tok)
            tags.append(label)
            return
        n_children = 0
        while True:
            if pos >= len(toks):
                raise BracketError("unexpected end of input", len(line))
            tok, off = toks[pos]
            if tok == ")":
                pos += 1
                break
            if tok != "(":
                raise BracketError(f"bare word {tok!r} inside a phrase", off)
            node()
            n_children += 1
        if n_children == 0:
            raise BracketError("empty constituent", off)
        if label:
            spans.add((start, len(tokens), base_label(label) if strip_function_tags else label))

    node()
    if pos != len(toks):
        raise BracketError("trailing material after tree", toks[pos][1])
    return GoldTree(tokens, tags, spans)


def strip_punctuation(tree, punct_tags=DEFAULT_PUNCT_TAGS):
    """Delete leaves whose POS tag is in ``punct_tags`` and re-index spans.

    Spans that lose all their tokens are dropped; spans that collapse onto
    the same (start, end, label) merge.  Raises EmptySentence when nothing
    is left.
    """
    keep = [tag not in punct_tags for tag in tree.pos_tags]
    if not any(keep):
        raise EmptySentence("all tokens are punctuation")
    before = [0]
    for k in keep:
        before.append(before[-1] + k)
    spans = set()
    for s, e, label in tree.spans:
        ns, ne = before[s], before[e]
        if ne > ns:
            spans.add((ns, ne, label))
    tokens = [t for t, k in zip(tree.tokens, keep) if k]
    tags = [t for t, k in zip(tree.pos_tags, keep) if k]
    return GoldTree(tokens, tags, spans)


def to_bracketed(tokens, spans, pos_tags=None):
    """Rebuild a bracketed string from a nesting span set."""
    ordered = sorted(spans, key=lambda sp: (sp[0], -sp[1], sp[2]))
    out = []
    stack = []
    idx = 0

    def leaf(i):
        return f"({pos_tags[i]} {tokens[i]})" if pos_tags else tokens[i]

    def close_until(pos):
        while stack and stack[-1] <= pos:
            out.append(")")
            stack.pop()

    for s, e, label in ordered:
        while idx < s:
            close_until(idx)
            out.append(leaf(idx))
            idx += 1
            close_until(idx)
        close_until(s)
        out.append(f"({label}")
        stack.append(e)
    while idx < len(tokens):
        close_until(idx)
        out.append(leaf(idx))
        idx += 1
    close_until(len(tokens))
    body = " ".join(out).replace("( ", "(").replace(" )", ")")
    if not (len(ordered) and ordered[0][0] == 0 and ordered[0][1] == len(tokens)):
        body = f"( {body} )"
    return body


@dataclass
class Vocab:
    itos: list
    unk_id: int = 0

    def __post_init__(self):
        self.stoi = {w: i for i, w in enumerate(self.itos)}

    def __len__(self):
        return len(self.itos)

    def encode(self, tokens):
        return [self.stoi.get(t, self.unk_id) for t in tokens]

    def to_json(self):
        return {"itos": self.itos, "unk_id": self.unk_id}

    @classmethod
    def from_json(cls, d):
        return cls(list(d["itos"]), d.get("unk_id", 0))


def build_vocab(trees, cap=10000):
    """Keep the ``cap`` most frequent training tokens; id 0 is ``<unk>``.

    Ties in frequency break lexicographically.
    """
    counts = Counter(t for tree in trees for t in tree.tokens)
    if not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:cap]
    return Vocab([UNK] + [w for w, _ in ranked])


@dataclass
class Sentence:
    ids: list
    tree: GoldTree

    def __len__(self):
        return len(self.ids)


@dataclass
class Corpus:
    split: str
    sentences: list

    def __len__(self):
        return len(self.sentences)


def make_splits(trees, vocab, max_train_len=40):
    """Numericalise each split; length-cap the training split only.

    ``trees`` maps split name to a list of punctuation-stripped GoldTrees.
    Sentences shorter than two tokens are dropped everywhere.
    """
    out = {}
    for split, items in trees.items():
        sents = []
        for tree in items:
            if len(tree) < 2:
                continue
            if split == "train" and max_train_len is not None and len(tree) > max_train_len:
                continue
            sents.append(Sentence(vocab.encode(tree.tokens), tree))
        out[split] = Corpus(split, sents)
    return out


def read_bracketed_file(path, strip_function_tags=True):
    trees = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                trees.append(parse_bracketed(line.strip(), strip_function_tags))
            except BracketError as exc:
                raise BracketError(f"{path}:{lineno}: {exc.args[0]}", exc.offset) from None
    return trees


def sentence_to_json(sent):
    t = sent.tree
    return {
        "tokens": t.tokens,
        "pos": t.pos_tags,
        "ids": list(sent.ids),
        "spans": [list(sp) for sp in sorted(t.spans)],
    }


def sentence_from_json(d):
    tree = GoldTree(list(d["tokens"]), list(d.get("pos", [])), {(s, e, l) for s, e, l in d["spans"]})
    return Sentence(list(d["ids"]), tree)


def write_corpus(path, corpus):
    lines = [json.dumps(sentence_to_json(s), sort_keys=True) + "\n" for s in corpus.sentences]
    atomic_write(path, "".join(lines))


def read_corpus(path, split=None):
    with open(path, encoding="utf-8") as f:
        sents = [sentence_from_json(json.loads(line)) for line in f if line.strip()]
    return Corpus(split or "", sents)
