"""Unlabeled span F1, label recall, length breakdowns and trivial baselines.

All comparisons use span sets: duplicate spans (unary chains) count once,
single-token spans and the whole-sentence span are ignored.
"""

import csv
import io
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

DEFAULT_LABELS = ("NP", "VP", "PP", "SBAR", "ADJP", "ADVP")
UNDEFINED = None


def filter_spans(spans, n):
    """Drop width-1 and whole-sentence spans; accepts (s, e) or (s, e, label)."""
    return {(sp[0], sp[1]) for sp in spans if sp[1] - sp[0] > 1 and not (sp[0] == 0 and sp[1] == n)}


def filter_labeled(spans, n):
    return {sp for sp in spans if sp[1] - sp[0] > 1 and not (sp[0] == 0 and sp[1] == n)}


def _f1(tp, n_pred, n_gold):
    if n_pred == 0 or n_gold == 0 or tp == 0:
        return 0.0
    p, r = tp / n_pred, tp / n_gold
    return 200.0 * p * r / (p + r)


def f1_scores(pairs):
    """(corpus F1, sentence F1) in percent over filtered (gold, pred) span sets.

    Sentence F1 averages per-sentence F1 over sentences with non-empty gold.
    Corpus F1 is micro-averaged from summed counts.
    """
    if not pairs:
        raise ValueError("no sentences to score")
    tp = n_pred = n_gold = 0
    per_sentence = []
    for gold, pred in pairs:
        gold, pred = set(gold), set(pred)
        hit = len(gold & pred)
        tp += hit
        n_pred += len(pred)
        n_gold += len(gold)
        if gold:
            per_sentence.append(_f1(hit, len(pred), len(gold)))
    sent = float(np.mean(per_sentence)) if per_sentence else 0.0
    return _f1(tp, n_pred, n_gold), sent


def label_recall(items, labels=DEFAULT_LABELS):
    """Corpus-level recall per gold label under unlabeled matching.

    ``items`` yields (gold labeled spans, predicted spans) pairs, both already
    filtered.  Labels that never occur in gold map to ``None``.
    """
    found, total = Counter(), Counter()
    for gold, pred in items:
        pred = {(s, e) for s, e, *_ in pred}
        for s, e, label in gold:
            total[label] += 1
            if (s, e) in pred:
                found[label] += 1
    return {lab: (100.0 * found[lab] / total[lab] if total[lab] else UNDEFINED) for lab in labels}


def length_breakdown(items, labels=DEFAULT_LABELS):
    """F1 by constituent width and label distributions over widths.

    ``items`` yields (gold labeled spans, predicted spans), filtered.  A
    labeled gold span counts once per distinct (start, end) toward the
    width buckets and once per label toward the label distributions.

    Returns ``{"by_length": {w: {"f1", "gold", "pred", "tp"}},
    "label_distribution": {label: {w: fraction}}}``; the ``"All"`` entry of
    the label distribution is the width distribution of all gold spans.
    """
    tp, n_pred, n_gold = Counter(), Counter(), Counter()
    label_counts = defaultdict(Counter)
    for gold, pred in items:
        gold_unl = {(s, e) for s, e, *_ in gold}
        pred_unl = {(s, e) for s, e, *_ in pred}
        for s, e in gold_unl:
            n_gold[e - s] += 1
            if (s, e) in pred_unl:
                tp[e - s] += 1
        for s, e in pred_unl:
            n_pred[e - s] += 1
        for sp in gold:
            if len(sp) > 2:
                label_counts[sp[2]][sp[1] - sp[0]] += 1
    widths = sorted(set(n_gold) | set(n_pred))
    by_length = {
        w: {"f1": _f1(tp[w], n_pred[w], n_gold[w]), "gold": n_gold[w], "pred": n_pred[w], "tp": tp[w]}
        for w in widths
    }
    dist = {}
    total_gold = sum(n_gold.values())
    dist["All"] = {w: n_gold[w] / total_gold for w in sorted(n_gold)} if total_gold else {}
    for lab in labels:
        c = label_counts.get(lab, Counter())
        tot = sum(c.values())
        dist[lab] = {w: c[w] / tot for w in sorted(c)} if tot else {}
    return {"by_length": by_length, "label_distribution": dist}


# ---------------------------------------------------------------------------
# baselines


@lru_cache(maxsize=None)
def catalan(k):
    return math.comb(2 * k, k) // (k + 1)


def random_tree_spans(n, rng):
    """All spans of a binary tree drawn uniformly from the Catalan(n-1) shapes.

    A span of m leaves puts k leaves on the left with probability
    Catalan(k-1) * Catalan(m-k-1) / Catalan(m-1).
    """
    spans = set()
    todo = [(0, n)]
    while todo:
        i, j = todo.pop()
        m = j - i
        if m < 2:
            continue
        spans.add((i, j))
        weights = np.array([catalan(k - 1) * catalan(m - k - 1) for k in range(1, m)], dtype=float)
        k = 1 + int(rng.choice(m - 1, p=weights / weights.sum()))
        todo.append((i, i + k))
        todo.append((i + k, j))
    return spans


def baseline_tree(mode, n, seed=None, rng=None):
    """Non-trivial spans of a left-branching, right-branching or random tree."""
    if n < 2:
        raise ValueError("baseline trees need n >= 2")
    if mode == "left":
        return {(0, k) for k in range(2, n)}
    if mode == "right":
        return {(k, n) for k in range(1, n - 1)}
    if mode == "random":
        rng = rng if rng is not None else np.random.default_rng(seed)
        return filter_spans(random_tree_spans(n, rng), n)
    raise ValueError(f"unknown baseline {mode!r}")


# ---------------------------------------------------------------------------
# reports


@dataclass
class EvalReport:
    corpus_f1: float
    sentence_f1: float
    label_recall: dict
    by_length: dict
    label_distribution: dict
    sentences: int
    extra: dict = field(default_factory=dict)

    def to_json(self):
        def keys_to_str(d):
            return {str(k): v for k, v in d.items()}

        return {
            "corpus_f1": self.corpus_f1,
            "sentence_f1": self.sentence_f1,
            "label_recall": self.label_recall,
            "by_length": keys_to_str(self.by_length),
            "label_distribution": {lab: keys_to_str(d) for lab, d in self.label_distribution.items()},
            "sentences": self.sentences,
            **self.extra,
        }

    def summary_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "label", "length", "value"])
        w.writerow(["corpus_f1", "", "", _fmt(self.corpus_f1)])
        w.writerow(["sentence_f1", "", "", _fmt(self.sentence_f1)])
        for lab, v in self.label_recall.items():
            w.writerow(["recall", lab, "", _fmt(v)])
        return buf.getvalue()

    def length_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["length", "f1", "gold", "pred", "tp"])
        for width, row in sorted(self.by_length.items()):
            w.writerow([width, _fmt(row["f1"]), row["gold"], row["pred"], row["tp"]])
        return buf.getvalue()

    def label_length_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", "length", "fraction"])
        for lab, d in self.label_distribution.items():
            for width, frac in sorted(d.items()):
                w.writerow([lab, width, _fmt(frac)])
        return buf.getvalue()


def _fmt(v):
    return "" if v is None else repr(float(v))


def evaluate(gold_trees, predicted, labels=DEFAULT_LABELS):
    """Score predictions against gold.

    ``gold_trees`` are treebank GoldTree objects; ``predicted`` is a list of
    span sets aligned by index.
    """
    if len(gold_trees) != len(predicted):
        raise ValueError(f"{len(gold_trees)} gold trees but {len(predicted)} predictions")
    unl, lab = [], []
    for tree, pred in zip(gold_trees, predicted):
        n = len(tree.tokens)
        p = filter_spans(pred, n)
        unl.append((filter_spans(tree.spans, n), p))
        lab.append((filter_labeled(tree.spans, n), p))
    c_f1, s_f1 = f1_scores(unl)
    breakdown = length_breakdown(lab, labels)
    return EvalReport(
        corpus_f1=c_f1,
        sentence_f1=s_f1,
        label_recall=label_recall(lab, labels),
        by_length=breakdown["by_length"],
        label_distribution=breakdown["label_distribution"],
        sentences=len(gold_trees),
    )


def baseline_predictions(mode, gold_trees, seed=0):
    rng = np.random.default_rng(seed)
    return [baseline_tree(mode, len(t.tokens), rng=rng) for t in gold_trees]


def read_predictions(path):
    """Predicted span sets from the JSON-lines tree format."""
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                rec = json.loads(line)
                out.append({(s, e) for s, e, *_ in rec["spans"]})
    return out
