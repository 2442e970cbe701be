"""Inside algorithm, CYK decoding and a brute-force enumeration oracle.

Chart cells are stored width by width in one flat cell axis: the cell
spanning ``[i, i + w)`` sits at index ``offset(w) + i``.  Every cell holds a
score for each of the ``S = NT + T`` symbols; width-1 cells are ``-inf`` on
nonterminals and wider cells are ``-inf`` on preterminals.
"""

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .grammar import RuleTable

MAX_ENUM_LENGTH = 8


class ChartError(ValueError):
    pass


@lru_cache(maxsize=None)
def _layout(n):
    """Cell offsets plus left/right child indices for every width."""
    offsets = [0, 0]
    for w in range(1, n + 1):
        offsets.append(offsets[-1] + n - w + 1)
    off = np.array(offsets)
    children = {}
    for w in range(2, n + 1):
        i = np.arange(n - w + 1)[:, None]
        k = np.arange(1, w)[None, :]
        left = off[k] + i
        right = off[w - k] + i + k
        children[w] = (left, right)
    return offsets, children


def _check_ids(ids):
    ids = np.asarray(ids, dtype=np.int64)
    single = ids.ndim == 1
    if single:
        ids = ids[None]
    if ids.ndim != 2:
        raise ChartError(f"token ids must be 1-D or 2-D, got shape {ids.shape}")
    if ids.shape[1] < 2:
        raise ChartError("sentences shorter than 2 tokens are unparseable under the binary grammar")
    return ids, single


def _terminal_scores(ids, table):
    b = table.preterminal.shape[0]
    batch = ids.shape[0]
    if b not in (1, batch):
        raise ChartError(f"table batch {b} does not match {batch} sentences")
    rows = np.arange(batch)[:, None] if b == batch else np.zeros((batch, 1), dtype=np.int64)
    return table.preterminal[rows, :, ids]  # (B, n, T)


def inside_logZ(ids, table):
    """Log partition function log sum_t p(t, w) for each sentence.

    ``ids`` is (n,) or (B, n), all sentences in a batch sharing one length.
    Returns a Tensor of shape () or (B,), differentiable w.r.t. ``table``.
    """
    ids, single = _check_ids(ids)
    batch, n = ids.shape
    inv = table.inventory
    nt, t = inv.n_nonterminals, inv.n_preterminals
    s = nt + t
    offsets, children = _layout(n)

    term = _terminal_scores(ids, table)
    flat = ad.concatenate([np.full((batch, n, nt), -np.inf), term], axis=-1)
    # Rule probabilities as a (b, S*S, NT) matrix for the shifted exp-sum contraction.
    rules = ad.exp(ad.transpose(ad.reshape(table.binary, (table.binary.shape[0], nt, s * s)), (0, 2, 1)))
    root = None
    for w in range(2, n + 1):
        ni = n - w + 1
        left_idx, right_idx = children[w]
        left = flat[:, left_idx]  # (B, ni, w-1, S)
        right = flat[:, right_idx]
        pair = ad.reshape(left, (batch, ni, w - 1, s, 1)) + ad.reshape(right, (batch, ni, w - 1, 1, s))
        y = ad.reshape(ad.logsumexp(pair, axis=2), (batch, ni, s * s))
        shift = y.data.max(axis=-1, keepdims=True)
        scores = ad.log(ad.exp(y - shift) @ rules) + shift  # (B, ni, NT)
        if w == n:
            root = scores
        else:
            cell = ad.concatenate([scores, np.full((batch, ni, t), -np.inf)], axis=-1)
            flat = ad.concatenate([flat, cell], axis=1)
    logz = ad.logsumexp(table.start + ad.reshape(root, (batch, nt)), axis=-1)
    return ad.reshape(logz, ()) if single else logz


@dataclass
class ParseTree:
    """A binary tree over token positions.

    ``nodes`` lists internal nodes in pre-order as (start, end, split,
    symbol); ``leaves`` gives the preterminal symbol of each token.  Symbols
    use chart numbering (nonterminals first).
    """

    n: int
    nodes: list
    leaves: list

    def spans(self):
        return {(i, j) for i, j, _, _ in self.nodes}

    def shape_key(self):
        return tuple(sorted((i, j, k) for i, j, k, _ in self.nodes))

    def to_bracketed(self, tokens=None, label="X"):
        tokens = tokens if tokens is not None else [str(i) for i in range(self.n)]
        splits = {(i, j): k for i, j, k, _ in self.nodes}

        def build(i, j):
            if j - i == 1:
                return tokens[i]
            k = splits[(i, j)]
            return f"({label} {build(i, k)} {build(k, j)})"

        return build(0, self.n)

    def to_json(self, tokens=None, score=None):
        rec = {
            "tokens": tokens,
            "spans": [[i, j, k] for i, j, k, _ in self.nodes],
            "symbols": [sym for _, _, _, sym in self.nodes],
            "preterminals": list(self.leaves),
        }
        if score is not None:
            rec["score"] = score
        return rec


def _lse_np(x, axes):
    m = x.max(axis=axes, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.log(np.exp(x - m).sum(axis=axes, keepdims=True)) + m


def viterbi_parse(ids, table):
    """Max-plus CYK: the highest-scoring tree and its log score.

    Ties prefer the smallest split, then the smallest symbol ids.
    ``table`` must hold a single sentence's tables (batch axis of size 1).
    """
    ids, single = _check_ids(ids)
    if ids.shape[0] != 1:
        raise ChartError("viterbi_parse decodes one sentence at a time")
    ids = ids[0]
    n = len(ids)
    arrs = table.arrays()
    start, binary, pre = (a[0] for a in (arrs["start"], arrs["binary"], arrs["preterminal"]))
    nt, s = binary.shape[0], binary.shape[1]
    beta = {}
    back = {}
    for i in range(n):
        cell = np.full(s, -np.inf)
        cell[nt:] = pre[:, ids[i]]
        beta[i, i + 1] = cell
    for w in range(2, n + 1):
        for i in range(n - w + 1):
            j = i + w
            # candidates ordered (split, B, C) so argmax picks the first maximum
            cand = np.stack([beta[i, k][:, None] + beta[k, j][None, :] for k in range(i + 1, j)])
            total = binary[:, None, :, :] + cand[None]  # (NT, w-1, S, S)
            flat = total.reshape(nt, -1)
            best = flat.argmax(axis=1)
            cell = np.full(s, -np.inf)
            cell[:nt] = flat[np.arange(nt), best]
            beta[i, j] = cell
            back[i, j] = best
    root_scores = start + beta[0, n][:nt]
    root = int(np.argmax(root_scores))
    score = float(root_scores[root])

    nodes, leaves = [], [None] * n

    def follow(i, j, sym):
        if j - i == 1:
            leaves[i] = int(sym)
            return
        k_off, b, c = np.unravel_index(back[i, j][sym], (j - i - 1, s, s))
        k = i + 1 + int(k_off)
        nodes.append((i, j, k, int(sym)))
        follow(i, k, b)
        follow(k, j, c)

    follow(0, n, root)
    return ParseTree(n, nodes, leaves), score


# ---------------------------------------------------------------------------
# enumeration oracle


@lru_cache(maxsize=None)
def _shapes(i, j):
    """All binary bracketings of [i, j) as tuples of (start, end, split) in pre-order."""
    if j - i == 1:
        return [()]
    out = []
    for k in range(i + 1, j):
        for left in _shapes(i, k):
            for right in _shapes(k, j):
                out.append(((i, j, k),) + left + right)
    return out


def tree_shapes(n):
    return list(_shapes(0, n))


def shape_scores(ids, table, shape):
    """Scores of every labeling of one bracketing, by direct summation.

    Returns an array with one axis per internal node (size NT, in the
    shape's pre-order) followed by one axis per token (size T).
    """
    arrs = table.arrays()
    start, binary, pre = (a[0] for a in (arrs["start"], arrs["binary"], arrs["preterminal"]))
    nt, s = binary.shape[0], binary.shape[1]
    n = len(ids)
    m = len(shape)
    ndim = m + n
    node_axis = {(i, j): a for a, (i, j, _) in enumerate(shape)}

    def axis_of(i, j):
        return node_axis[(i, j)] if j - i > 1 else m + i

    def place(arr, axes):
        order = np.argsort(axes)
        arr = np.transpose(arr, order)
        shape_ = [1] * ndim
        for ax, size in zip(sorted(axes), arr.shape):
            shape_[ax] = size
        return arr.reshape(shape_)

    total = place(start, [0])
    for i, j, k in shape:
        rows = slice(0, nt)
        lsel = slice(0, nt) if k - i > 1 else slice(nt, s)
        rsel = slice(0, nt) if j - k > 1 else slice(nt, s)
        block = binary[rows][:, lsel][:, :, rsel]
        total = total + place(block, [axis_of(i, j), axis_of(i, k), axis_of(k, j)])
    for i, w in enumerate(ids):
        total = total + place(pre[:, w], [m + i])
    return total


def enumerate_parses(ids, table):
    """Every (tree, log score) pair: all bracketings times all labelings."""
    ids = [int(x) for x in np.asarray(ids).reshape(-1)]
    n = len(ids)
    if n < 2:
        raise ChartError("sentences shorter than 2 tokens are unparseable under the binary grammar")
    if n > MAX_ENUM_LENGTH:
        raise ChartError(f"enumeration limited to n <= {MAX_ENUM_LENGTH}, got {n}")
    nt = table.binary.shape[1]
    out = []
    for shape in tree_shapes(n):
        scores = shape_scores(ids, table, shape)
        m = len(shape)
        for labels in np.ndindex(scores.shape):
            nodes = [(i, j, k, labels[a]) for a, (i, j, k) in enumerate(shape)]
            leaves = [nt + x for x in labels[m:]]
            out.append((ParseTree(n, nodes, leaves), float(scores[labels])))
    return out


def enumerate_summary(ids, table):
    """(log-sum-exp, max) over all parses, computed shape by shape."""
    ids = [int(x) for x in np.asarray(ids).reshape(-1)]
    lses, maxes = [], []
    for shape in tree_shapes(len(ids)):
        sc = shape_scores(ids, table, shape)
        lses.append(float(_lse_np(sc.reshape(-1), (0,))[0]))
        maxes.append(float(sc.max()))
    return float(_lse_np(np.array(lses), (0,))[0]), max(maxes)


def expected_rule_counts(ids, table):
    """Posterior expected usage count of every rule, via d logZ / d log pi.

    Returns a dict of arrays shaped like the (unbatched) table blocks.
    """
    arrs = table.arrays()
    leaf = RuleTable.from_arrays(arrs["start"][:1], arrs["binary"][:1], arrs["preterminal"][:1],
                                 requires_grad=True)
    logz = inside_logZ(np.asarray(ids).reshape(-1), leaf)
    params = [leaf.start, leaf.binary, leaf.preterminal]
    g = ad.backward(logz, params)
    return {"start": g[0][0], "binary": g[1][0], "preterminal": g[2][0]}


def write_predictions(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
