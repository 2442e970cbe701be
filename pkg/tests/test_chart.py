import math

import numpy as np
import pytest

from cpcfg import autodiff as ad
from cpcfg.chart import (
    ChartError,
    enumerate_parses,
    enumerate_summary,
    expected_rule_counts,
    inside_logZ,
    tree_shapes,
    viterbi_parse,
)
from cpcfg.grammar import RuleTable, random_table


def lse(xs):
    xs = np.asarray(xs)
    m = xs.max()
    return m + math.log(np.exp(xs - m).sum())


def enumerated_counts(ids, table):
    """Posterior rule counts by explicit weighting of every enumerated parse."""
    arrs = table.arrays()
    nt = arrs["binary"].shape[1]
    parses = enumerate_parses(ids, table)
    logz = lse([s for _, s in parses])
    start = np.zeros_like(arrs["start"][0])
    binary = np.zeros_like(arrs["binary"][0])
    pre = np.zeros_like(arrs["preterminal"][0])
    for tree, score in parses:
        w = math.exp(score - logz)
        sym = {(i, j): a for i, j, _, a in tree.nodes}
        for i, leaf in enumerate(tree.leaves):
            sym[(i, i + 1)] = leaf
            pre[leaf - nt, ids[i]] += w
        root = sym[(0, len(ids))]
        start[root] += w
        for i, j, k, a in tree.nodes:
            binary[a, sym[(i, k)], sym[(k, j)]] += w
    return {"start": start, "binary": binary, "preterminal": pre}


def test_two_token_closed_form(uniform_table):
    assert inside_logZ([0, 0], uniform_table).item() == pytest.approx(math.log(1 / 4), abs=1e-12)


def test_three_token_closed_form(uniform_table):
    assert inside_logZ([0, 0, 0], uniform_table).item() == pytest.approx(math.log(1 / 8), abs=1e-12)


def test_inside_matches_enumeration_n5(make_table):
    table = make_table(0, nt=2, t=3, v=5)
    ids = [4, 0, 2, 2, 1]
    logz, best = enumerate_summary(ids, table)
    assert inside_logZ(ids, table).item() == pytest.approx(logz, abs=1e-9)
    parses = enumerate_parses(ids, table)
    assert len({p.shape_key() for p, _ in parses}) == 14
    assert lse([s for _, s in parses]) == pytest.approx(logz, abs=1e-9)


def test_short_sentences_rejected(uniform_table):
    with pytest.raises(ChartError):
        inside_logZ([0], uniform_table)
    with pytest.raises(ChartError):
        viterbi_parse([0], uniform_table)


def test_viterbi_tie_prefers_smallest_split(uniform_table):
    tree, score = viterbi_parse([0, 0, 0], uniform_table)
    assert tree.nodes[0][:3] == (0, 3, 1)
    assert tree.spans() == {(0, 3), (1, 3)}
    assert score == pytest.approx(math.log(1 / 16), abs=1e-12)


def test_viterbi_two_tokens_is_the_single_parse(uniform_table):
    tree, score = viterbi_parse([0, 0], uniform_table)
    assert tree.spans() == {(0, 2)}
    assert score == pytest.approx(inside_logZ([0, 0], uniform_table).item(), abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("n", range(2, 7))
def test_viterbi_matches_enumerated_max(make_table, seed, n):
    table = make_table(100 + seed, nt=2, t=2, v=4)
    ids = list(np.random.default_rng(seed).integers(0, 4, size=n))
    tree, score = viterbi_parse(ids, table)
    logz, best = enumerate_summary(ids, table)
    assert score == pytest.approx(best, abs=1e-9)
    assert inside_logZ(ids, table).item() == pytest.approx(logz, abs=1e-9)


def test_viterbi_score_is_sum_of_tree_rules(make_table):
    table = make_table(9, nt=3, t=2, v=4)
    ids = [0, 3, 1, 2, 2]
    tree, score = viterbi_parse(ids, table)
    arrs = table.arrays()
    nt = 3
    sym = {(i, j): a for i, j, _, a in tree.nodes}
    total = arrs["start"][0][sym[(0, 5)]]
    for i, leaf in enumerate(tree.leaves):
        sym[(i, i + 1)] = leaf
        total += arrs["preterminal"][0][leaf - nt, ids[i]]
    for i, j, k, a in tree.nodes:
        total += arrs["binary"][0][a, sym[(i, k)], sym[(k, j)]]
    assert score == pytest.approx(total, abs=1e-12)


def test_enumeration_counts():
    assert len(tree_shapes(4)) == 5
    assert [len(tree_shapes(n)) for n in range(1, 9)] == [1, 1, 2, 5, 14, 42, 132, 429]


def test_enumeration_single_symbols_collapse(uniform_table):
    assert len(enumerate_parses([0, 0, 0], uniform_table)) == 2


def test_enumeration_guard(uniform_table):
    with pytest.raises(ChartError):
        enumerate_parses([0] * 9, uniform_table)


def test_expected_counts_one_parse(uniform_table):
    counts = expected_rule_counts([0, 0], uniform_table)
    assert counts["binary"][0, 1, 1] == pytest.approx(1.0, abs=1e-12)
    assert counts["start"][0] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_expected_counts_match_enumeration(make_table, seed):
    table = make_table(seed, nt=2, t=3, v=5)
    ids = [3, 1, 4, 1]
    got = expected_rule_counts(ids, table)
    want = enumerated_counts(ids, table)
    for block in ("start", "binary", "preterminal"):
        np.testing.assert_allclose(got[block], want[block], atol=1e-8)
    assert got["binary"].sum() == pytest.approx(len(ids) - 1, abs=1e-9)
    assert got["start"].sum() == pytest.approx(1.0, abs=1e-12)
    assert (got["binary"] >= -1e-15).all() and (got["preterminal"] >= -1e-15).all()


def test_preterminal_counts_sum_to_one_per_position(make_table):
    table = make_table(4, nt=2, t=3, v=5)
    ids = [0, 1, 2, 3, 4]
    counts = expected_rule_counts(ids, table)
    for pos, w in enumerate(ids):
        # every word id is distinct here, so column w holds exactly position pos
        assert counts["preterminal"][:, w].sum() == pytest.approx(1.0, abs=1e-12)


def test_monotone_marginal(make_table):
    rng = np.random.default_rng(0)
    table = make_table(21, nt=2, t=2, v=3)
    ids = [0, 2, 1, 1]
    base = inside_logZ(ids, table).item()
    arrs = {k: v.copy() for k, v in table.arrays().items()}
    for _ in range(20):
        block = ["start", "binary", "preterminal"][rng.integers(3)]
        bumped = {k: v.copy() for k, v in arrs.items()}
        idx = tuple(rng.integers(0, s) for s in bumped[block].shape)
        bumped[block][idx] = np.log(np.exp(bumped[block][idx]) + 0.05)
        t = RuleTable.from_arrays(bumped["start"], bumped["binary"], bumped["preterminal"])
        assert inside_logZ(ids, t).item() >= base - 1e-12


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_inside_gradient_check(make_table, n):
    table = make_table(50 + n, nt=2, t=2, v=3, requires_grad=True)
    ids = list(np.random.default_rng(n).integers(0, 3, size=n))
    params = {"start": table.start, "binary": table.binary, "preterminal": table.preterminal}
    report = ad.check_gradients(lambda: inside_logZ(ids, table), params, 1e-5, 1e-5)
    assert report["passed"], report


def test_batched_inside_is_bitwise_equal_to_single():
    rng = np.random.default_rng(8)
    tabs = [random_table(rng, 3, 4, 6) for _ in range(3)]
    batched = RuleTable.from_arrays(*(np.stack([t[i] for t in tabs]) for i in range(3)))
    ids = rng.integers(0, 6, size=(3, 7))
    together = inside_logZ(ids, batched).data
    for b in range(3):
        alone = inside_logZ(ids[b : b + 1], batched.select(b)).data
        assert alone.tobytes() == together[b : b + 1].tobytes()


def test_shared_table_broadcasts_over_batch(make_table):
    table = make_table(3, nt=2, t=3, v=5)
    ids = np.array([[0, 1, 2], [4, 4, 3]])
    together = inside_logZ(ids, table).data
    for b in range(2):
        assert together[b] == inside_logZ(ids[b], table).item()
