import math

import numpy as np
import pytest

from cpcfg import autodiff as ad
from cpcfg.grammar import Grammar, ModelConfig, RuleTable, SymbolInventory, degenerate_check


def lse(a, axes):
    m = a.max(axis=axes, keepdims=True)
    return np.squeeze(m, axis=axes) + np.log(np.exp(a - m).sum(axis=axes))


def tiny(**kw):
    base = dict(vocab_size=7, n_nonterminals=3, n_preterminals=2, sym_dim=6, hidden_dim=5, z_dim=4)
    base.update(kw)
    return ModelConfig(**base)


def assert_normalized(table):
    a = table.arrays()
    np.testing.assert_allclose(lse(a["start"], (1,)), 0.0, atol=1e-9)
    np.testing.assert_allclose(lse(a["binary"], (2, 3)), 0.0, atol=1e-9)
    np.testing.assert_allclose(lse(a["preterminal"], (2,)), 0.0, atol=1e-9)
    for v in a.values():
        assert np.isfinite(v).all()


@pytest.mark.parametrize("seed", range(5))
def test_normalization_random_params_and_z(seed):
    rng = np.random.default_rng(seed)
    g = Grammar(tiny(), rng)
    table = g.rule_table(rng.normal(scale=3, size=(3, 4)))
    assert table.batch_size == 3
    assert table.binary.shape == (3, 3, 5, 5)
    assert_normalized(table)


def test_all_shared_ignores_z():
    g = Grammar(tiny(share_start=True, share_nonterminal=True, share_preterminal=True), np.random.default_rng(0))
    a = g.rule_table(np.ones(4)).arrays()
    b = g.rule_table(-np.ones(4)).arrays()
    c = g.rule_table().arrays()
    for k in a:
        assert np.array_equal(a[k], b[k]) and np.array_equal(a[k], c[k])


@pytest.mark.parametrize("flags", [(s, n, p) for s in (0, 1) for n in (0, 1) for p in (0, 1) if not s & n & p])
def test_flag_locality(flags):
    share = dict(zip(("share_start", "share_nonterminal", "share_preterminal"), map(bool, flags)))
    g = Grammar(tiny(**share), np.random.default_rng(1))
    rng = np.random.default_rng(2)
    a = g.rule_table(rng.normal(size=4)).arrays()
    b = g.rule_table(rng.normal(size=4)).arrays()
    for block, shared in zip(("start", "binary", "preterminal"), flags):
        same = np.array_equal(a[block], b[block])
        assert same == bool(shared), block


def test_zero_initialized_single_symbol_grammar():
    config = ModelConfig(vocab_size=1, n_nonterminals=1, n_preterminals=1, sym_dim=3, hidden_dim=3, z_dim=2)
    g = Grammar(config, np.random.default_rng(0), zero_output=True)
    a = g.rule_table(np.array([0.5, -2.0])).arrays()
    np.testing.assert_array_equal(a["start"], [[0.0]])
    np.testing.assert_allclose(a["binary"], np.full((1, 1, 2, 2), math.log(0.25)), atol=1e-15)
    np.testing.assert_array_equal(a["preterminal"], [[[0.0]]])


def test_z_errors():
    g = Grammar(tiny(share_preterminal=True), np.random.default_rng(0))
    with pytest.raises(ValueError):
        g.rule_table()
    with pytest.raises(ValueError):
        g.rule_table(np.zeros(5))
    with pytest.raises(ValueError):
        g.rule_table(np.zeros((2, 3)))


def test_degenerate_check():
    assert degenerate_check(tiny(share_start=True, share_nonterminal=True, share_preterminal=True))
    assert not degenerate_check(tiny(share_preterminal=True))
    assert not degenerate_check(tiny())
    assert not degenerate_check(Grammar(tiny(), np.random.default_rng(0)))


def test_inventory_validation():
    inv = SymbolInventory(2, 3, 4)
    assert inv.n_symbols == 5
    assert inv.is_preterminal(2) and not inv.is_preterminal(1)
    with pytest.raises(ValueError):
        SymbolInventory(0, 1, 1)
    with pytest.raises(ValueError):
        tiny(n_preterminals=0)


def test_rule_table_gradients():
    g = Grammar(tiny(sym_dim=3, hidden_dim=3, z_dim=2), np.random.default_rng(3))
    # biases start at zero, which can park a ReLU input exactly on its kink
    for name, p in g.params.items():
        if ".b" in name:
            p.data = np.random.default_rng(len(name)).normal(scale=0.5, size=p.shape)
    z = ad.parameter(np.random.default_rng(4).normal(size=(2, 2)), "z")
    w = np.random.default_rng(5).normal(size=(2, 3, 5, 5))

    def f():
        t = g.rule_table(z)
        return ad.tsum(t.binary * w) + ad.tsum(t.start) + ad.tsum(t.preterminal * 0.3)

    params = dict(g.params, z=z)
    report = ad.check_gradients(f, params, tolerance=1e-5, max_entries=40)
    assert report["passed"], report


def test_select_and_from_arrays():
    g = Grammar(tiny(), np.random.default_rng(0))
    t = g.rule_table(np.random.default_rng(1).normal(size=(2, 4)))
    one = t.select(1)
    assert one.batch_size == 1
    np.testing.assert_array_equal(one.binary.data[0], t.binary.data[1])
    assert isinstance(RuleTable.from_arrays(*t.arrays().values()), RuleTable)
