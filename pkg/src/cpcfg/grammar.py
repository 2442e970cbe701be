"""Symbol inventory and neural rule-probability networks.

The grammar has three rule blocks: start rules ``S -> A`` (A a nonterminal),
binary rules ``A -> B C`` (B, C nonterminals or preterminals) and
preterminal rules ``T -> w``.  Inside a chart, the symbol axis of size
``NT + T`` lists nonterminals first, then preterminals.

Each block is produced by its own feed-forward network.  When a block is
not shared, the per-sentence latent vector ``z`` is concatenated to the
symbol embedding before the network; a shared block never sees ``z`` and
its table is identical for every sentence.
"""

from dataclasses import asdict, dataclass, fields

import numpy as np

from . import autodiff as ad
from .layers import MLP, Module


@dataclass
class ModelConfig:
    vocab_size: int
    n_nonterminals: int = 30
    n_preterminals: int = 60
    sym_dim: int = 256
    hidden_dim: int = 256
    z_dim: int = 64
    word_dim: int = 512
    enc_hidden: int = 512
    share_start: bool = False
    share_nonterminal: bool = False
    share_preterminal: bool = False

    def __post_init__(self):
        for name in ("vocab_size", "n_nonterminals", "n_preterminals", "sym_dim", "hidden_dim", "z_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @classmethod
    def small(cls, vocab_size, **overrides):
        """Desk-scale preset: |N|=4, |P|=8 and narrow networks."""
        base = dict(
            vocab_size=vocab_size,
            n_nonterminals=4,
            n_preterminals=8,
            sym_dim=32,
            hidden_dim=32,
            z_dim=8,
            word_dim=32,
            enc_hidden=32,
        )
        base.update(overrides)
        return cls(**base)

    @property
    def all_shared(self):
        return self.share_start and self.share_nonterminal and self.share_preterminal

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass(frozen=True)
class SymbolInventory:
    n_nonterminals: int
    n_preterminals: int
    vocab_size: int

    def __post_init__(self):
        if min(self.n_nonterminals, self.n_preterminals, self.vocab_size) < 1:
            raise ValueError("symbol inventory sizes must all be >= 1")

    @property
    def n_symbols(self):
        return self.n_nonterminals + self.n_preterminals

    def is_preterminal(self, symbol):
        return symbol >= self.n_nonterminals

    def label(self, symbol):
        if symbol < self.n_nonterminals:
            return f"NT{symbol}"
        return f"T{symbol - self.n_nonterminals}"


@dataclass
class RuleTable:
    """Log-probabilities of the three rule blocks.

    Every block carries a leading batch axis of size 1 (corpus-level) or B
    (one table per sentence):

    * ``start``: (b, NT)
    * ``binary``: (b, NT, S, S) with S = NT + T
    * ``preterminal``: (b, T, V)
    """

    start: ad.Tensor
    binary: ad.Tensor
    preterminal: ad.Tensor

    @property
    def inventory(self):
        b, nt, s, _ = self.binary.shape
        return SymbolInventory(nt, s - nt, self.preterminal.shape[-1])

    @property
    def batch_size(self):
        return max(self.start.shape[0], self.binary.shape[0], self.preterminal.shape[0])

    def arrays(self):
        return {"start": self.start.data, "binary": self.binary.data, "preterminal": self.preterminal.data}

    def select(self, index):
        """The single-sentence table at batch position ``index``."""

        def pick(t):
            i = 0 if t.shape[0] == 1 else index
            return t[i : i + 1]

        return RuleTable(pick(self.start), pick(self.binary), pick(self.preterminal))

    @classmethod
    def from_arrays(cls, start, binary, preterminal, requires_grad=False):
        """Build a table from plain arrays, adding a batch axis when missing."""
        start, binary, preterminal = (np.asarray(a, dtype=np.float64) for a in (start, binary, preterminal))
        if start.ndim == 1:
            start, binary, preterminal = start[None], binary[None], preterminal[None]
        make = (lambda a, n: ad.parameter(a, name=n)) if requires_grad else (lambda a, n: ad.Tensor(a, name=n))
        return cls(make(start, "start"), make(binary, "binary"), make(preterminal, "preterminal"))


def random_table(rng, n_nonterminals, n_preterminals, vocab_size, scale=1.0):
    """A normalised table with Gaussian logits, for tests and oracles."""
    s = n_nonterminals + n_preterminals

    def norm(x, axes):
        m = x.max(axis=axes, keepdims=True)
        return x - (np.log(np.exp(x - m).sum(axis=axes, keepdims=True)) + m)

    start = norm(scale * rng.normal(size=(n_nonterminals,)), (0,))
    binary = norm(scale * rng.normal(size=(n_nonterminals, s, s)), (1, 2))
    pre = norm(scale * rng.normal(size=(n_preterminals, vocab_size)), (1,))
    return start, binary, pre


class Grammar(Module):
    """Rule-probability networks g(z; theta) for the three rule blocks."""

    def __init__(self, config, rng, zero_output=False):
        super().__init__()
        self.config = config
        c = config
        self.inventory = SymbolInventory(c.n_nonterminals, c.n_preterminals, c.vocab_size)
        s = self.inventory.n_symbols
        self.root_emb = self.add_param("grammar.root_emb", rng.normal(size=(1, c.sym_dim)))
        self.nt_emb = self.add_param("grammar.nt_emb", rng.normal(size=(c.n_nonterminals, c.sym_dim)))
        self.t_emb = self.add_param("grammar.t_emb", rng.normal(size=(c.n_preterminals, c.sym_dim)))

        def in_dim(shared):
            return c.sym_dim if shared else c.sym_dim + c.z_dim

        self.start_net = MLP(self, "grammar.start", rng, in_dim(c.share_start), c.hidden_dim,
                             c.n_nonterminals, zero_output)
        self.binary_net = MLP(self, "grammar.binary", rng, in_dim(c.share_nonterminal), c.hidden_dim,
                              s * s, zero_output)
        self.term_net = MLP(self, "grammar.term", rng, in_dim(c.share_preterminal), c.hidden_dim,
                            c.vocab_size, zero_output)

    @property
    def needs_z(self):
        return not self.config.all_shared

    def _inputs(self, emb, z, shared):
        """(1, k, d) when shared, else (B, k, d + z_dim)."""
        if shared:
            return ad.reshape(emb, (1,) + emb.shape)
        b, k = z.shape[0], emb.shape[0]
        e = ad.broadcast_to(ad.reshape(emb, (1,) + emb.shape), (b,) + emb.shape)
        zz = ad.broadcast_to(ad.reshape(z, (b, 1, z.shape[1])), (b, k, z.shape[1]))
        return ad.concatenate([e, zz], axis=-1)

    def rule_table(self, z=None):
        """Normalised rule log-probabilities, conditioned on ``z`` where unshared.

        ``z`` has shape (B, z_dim) or (z_dim,).  It is required unless all
        three blocks are shared, in which case it is ignored.
        """
        c = self.config
        if self.needs_z:
            if z is None:
                raise ValueError("a latent z is required when any rule block is unshared")
            z = ad.as_tensor(z)
            if z.ndim == 1:
                z = ad.reshape(z, (1, z.shape[0]))
            if z.ndim != 2 or z.shape[1] != c.z_dim:
                raise ValueError(f"z must have trailing dimension {c.z_dim}, got shape {z.shape}")
        nt, s = c.n_nonterminals, self.inventory.n_symbols

        start_logits = self.start_net(self._inputs(self.root_emb, z, c.share_start))
        start = ad.log_softmax(ad.reshape(start_logits, (start_logits.shape[0], nt)), -1)

        bin_logits = self.binary_net(self._inputs(self.nt_emb, z, c.share_nonterminal))
        binary = ad.reshape(ad.log_softmax(bin_logits, -1), (bin_logits.shape[0], nt, s, s))

        term_logits = self.term_net(self._inputs(self.t_emb, z, c.share_preterminal))
        pre = ad.log_softmax(term_logits, -1)
        return RuleTable(start, binary, pre)


def degenerate_check(grammar):
    """True iff the produced rule tables cannot depend on z (all blocks shared)."""
    config = grammar.config if isinstance(grammar, Grammar) else grammar
    return bool(config.all_shared)
