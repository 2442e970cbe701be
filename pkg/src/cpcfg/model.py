"""Compound PCFG: rule networks plus the inference network that feeds them z."""

import numpy as np

from . import autodiff as ad
from .chart import inside_logZ, viterbi_parse
from .grammar import Grammar, ModelConfig
from .variational import Encoder, kl_to_prior, map_embedding, sample_z


class CompoundPCFG:
    """C-PCFG, or N-PCFG when every rule block is shared.

    With all blocks shared the model owns no encoder at all: z is never
    computed and the KL term is identically zero.
    """

    def __init__(self, config, rng, zero_output=False):
        self.config = config
        self.grammar = Grammar(config, rng, zero_output)
        self.encoder = None
        if self.grammar.needs_z:
            self.encoder = Encoder(config.vocab_size, config.word_dim, config.enc_hidden, config.z_dim, rng,
                                   zero_output)

    @property
    def is_compound(self):
        return self.encoder is not None

    @property
    def params(self):
        out = dict(self.grammar.params)
        if self.encoder is not None:
            out.update(self.encoder.params)
        return out

    def state(self):
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state(self, arrays):
        params = self.params
        missing = set(params) - set(arrays)
        if missing:
            raise ValueError(f"checkpoint lacks parameters: {sorted(missing)}")
        self.grammar.load_state(arrays)
        if self.encoder is not None:
            self.encoder.load_state(arrays)

    def elbo_terms(self, ids, noise=None):
        """Per-sentence (log-likelihood term, KL) for a same-length batch.

        ``noise`` of shape (B, z_dim) draws z by reparameterisation; without
        it, z is the posterior mean.
        """
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim == 1:
            ids = ids[None]
        if self.encoder is None:
            table = self.grammar.rule_table()
            return inside_logZ(ids, table), ad.Tensor(np.zeros(ids.shape[0]))
        post = self.encoder.encode(ids)
        z = map_embedding(post) if noise is None else sample_z(post, noise)
        table = self.grammar.rule_table(z)
        return inside_logZ(ids, table), kl_to_prior(post)

    def tables(self, ids):
        """Rule tables used for decoding: conditioned on the posterior mean."""
        if self.encoder is None:
            return self.grammar.rule_table()
        return self.grammar.rule_table(map_embedding(self.encoder.encode(ids)))

    def parse(self, ids):
        """MAP trees for a same-length batch; returns [(ParseTree, score)]."""
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim == 1:
            ids = ids[None]
        with ad.no_grad():
            table = self.tables(ids)
        return [viterbi_parse(ids[b], table.select(b)) for b in range(ids.shape[0])]


def build_model(config, seed=0, zero_output=False):
    if isinstance(config, dict):
        config = ModelConfig.from_dict(config)
    return CompoundPCFG(config, np.random.default_rng(seed), zero_output)


def decode(model, sentences, batch_size=16):
    """MAP (tree, score) for each sentence, in input order; None for n < 2."""
    from .trainer import length_batches

    out = [None] * len(sentences)
    parseable = [i for i, s in enumerate(sentences) if len(s) >= 2]
    for batch in length_batches([sentences[i] for i in parseable], batch_size):
        idx = [parseable[b] for b in batch]
        ids = np.array([sentences[i].ids for i in idx], dtype=np.int64)
        for i, result in zip(idx, model.parse(ids)):
            out[i] = result
    return out
