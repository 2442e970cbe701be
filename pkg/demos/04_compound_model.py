"""
Rule networks and the sentence posterior
========================================

In a compound PCFG the rule probabilities are produced by small networks
that read a per-sentence latent vector z.  An encoder maps each sentence
to a Gaussian over z.  Sharing a rule block removes z from that block's
input, and sharing all three gives an ordinary neural PCFG.
"""

import numpy as np

from cpcfg import autodiff as ad
from cpcfg.grammar import Grammar, ModelConfig, degenerate_check
from cpcfg.model import build_model
from cpcfg.trainer import elbo_loss
from cpcfg.variational import kl_to_prior, map_embedding, sample_z

config = ModelConfig.small(vocab_size=20)
model = build_model(config, seed=0)
print("parameters:", sum(p.data.size for p in model.params.values()))

# Encode two same-length sentences.
ids = np.array([[3, 7, 1, 12], [5, 5, 9, 0]])
post = model.encoder.encode(ids)
print("mu shape", post.mu.shape, "KL", kl_to_prior(post).data)

# The decoder conditions on the posterior mean; training draws a sample.
noise = np.random.default_rng(1).standard_normal((2, config.z_dim))
z = sample_z(post, noise)
table = model.grammar.rule_table(z)
print("binary block", table.binary.shape, "rows sum to",
      np.exp(table.binary.data).reshape(2, config.n_nonterminals, -1).sum(-1)[0])
print("posterior mean equals zero-noise sample:",
      np.array_equal(map_embedding(post).data, sample_z(post, np.zeros_like(noise)).data))

# The training objective is the negative ELBO per sentence.
loss, stats = elbo_loss(model, ids, noise)
print("loss", loss.item(), stats)
grads = ad.backward(loss, list(model.params.values()))
print("gradient norm", np.sqrt(sum((g * g).sum() for g in grads)))

# Sharing the preterminal block freezes only that block across sentences.
g = Grammar(ModelConfig.small(20, share_preterminal=True), np.random.default_rng(2))
a = g.rule_table(np.ones(config.z_dim)).arrays()
b = g.rule_table(-np.ones(config.z_dim)).arrays()
for block in a:
    print(f"{block:12s} identical across z: {np.array_equal(a[block], b[block])}")
print("degenerate:", degenerate_check(g))

shared = ModelConfig.small(20, share_start=True, share_nonterminal=True, share_preterminal=True)
print("all shared degenerate:", degenerate_check(shared), "encoder:", build_model(shared).encoder)
