"""Gaussian inference network q(z | w) and its closed-form pieces."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .layers import Module, xavier

LOGVAR_MIN, LOGVAR_MAX = -8.0, 8.0


@dataclass
class LatentPosterior:
    mu: ad.Tensor
    logvar: ad.Tensor

    @property
    def dim(self):
        return self.mu.shape[-1]


class Encoder(Module):
    """Word embeddings, a bidirectional tanh RNN, max-pooling over time and
    two affine heads for the posterior mean and log-variance."""

    def __init__(self, vocab_size, word_dim, hidden, z_dim, rng, zero_output=False):
        super().__init__()
        self.z_dim = z_dim
        self.hidden = hidden
        self.emb = self.add_param("encoder.emb", rng.normal(scale=0.1, size=(vocab_size, word_dim)))
        for d in ("fwd", "bwd"):
            self.add_param(f"encoder.{d}.wx", xavier(rng, word_dim, hidden))
            self.add_param(f"encoder.{d}.wh", xavier(rng, hidden, hidden))
            self.add_param(f"encoder.{d}.b", np.zeros(hidden))
        head = (lambda: np.zeros((2 * hidden, z_dim))) if zero_output else (lambda: xavier(rng, 2 * hidden, z_dim))
        self.add_param("encoder.mu.w", head())
        self.add_param("encoder.mu.b", np.zeros(z_dim))
        self.add_param("encoder.logvar.w", head())
        self.add_param("encoder.logvar.b", np.zeros(z_dim))

    def _run(self, x, direction, reverse):
        p = self.params
        proj = x @ p[f"encoder.{direction}.wx"] + p[f"encoder.{direction}.b"]  # (B, n, H)
        wh = p[f"encoder.{direction}.wh"]
        n = x.shape[1]
        steps = range(n - 1, -1, -1) if reverse else range(n)
        h, outs = None, []
        for t in steps:
            pre = proj[:, t] if h is None else proj[:, t] + h @ wh
            h = ad.tanh(pre)
            outs.append(h)
        if reverse:
            outs.reverse()
        return ad.stack(outs, axis=1)

    def encode(self, ids):
        """Posterior parameters for a (B, n) or (n,) batch of token ids."""
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim == 1:
            ids = ids[None]
        if ids.size == 0 or ids.shape[1] == 0:
            raise ValueError("cannot encode an empty sentence")
        p = self.params
        x = ad.take(p["encoder.emb"], ids, axis=0)  # (B, n, D)
        h = ad.concatenate([self._run(x, "fwd", False), self._run(x, "bwd", True)], axis=-1)
        pooled = ad.tmax(h, axis=1)
        mu = pooled @ p["encoder.mu.w"] + p["encoder.mu.b"]
        logvar = ad.clip(pooled @ p["encoder.logvar.w"] + p["encoder.logvar.b"], LOGVAR_MIN, LOGVAR_MAX)
        return LatentPosterior(mu, logvar)


def sample_z(post, noise):
    """Reparameterised sample ``mu + exp(logvar / 2) * noise``."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape[-1] != post.dim:
        raise ValueError(f"noise shape {noise.shape} does not match latent dimension {post.dim}")
    return post.mu + ad.exp(post.logvar * 0.5) * noise


def kl_to_prior(post):
    """KL(q || N(0, I)), summed over latent dimensions."""
    mu, lv = post.mu, post.logvar
    return ad.tsum(mu * mu + ad.exp(lv) - lv - 1.0, axis=-1) * 0.5


def map_embedding(post):
    return post.mu
