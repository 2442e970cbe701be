"""ELBO optimisation, validation perplexity and checkpoint selection."""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import autodiff as ad
from . import checkpoint as ckpt
from .grammar import ModelConfig
from .model import CompoundPCFG

log = logging.getLogger(__name__)

LENGTH_CAPS = (10, 20, 30, 40, 50)


class Divergence(RuntimeError):
    """Non-finite loss or gradient during training."""


@dataclass
class TrainConfig:
    max_train_len: int = 40
    epochs: int = 30
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3])
    batch_size: int = 4
    lr: float = 1e-3
    beta1: float = 0.75
    beta2: float = 0.999
    max_grad_norm: float = 3.0
    preset: str = "default"
    n_nonterminals: int = None
    n_preterminals: int = None
    z_dim: int = None
    share_start: bool = False
    share_nonterminal: bool = False
    share_preterminal: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_train_len is not None and self.max_train_len < 2:
            raise ValueError("max_train_len must be >= 2")
        if self.preset not in ("default", "small"):
            raise ValueError(f"unknown preset {self.preset!r}")
        if isinstance(self.seeds, int):
            self.seeds = list(range(self.seeds))
        self.seeds = [int(s) for s in self.seeds]

    def model_config(self, vocab_size):
        overrides = {
            k: getattr(self, k)
            for k in ("n_nonterminals", "n_preterminals", "z_dim")
            if getattr(self, k) is not None
        }
        overrides.update(
            share_start=self.share_start,
            share_nonterminal=self.share_nonterminal,
            share_preterminal=self.share_preterminal,
        )
        if self.preset == "small":
            return ModelConfig.small(vocab_size, **overrides)
        return ModelConfig(vocab_size=vocab_size, **overrides)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Checkpoint:
    params: dict
    model_config: dict
    epoch: int
    val_ppl: float
    seed: int
    extra: dict = field(default_factory=dict)

    def meta(self):
        return {
            "model_config": self.model_config,
            "epoch": self.epoch,
            "val_ppl": self.val_ppl,
            "seed": self.seed,
            **self.extra,
        }

    def save(self, path):
        ckpt.save(path, self.params, self.meta())

    @classmethod
    def load(cls, path):
        arrays, meta = ckpt.load(path)
        core = {k: meta.pop(k) for k in ("model_config", "epoch", "val_ppl", "seed")}
        return cls(arrays, extra=meta, **core)

    def model(self):
        m = CompoundPCFG(ModelConfig.from_dict(self.model_config), np.random.default_rng(0))
        m.load_state(self.params)
        return m


@dataclass
class SeedResult:
    seed: int
    checkpoint: Checkpoint = None
    history: list = field(default_factory=list)
    timings: list = field(default_factory=list)
    error: str = None


class Adam:
    def __init__(self, params, lr=1e-3, betas=(0.75, 0.999), eps=1e-8):
        self.params = params
        self.lr, (self.b1, self.b2), self.eps = lr, betas, eps
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_grad_norm(grads, max_norm):
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if total > max_norm:
        scale = max_norm / (total + 1e-6)
        grads = [g * scale for g in grads]
    return grads, total


def elbo_loss(model, ids, noise=None):
    """Negative ELBO averaged over a same-length batch.

    Returns ``(loss, stats)`` where ``stats`` holds summed ``nll`` and ``kl``
    over the batch as floats.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None]
    if ids.shape[1] < 2:
        raise ValueError("elbo_loss needs sentences of length >= 2; filter them out during preprocessing")
    if model.is_compound and noise is None:
        raise ValueError("a compound model needs one noise vector per sentence")
    logz, kl = model.elbo_terms(ids, noise if model.is_compound else None)
    per_sentence = kl - logz
    loss = ad.mean(per_sentence)
    return loss, {"nll": float(-logz.data.sum()), "kl": float(kl.data.sum())}


def length_batches(sentences, batch_size, rng=None):
    """Group sentence indices into same-length batches.

    With ``rng`` the buckets and their contents are shuffled; otherwise the
    order is by length then corpus position.
    """
    buckets = {}
    for i, s in enumerate(sentences):
        buckets.setdefault(len(s), []).append(i)
    batches = []
    for length in sorted(buckets):
        idx = list(buckets[length])
        if rng is not None:
            rng.shuffle(idx)
        for k in range(0, len(idx), batch_size):
            batches.append(idx[k : k + batch_size])
    if rng is not None:
        order = rng.permutation(len(batches))
        batches = [batches[i] for i in order]
    return batches


def _ids(sentences, batch):
    return np.array([sentences[i].ids for i in batch], dtype=np.int64)


def token_perplexity(total_neg_elbo, n_tokens):
    return math.exp(total_neg_elbo / n_tokens)


def perplexity(model, corpus, batch_size=16):
    """exp(total negative ELBO / total tokens), with z fixed at the posterior mean."""
    sents = corpus.sentences if hasattr(corpus, "sentences") else corpus
    if not sents:
        raise ValueError("perplexity of an empty corpus is undefined")
    total, tokens = 0.0, 0
    with ad.no_grad():
        for batch in length_batches(sents, batch_size):
            ids = _ids(sents, batch)
            logz, kl = model.elbo_terms(ids)
            total += float((kl.data - logz.data).sum())
            tokens += ids.size
    return token_perplexity(total, tokens)


def filter_length(corpus, max_len):
    sents = corpus.sentences if hasattr(corpus, "sentences") else corpus
    return [s for s in sents if len(s) >= 2 and (max_len is None or len(s) <= max_len)]


def train_seed(config, seed, train, valid, vocab_size, on_epoch=None):
    """Optimise one seed; keep the checkpoint with the lowest validation perplexity."""
    result = SeedResult(seed)
    rng = np.random.default_rng(seed)
    mconf = config.model_config(vocab_size)
    model = CompoundPCFG(mconf, rng)
    params = list(model.params.values())
    opt = Adam(params, config.lr, (config.beta1, config.beta2))
    train = filter_length(train, config.max_train_len)
    if not train:
        result.error = "no training sentences within the length cap"
        return result
    best = math.inf
    try:
        for epoch in range(1, config.epochs + 1):
            t0 = time.perf_counter()
            nll = kl = 0.0
            for batch in length_batches(train, config.batch_size, rng):
                ids = _ids(train, batch)
                noise = rng.standard_normal((len(batch), mconf.z_dim)) if model.is_compound else None
                loss, stats = elbo_loss(model, ids, noise)
                if not np.isfinite(loss.data):
                    raise Divergence(f"non-finite loss at epoch {epoch}")
                grads = ad.backward(loss, params)
                grads, norm = clip_grad_norm(grads, config.max_grad_norm)
                if not np.isfinite(norm):
                    raise Divergence(f"non-finite gradient norm at epoch {epoch}")
                opt.step(grads)
                nll += stats["nll"]
                kl += stats["kl"]
            val_ppl = perplexity(model, valid)
            record = {
                "seed": seed,
                "epoch": epoch,
                "loss": (nll + kl) / len(train),
                "kl": kl / len(train),
                "train_sentences": len(train),
                "val_ppl": val_ppl,
            }
            result.history.append(record)
            result.timings.append({"seed": seed, "epoch": epoch, "wall_time": time.perf_counter() - t0})
            if on_epoch is not None:
                on_epoch(record)
            log.info("seed %d epoch %d loss %.4f kl %.4f val ppl %.3f", seed, epoch, record["loss"],
                     record["kl"], val_ppl)
            if val_ppl < best:
                best = val_ppl
                result.checkpoint = Checkpoint(model.state(), mconf.to_dict(), epoch, val_ppl, seed)
    except (Divergence, FloatingPointError) as exc:
        result.error = str(exc)
        log.warning("seed %d aborted: %s", seed, exc)
    return result


def _train_seed_job(args):
    return train_seed(*args)


def train(config, train_corpus, valid_corpus, vocab_size, workers=1):
    """Train every configured seed; returns one SeedResult per seed in seed order."""
    jobs = [(config, seed, train_corpus, valid_corpus, vocab_size) for seed in config.seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_train_seed_job, jobs))
    return [train_seed(*job) for job in jobs]
