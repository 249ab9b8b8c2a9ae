"""Token-probability models behind one interface: prefix -> (features, logits).

Features are None for models without an explicit feature map (n-gram,
mixtures, trace replay); the linear-head family exposes h with
z = W h + b exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import RandomSource, as_logits
from .errors import ConfigError, ReplayExhaustedError, TrainingError

DEFAULT_VOCAB = 64
DEFAULT_FEATURE_DIM = 32
FEATURE_WINDOW = 4


class HashedBagFeatures:
    """Deterministic prefix embedding: the last `window` tokens are
    hashed into buckets (bag, unordered) and pushed through a fixed
    seeded random projection to R^dim."""

    def __init__(self, dim: int = DEFAULT_FEATURE_DIM, n_buckets: int | None = None,
                 window: int = FEATURE_WINDOW, seed: int = 0):
        self.dim = dim
        self.n_buckets = n_buckets if n_buckets is not None else 2 * dim
        self.window = window
        self.seed = seed
        rng = RandomSource(seed).stream("feature-projection")
        self._proj = rng.normal((self.n_buckets, dim)) / np.sqrt(self.window)

    def _bucket(self, token: int) -> int:
        return (token * 2654435761 + self.seed * 97 + 12582917) % self.n_buckets

    def _sign(self, token: int) -> float:
        return 1.0 if (token * 40503 + self.seed) % 2 == 0 else -1.0

    def __call__(self, prefix) -> np.ndarray:
        h = np.zeros(self.dim)
        for tok in list(prefix)[-self.window:]:
            h += self._sign(int(tok)) * self._proj[self._bucket(int(tok))]
        return h


class LinearHeadModel:
    """Explicit-feature model with z = W h + b."""

    def __init__(self, weights: np.ndarray, bias: np.ndarray, embed: HashedBagFeatures):
        weights = np.asarray(weights, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weights.ndim != 2 or bias.shape != (weights.shape[0],):
            raise ConfigError("head weights must be (V, d) with a length-V bias")
        if weights.shape[1] != embed.dim:
            raise ConfigError("head width must match the feature dimension")
        self.weights = weights
        self.bias = bias
        self.embed = embed

    @property
    def vocab_size(self) -> int:
        return self.weights.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]

    def logits(self, prefix):
        h = self.embed(prefix)
        return h, self.weights @ h + self.bias


@dataclass
class ModelPairSpec:
    """Configuration for a coupled draft/target pair.

    coupling lam in [0, 1]: the target head is lam * draft head +
    (1 - lam) * an independent head, so lam=1 gives identical models
    and lam=0 gives independent ones.
    """

    kind: str = "linear_head"   # linear_head | ngram | trace_replay
    coupling: float = 1.0
    seed: int = 0
    vocab_size: int = DEFAULT_VOCAB
    feature_dim: int = DEFAULT_FEATURE_DIM
    logit_scale: float = 4.0


def synthetic_pair(spec: ModelPairSpec) -> tuple[LinearHeadModel, LinearHeadModel]:
    """Draft/target linear-head pair with a shared embedding map."""
    lam = spec.coupling
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"coupling must be in [0, 1], got {lam}")
    rng = RandomSource(spec.seed)
    embed = HashedBagFeatures(dim=spec.feature_dim, seed=spec.seed)
    scale = spec.logit_scale / np.sqrt(spec.feature_dim)
    shape_w = (spec.vocab_size, spec.feature_dim)
    w_d = rng.stream("draft-head-w").normal(shape_w) * scale
    b_d = rng.stream("draft-head-b").normal(spec.vocab_size) * 0.5
    w_i = rng.stream("indep-head-w").normal(shape_w) * scale
    b_i = rng.stream("indep-head-b").normal(spec.vocab_size) * 0.5
    w_t = lam * w_d + (1.0 - lam) * w_i
    b_t = lam * b_d + (1.0 - lam) * b_i
    draft = LinearHeadModel(w_d, b_d, embed)
    target = LinearHeadModel(w_t, b_t, embed)
    return draft, target


@dataclass
class NgramModel:
    """Back-off n-gram LM with additive smoothing.

    counts[m] maps a length-m context tuple to a length-V count vector;
    unseen contexts fall back to order m-1 recursively down to the
    unigram, which always exists for a non-empty corpus.
    """

    order: int
    alpha: float
    vocab_size: int
    counts: list[dict[tuple[int, ...], np.ndarray]] = field(repr=False, default_factory=list)

    def logits(self, prefix):
        prefix = tuple(int(t) for t in prefix)
        for m in range(min(self.order - 1, len(prefix)), -1, -1):
            ctx = prefix[len(prefix) - m:]
            vec = self.counts[m].get(ctx)
            if vec is not None:
                probs = (vec + self.alpha) / (vec.sum() + self.alpha * self.vocab_size)
                return None, np.log(probs)
        raise TrainingError("model has no unigram counts")  # pragma: no cover


def ngram_train(corpus, n: int, alpha: float, vocab_size: int) -> NgramModel:
    """Count every length-(m+1) window for m = 0..n-1 over all sequences."""
    if n < 1:
        raise ConfigError("n-gram order must be >= 1")
    if alpha <= 0:
        raise ConfigError("smoothing alpha must be positive")
    seqs = [list(int(t) for t in seq) for seq in corpus]
    if not any(seqs):
        raise TrainingError("empty corpus")
    counts: list[dict[tuple[int, ...], np.ndarray]] = [dict() for _ in range(n)]
    for seq in seqs:
        for t, tok in enumerate(seq):
            if not 0 <= tok < vocab_size:
                raise TrainingError(f"token {tok} outside vocabulary of size {vocab_size}")
            for m in range(min(n - 1, t) + 1):
                ctx = tuple(seq[t - m:t])
                vec = counts[m].get(ctx)
                if vec is None:
                    vec = counts[m][ctx] = np.zeros(vocab_size)
                vec[tok] += 1.0
    return NgramModel(order=n, alpha=alpha, vocab_size=vocab_size, counts=counts)


class MixtureModel:
    """Log-space coupling z = lam * z_primary + (1 - lam) * z_other
    (a geometric mixture after softmax).

    Used to build coupled n-gram draft/target pairs: probability-space
    mixing would cap KL(p || q) at log(1/lam), which makes threshold
    grids above that value inert; geometric mixing keeps the KL range
    open while lam=1 still gives an identical model.
    """

    def __init__(self, primary, other, lam: float):
        if not 0.0 <= lam <= 1.0:
            raise ConfigError(f"coupling must be in [0, 1], got {lam}")
        self.primary = primary
        self.other = other
        self.lam = lam

    def logits(self, prefix):
        _, z_p = self.primary.logits(prefix)
        _, z_o = self.other.logits(prefix)
        return None, self.lam * z_p + (1.0 - self.lam) * z_o


def markov_corpus(vocab_size: int, length: int, seed: int,
                  concentration: float = 0.35, n_sequences: int = 1) -> list[list[int]]:
    """Synthetic structured corpus sampled from a seeded random Markov
    chain with peaked rows; gives n-gram models non-trivial statistics."""
    rng = RandomSource(seed)
    gumbel = -np.log(-np.log(np.clip(
        rng.stream("transition-matrix").uniforms((vocab_size, vocab_size)), 1e-12, 1 - 1e-12)))
    rows = np.exp(gumbel / concentration)
    rows /= rows.sum(axis=1, keepdims=True)
    walk = rng.stream("walk")
    out = []
    for s in range(n_sequences):
        tok = walk.integers(0, vocab_size)
        seq = [tok]
        for _ in range(length - 1):
            u = walk.uniform()
            tok = int(np.searchsorted(np.cumsum(rows[tok]), u, side="right"))
            tok = min(tok, vocab_size - 1)
            seq.append(tok)
        out.append(seq)
    return out


def ngram_pair(corpus, n: int, alpha: float, vocab_size: int,
               coupling: float, seed: int,
               calibration: float = 5.0) -> tuple[MixtureModel, NgramModel]:
    """Coupled (draft, target) n-gram pair.

    The target is trained on the corpus; the draft geometrically mixes
    the target with a model trained on an independently generated
    corpus. The effective mixing weight is coupling**calibration
    (monotone, fixed endpoints): without the exponent, n-gram logit
    spreads leave high couplings with per-step KL far below the
    threshold ranges worth sweeping.
    """
    if not 0.0 <= coupling <= 1.0:
        raise ConfigError(f"coupling must be in [0, 1], got {coupling}")
    target = ngram_train(corpus, n, alpha, vocab_size)
    noise_corpus = markov_corpus(vocab_size, sum(len(s) for s in corpus), seed=seed + 7919)
    other = ngram_train(noise_corpus, n, alpha, vocab_size)
    draft = MixtureModel(target, other, coupling ** calibration)
    return draft, target


class TraceReplayModel:
    """Replays one side (draft or target) of a recorded trace.

    Records are indexed by prefix length; the replayed trajectory must
    follow the recorded tokens, which the engine guarantees under
    greedy-target replay.
    """

    def __init__(self, records, side: str, vocab_size: int):
        if side not in ("draft", "target"):
            raise ConfigError(f"side must be 'draft' or 'target', got {side!r}")
        self.side = side
        self.vocab_size = vocab_size
        self._by_len: dict[int, tuple[np.ndarray | None, np.ndarray]] = {}
        for rec in records:
            z = rec.dense_logits(side, vocab_size)
            feats = rec.draft_features if side == "draft" else rec.target_features
            h = None if feats is None else np.asarray(feats, dtype=np.float64)
            self._by_len[rec.prefix_len] = (h, as_logits(z))

    @property
    def max_prefix_len(self) -> int:
        return max(self._by_len)

    def logits(self, prefix):
        n = len(prefix)
        entry = self._by_len.get(n)
        if entry is None:
            raise ReplayExhaustedError(f"no recorded step at prefix length {n}")
        h, z = entry
        return h, z.copy()
