"""Vocabulary-indexed numeric primitives.

Logit vectors and probability distributions are plain float64 numpy
arrays; the validators below enforce their invariants at module
boundaries.  All log-scale quantities are in nats.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import (
    InvalidDistributionError,
    InvalidLogitsError,
    UndefinedResidualError,
)

# Floor applied before taking logs of probabilities; keeps zero-mass
# tokens from producing -inf without moving desk-scale values.
PROB_EPS = 1e-12

PROB_SUM_TOL = 1e-9


def as_logits(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.size == 0:
        raise InvalidLogitsError(f"expected non-empty 1-d logit vector, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise InvalidLogitsError("logits must be finite")
    return z


def as_prob_dist(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise InvalidDistributionError(f"expected non-empty 1-d probability vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise InvalidDistributionError("probabilities must be finite")
    if np.any(p < 0):
        raise InvalidDistributionError("probabilities must be non-negative")
    if abs(float(p.sum()) - 1.0) > PROB_SUM_TOL:
        raise InvalidDistributionError(f"probabilities sum to {p.sum()!r}, expected 1")
    return p


def softmax(z) -> np.ndarray:
    """Max-subtracted softmax; sums to 1 to ~1e-12."""
    z = as_logits(z)
    e = np.exp(z - z.max())
    return e / e.sum()


def log_sum_exp(z) -> float:
    """log sum exp(z_i), computed with max subtraction."""
    z = as_logits(z)
    m = z.max()
    return float(m + np.log(np.exp(z - m).sum()))


def sample(p, rng: "RandomSource") -> int:
    """Inverse-CDF draw from p using a single uniform.

    Tokens are scanned in index order, so ties and float edge cases
    break deterministically toward lower indices.
    """
    p = np.asarray(p, dtype=np.float64)
    total = float(p.sum())
    if total <= 0 or np.any(p < 0):
        raise InvalidDistributionError("cannot sample from a degenerate distribution")
    u = rng.uniform() * total
    cdf = np.cumsum(p)
    idx = int(np.searchsorted(cdf, u, side="right"))
    return min(idx, p.size - 1)


def residual_distribution(p, q, rejected: int | None = None) -> np.ndarray:
    """Lossless-rejection correction distribution norm(max(0, p - q)).

    `rejected` is accepted for audit symmetry with the verification
    call site; the standard residual does not depend on it.
    """
    p = as_prob_dist(p)
    q = as_prob_dist(q)
    if p.shape != q.shape:
        raise InvalidDistributionError("p and q must share a vocabulary")
    r = np.maximum(p - q, 0.0)
    total = float(r.sum())
    if total <= 0.0:
        raise UndefinedResidualError("residual undefined for p == q")
    return r / total


def _name_key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "big")


class RandomSource:
    """Seeded random stream, splittable into independent named substreams.

    A substream's state depends only on the root seed and the sequence
    of names used to derive it, so any component can be re-run in
    isolation. Each instance is owned by exactly one run at a time.
    """

    def __init__(self, seed: int, _path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._path = tuple(_path)
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, *self._path])
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def stream(self, name: str) -> "RandomSource":
        """Derive an independent child stream keyed by name."""
        return RandomSource(self.seed, self._path + (_name_key(name),))

    def uniform(self) -> float:
        """One draw from Uniform[0, 1)."""
        return float(self._gen.random())

    def integers(self, low: int, high: int) -> int:
        """One integer from [low, high)."""
        return int(self._gen.integers(low, high))

    def normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def uniforms(self, shape) -> np.ndarray:
        return self._gen.random(shape)
