"""Distributional statistics: entropy, KL (direct and Bregman form),
Fisher quadratic forms, pairwise logit-gap primitives, top-k margins,
boundary-crossing pairs, and the induced KL lower bound.

The Fisher matrix diag(p) - p p^T is never materialized; quadratic
forms use the two-moment formula, O(V) memory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import PROB_EPS, as_logits, as_prob_dist, log_sum_exp, softmax
from .errors import ConfigError, DimensionMismatchError, InvalidPairError


def entropy(pi) -> float:
    """Shannon entropy -sum pi ln pi in nats (eps-floored logs)."""
    pi = as_prob_dist(pi)
    return float(-(pi * np.log(np.maximum(pi, PROB_EPS))).sum())


def kl(p, q, reverse: bool = False) -> float:
    """KL divergence sum p ln(p/q), target-first by default.

    q is floored before the log; terms with p == 0 contribute nothing.
    `reverse=True` swaps the arguments (ablation only, never the default).
    """
    p = as_prob_dist(p)
    q = as_prob_dist(q)
    if p.shape != q.shape:
        raise DimensionMismatchError("p and q must share a vocabulary")
    if reverse:
        p, q = q, p
    logs = np.log(np.maximum(p, PROB_EPS)) - np.log(np.maximum(q, PROB_EPS))
    return float(np.dot(p, logs))


def kl_bregman(z_t, z_d) -> float:
    """KL(softmax(z_t) || softmax(z_d)) via the log-sum-exp potential:
    A(z_d) - A(z_t) + P_t . (z_t - z_d)."""
    z_t = as_logits(z_t)
    z_d = as_logits(z_d)
    if z_t.shape != z_d.shape:
        raise DimensionMismatchError("logit vectors must share a vocabulary")
    p_t = softmax(z_t)
    return float(log_sum_exp(z_d) - log_sum_exp(z_t) + np.dot(p_t, z_t - z_d))


def fisher_quadratic(p_d, delta) -> float:
    """(1/2) delta^T (diag(p) - p p^T) delta = (1/2)(E[d^2] - E[d]^2)."""
    p_d = as_prob_dist(p_d)
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != p_d.shape:
        raise DimensionMismatchError("delta must match the vocabulary")
    m1 = float(np.dot(p_d, delta))
    m2 = float(np.dot(p_d, delta * delta))
    return 0.5 * (m2 - m1 * m1)


def pairwise_quadratic(p_d, delta) -> float:
    """(1/4) sum_ij p_i p_j (delta_i - delta_j)^2, evaluated from its own
    expansion (independent of fisher_quadratic, which it equals exactly)."""
    p_d = as_prob_dist(p_d)
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != p_d.shape:
        raise DimensionMismatchError("delta must match the vocabulary")
    # Explicit V x V double sum, kept independent of fisher_quadratic so
    # the identity between them is a genuine cross-check.
    gaps = np.subtract.outer(delta, delta)
    weights = np.outer(p_d, p_d)
    return 0.25 * float((weights * gaps * gaps).sum())


def primitive(z_t, z_d, i: int, j: int) -> float:
    """Pairwise logit-gap difference (z_t(i)-z_t(j)) - (z_d(i)-z_d(j))."""
    z_t = as_logits(z_t)
    z_d = as_logits(z_d)
    if z_t.shape != z_d.shape:
        raise DimensionMismatchError("logit vectors must share a vocabulary")
    v = z_t.size
    if i == j:
        raise InvalidPairError("primitive requires i != j")
    if not (0 <= i < v and 0 <= j < v):
        raise InvalidPairError(f"pair ({i}, {j}) out of range for V={v}")
    return float((z_t[i] - z_t[j]) - (z_d[i] - z_d[j]))


@dataclass(frozen=True)
class TopKReport:
    k: int
    indices: frozenset[int]   # the k top-logit token ids
    margin: float             # z^(k) - z^(k+1) >= 0


def topk_report(z, k: int) -> TopKReport:
    """Top-k index set and margin; ties broken toward lower token index."""
    z = as_logits(z)
    v = z.size
    if not 1 <= k < v:
        raise ConfigError(f"k must satisfy 1 <= k < V, got k={k}, V={v}")
    # stable sort on (-logit, index): equal logits rank lower-index first
    order = np.lexsort((np.arange(v), -z))
    margin = float(z[order[k - 1]] - z[order[k]])
    return TopKReport(k=k, indices=frozenset(int(t) for t in order[:k]), margin=margin)


@dataclass(frozen=True)
class BoundaryCrossing:
    i: int
    j: int
    delta: float


def boundary_crossing_pair(z_t, z_d, k: int) -> BoundaryCrossing | None:
    """If the top-k sets of z_t and z_d differ, return the pair
    (i in T_k \\ D_k, j in D_k \\ T_k) maximizing the primitive; the
    returned value satisfies delta >= margin_t + margin_d.  None when
    the sets agree."""
    rep_t = topk_report(z_t, k)
    rep_d = topk_report(z_d, k)
    only_t = sorted(rep_t.indices - rep_d.indices)
    only_d = sorted(rep_d.indices - rep_t.indices)
    if not only_t:
        return None
    best = None
    for i in only_t:
        for j in only_d:
            d = primitive(z_t, z_d, i, j)
            if best is None or d > best.delta:
                best = BoundaryCrossing(i=i, j=j, delta=d)
    return best


def kl_lower_bound(p_d, i: int, j: int, margin_t: float, margin_d: float) -> float:
    """(1/4) p_d(i) p_d(j) (margin_t + margin_d)^2."""
    p_d = as_prob_dist(p_d)
    v = p_d.size
    if i == j or not (0 <= i < v and 0 <= j < v):
        raise InvalidPairError(f"invalid pair ({i}, {j}) for V={v}")
    if margin_t < 0 or margin_d < 0:
        raise ConfigError("margins must be non-negative")
    g = margin_t + margin_d
    return 0.25 * float(p_d[i]) * float(p_d[j]) * g * g


def total_variation(p, q) -> float:
    """TV distance; used only by acceptance-style tests."""
    p = as_prob_dist(p)
    q = as_prob_dist(q)
    return 0.5 * float(np.abs(p - q).sum())
