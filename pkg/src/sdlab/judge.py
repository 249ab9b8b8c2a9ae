"""Linear judge: logistic training on mined labels, scoring, and the
primitive-basis analysis connecting the trained weights to pairwise
logit-gap primitives.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from .core import RandomSource
from .divergence import primitive
from .errors import ConfigError, DimensionMismatchError, InvalidPairError, TrainingError


@dataclass(frozen=True)
class JudgeModel:
    """sigma(w . x + b) over the concatenated feature x = [h_t; h_d]."""

    w: np.ndarray
    b: float
    feature_dim: int    # d; w has dimension 2d

    def save(self, path) -> None:
        payload = {"dim": self.feature_dim, "w": [float(v) for v in self.w], "b": float(self.b)}
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f)

    @classmethod
    def load(cls, path) -> "JudgeModel":
        with open(path, encoding="utf-8") as f:
            payload = json.load(f)
        return cls(w=np.asarray(payload["w"], dtype=np.float64), b=float(payload["b"]),
                   feature_dim=int(payload["dim"]))


def sigmoid(t):
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


def judge_score(judge: JudgeModel, x) -> float:
    """Criticality score sigma(w.x + b) in (0, 1)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != judge.w.shape:
        raise DimensionMismatchError(
            f"feature dimension {x.shape} does not match judge {judge.w.shape}")
    return float(sigmoid(np.dot(judge.w, x) + judge.b))


@dataclass
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 2000
    l2_penalty: float = 1e-3
    seed: int = 0
    convergence_tol: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs <= 0:
            raise ConfigError("learning rate and epochs must be positive")


def logistic_loss_grad(w, b, X, y, l2: float = 0.0):
    """Mean logistic loss and its analytic gradient (L2 on w only)."""
    z = X @ w + b
    # log(1 + exp(-s z)) with s = +-1, stable form
    s = 2.0 * y - 1.0
    m = -s * z
    loss = float(np.mean(np.logaddexp(0.0, m))) + 0.5 * l2 * float(np.dot(w, w))
    p = sigmoid(z)
    resid = p - y
    grad_w = X.T @ resid / len(y) + l2 * w
    grad_b = float(np.mean(resid))
    return loss, grad_w, grad_b


def train_linear_judge(data, cfg: TrainConfig) -> JudgeModel:
    """Full-batch gradient descent with backtracking on the step size,
    so the loss is non-increasing per epoch. Features are standardized
    for the fit and the affine map is folded back into (w, b), so the
    returned judge operates on raw features."""
    X = np.asarray(data.features, dtype=np.float64)
    y = np.asarray(data.labels, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise DimensionMismatchError("features must be (n, 2d) with matching labels")
    classes = np.unique(y)
    if len(classes) < 2:
        raise TrainingError("judge training needs both classes present")

    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd < 1e-8, 1.0, sd)
    Xs = (X - mu) / sd

    w = np.zeros(X.shape[1])
    b = 0.0
    lr = cfg.learning_rate
    loss, gw, gb = logistic_loss_grad(w, b, Xs, y, cfg.l2_penalty)
    for _ in range(cfg.epochs):
        gnorm = float(np.sqrt(np.dot(gw, gw) + gb * gb))
        if gnorm < cfg.convergence_tol:
            break
        while True:
            w_new = w - lr * gw
            b_new = b - lr * gb
            loss_new, gw_new, gb_new = logistic_loss_grad(w_new, b_new, Xs, y, cfg.l2_penalty)
            if loss_new <= loss + 1e-12 or lr < 1e-12:
                break
            lr *= 0.5
        w, b, loss, gw, gb = w_new, b_new, loss_new, gw_new, gb_new

    w_raw = w / sd
    b_raw = b - float(np.dot(w / sd, mu))
    return JudgeModel(w=w_raw, b=b_raw, feature_dim=X.shape[1] // 2)


def affine_primitive_components(W_t, b_t, W_d, b_d, i: int, j: int):
    """Affine form of the primitive: vector a_ij in R^{2d} and offset
    kappa_ij with a_ij . [h_t; h_d] + kappa_ij = primitive(z_t, z_d, i, j).
    a_ij = [W_t^T (e_i - e_j); -W_d^T (e_i - e_j)], kappa_ij = (e_i - e_j).(b_t - b_d)."""
    W_t = np.asarray(W_t, dtype=np.float64)
    W_d = np.asarray(W_d, dtype=np.float64)
    b_t = np.asarray(b_t, dtype=np.float64)
    b_d = np.asarray(b_d, dtype=np.float64)
    if W_t.shape != W_d.shape:
        raise DimensionMismatchError("draft and target heads must share shape")
    v = W_t.shape[0]
    if i == j or not (0 <= i < v and 0 <= j < v):
        raise InvalidPairError(f"invalid pair ({i}, {j}) for V={v}")
    a = np.concatenate([W_t[i] - W_t[j], -(W_d[i] - W_d[j])])
    kappa = float((b_t[i] - b_t[j]) - (b_d[i] - b_d[j]))
    return a, kappa


@dataclass
class PrimitiveBasisReport:
    """Least-squares representation of the judge weights in the frame
    of primitive directions a_ij."""

    pairs: list[tuple[int, int]]
    beta: np.ndarray
    residual_norm_ratio: float
    adjusted_bias: float
    frame_rank: int


def select_pairs(v: int, dim2: int, pair_budget: int | None, seed: int = 0) -> list[tuple[int, int]]:
    """All pairs i < j for small vocabularies, else a seeded sample."""
    all_pairs = [(i, j) for i in range(v) for j in range(i + 1, v)]
    if v <= 128:
        return all_pairs
    budget = pair_budget if pair_budget is not None else 4 * dim2
    rng = RandomSource(seed).stream("basis-pairs")
    picked = set()
    while len(picked) < min(budget, len(all_pairs)):
        i = rng.integers(0, v)
        j = rng.integers(0, v)
        if i != j:
            picked.add((min(i, j), max(i, j)))
    return sorted(picked)


def primitive_basis_fit(judge: JudgeModel, W_t, W_d, b_t=None, b_d=None,
                        pair_budget: int | None = None, seed: int = 0) -> PrimitiveBasisReport:
    """Solve min_beta || sum beta_ij a_ij - w || over the selected pairs.

    When the a_ij frame spans R^{2d} the residual ratio is ~0 and the
    judge decision surface is exactly a linear combination of the
    primitives with adjusted bias b' = b - sum beta_ij kappa_ij.
    Rank deficiency is reported through the ratio, not raised.
    """
    W_t = np.asarray(W_t, dtype=np.float64)
    W_d = np.asarray(W_d, dtype=np.float64)
    v, d = W_t.shape
    if b_t is None:
        b_t = np.zeros(v)
    if b_d is None:
        b_d = np.zeros(v)
    pairs = select_pairs(v, 2 * d, pair_budget, seed)
    A = np.empty((len(pairs), 2 * d))
    kappas = np.empty(len(pairs))
    for r, (i, j) in enumerate(pairs):
        A[r], kappas[r] = affine_primitive_components(W_t, b_t, W_d, b_d, i, j)
    beta, _, rank, _ = np.linalg.lstsq(A.T, judge.w, rcond=None)
    recon = A.T @ beta
    wnorm = float(np.linalg.norm(judge.w))
    ratio = float(np.linalg.norm(recon - judge.w)) / max(wnorm, 1e-300)
    b_adj = float(judge.b - np.dot(beta, kappas))
    return PrimitiveBasisReport(pairs=pairs, beta=beta, residual_norm_ratio=ratio,
                                adjusted_bias=b_adj, frame_rank=int(rank))


def basis_score(report: PrimitiveBasisReport, z_t, z_d) -> float:
    """Judge score recomputed through the primitive representation:
    sigma(sum beta_ij Delta_ij + b')."""
    acc = 0.0
    for (i, j), beta in zip(report.pairs, report.beta):
        if beta != 0.0:
            acc += beta * primitive(z_t, z_d, i, j)
    return float(sigmoid(np.asarray(acc + report.adjusted_bias)))


@dataclass
class CorrelationReport:
    bin_edges: np.ndarray
    mean_kl: list[float | None]      # None for empty bins
    counts: list[int]
    rank_correlation: float | None   # Spearman over non-empty bins
    extra_means: dict[str, list[float | None]] = field(default_factory=dict)


def correlation_report(scores, kls, n_bins: int = 10, extras: dict | None = None) -> CorrelationReport:
    """Bin judge scores into equal-width bins over [0, 1] and report the
    per-bin mean KL plus the Spearman correlation between bin index and
    mean KL. `extras` maps names to additional per-sample values (for
    example entropies) averaged per bin the same way."""
    scores = np.asarray(scores, dtype=np.float64)
    kls = np.asarray(kls, dtype=np.float64)
    if scores.size == 0 or scores.shape != kls.shape:
        raise DimensionMismatchError("scores and kls must be equal-length and non-empty")
    if n_bins < 2:
        raise ConfigError("need at least 2 bins")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idx = np.clip(np.digitize(scores, edges[1:-1]), 0, n_bins - 1)
    counts, means = [], []
    extra_means: dict[str, list[float | None]] = {k: [] for k in (extras or {})}
    for bin_i in range(n_bins):
        mask = idx == bin_i
        c = int(mask.sum())
        counts.append(c)
        means.append(float(kls[mask].mean()) if c else None)
        for name, vals in (extras or {}).items():
            vals = np.asarray(vals, dtype=np.float64)
            extra_means[name].append(float(vals[mask].mean()) if c else None)
    occupied = [(bi, m) for bi, m in enumerate(means) if m is not None]
    if len(occupied) < 2:
        rho = None
    else:
        r = spearmanr([bi for bi, _ in occupied], [m for _, m in occupied]).statistic
        rho = None if np.isnan(r) else float(r)
    return CorrelationReport(bin_edges=edges, mean_kl=means, counts=counts,
                             rank_correlation=rho, extra_means=extra_means)
