"""Counterfactual supervision mining at desk scale.

Divergence points are positions on the target-greedy trajectory where
the draft's greedy choice differs from the target's. Each one is
labeled by rollout pairs: continue with the target model from
prefix+substituted and from prefix+target_token, and call the rollout
critical when the extracted answers differ.

The two continuations of one rollout share a derived random stream
(common random numbers), so mild substitutions that leave the target's
distributions nearly unchanged tend to re-converge while disruptive
ones do not; rollouts are independent of each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import RandomSource, sample, softmax
from .errors import ConfigError, DimensionMismatchError, FeatureUnavailableError


@dataclass
class ToyTask:
    """Modular-arithmetic chain prompts over the token alphabet.

    Tokens 0..9 are digit tokens; the small ids after them encode the
    operator, 'mod' and '=' markers. The answer of a generated sequence
    is its final maximal run of digit tokens, so "substitution changed
    the answer" is exactly checkable.
    """

    vocab_size: int = 64
    horizon: int = 24
    n_digits: int = 10
    plus_token: int = 10
    mod_token: int = 11
    eq_token: int = 12
    max_answer_len: int = 4

    def __post_init__(self):
        if self.vocab_size < 16:
            raise ConfigError("toy task needs at least 16 tokens")

    def _encode_number(self, n: int) -> list[int]:
        return [int(c) for c in str(n)]

    def prompt(self, rng: RandomSource) -> list[int]:
        a = rng.integers(2, 100)
        b = rng.integers(2, 100)
        m = rng.integers(2, 10)
        return (self._encode_number(a) + [self.plus_token] + self._encode_number(b)
                + [self.mod_token] + self._encode_number(m) + [self.eq_token])

    def prompts(self, seed: int, count: int) -> list[list[int]]:
        rng = RandomSource(seed).stream("task-prompts")
        return [self.prompt(rng) for _ in range(count)]

    def extract_answer(self, tokens) -> tuple[int, ...] | None:
        """Final maximal run of digit tokens, truncated to max_answer_len;
        None when the sequence contains no digits."""
        run: list[int] = []
        best: list[int] | None = None
        for tok in tokens:
            if 0 <= tok < self.n_digits:
                run.append(int(tok))
            else:
                if run:
                    best = run
                run = []
        if run:
            best = run
        if best is None:
            return None
        return tuple(best[-self.max_answer_len:])


@dataclass
class DivergencePoint:
    position: int               # offset from the prompt on the greedy trajectory
    prefix: list[int]
    draft_token: int
    target_token: int


@dataclass
class MinedLabel:
    prefix: list[int] = field(repr=False)
    position: int
    draft_token: int
    target_token: int
    criticality_fraction: float
    consistency_level: int
    k_rollouts: int
    no_answer_rollouts: int = 0   # rollouts counted critical for lack of an answer

    def to_dict(self) -> dict:
        return {
            "prefix": list(self.prefix),
            "position": self.position,
            "draft_token": self.draft_token,
            "target_token": self.target_token,
            "criticality_fraction": self.criticality_fraction,
            "consistency_level": self.consistency_level,
            "k_rollouts": self.k_rollouts,
            "no_answer_rollouts": self.no_answer_rollouts,
        }


def find_divergence_points(draft, target, prompt, horizon: int) -> list[DivergencePoint]:
    """Walk the target-greedy trajectory and report every position where
    the draft's argmax disagrees with the target's."""
    cur = [int(t) for t in prompt]
    points = []
    for pos in range(horizon):
        _, z_t = target.logits(cur)
        _, z_d = draft.logits(cur)
        t_tok = int(np.argmax(z_t))
        d_tok = int(np.argmax(z_d))
        if t_tok != d_tok:
            points.append(DivergencePoint(position=pos, prefix=list(cur),
                                          draft_token=d_tok, target_token=t_tok))
        cur.append(t_tok)
    return points


def _rollout(target, prefix, steps: int, temperature: float, rng: RandomSource) -> list[int]:
    cur = list(prefix)
    out = []
    for _ in range(steps):
        _, z = target.logits(cur)
        if temperature <= 0.0:
            tok = int(np.argmax(z))
        else:
            tok = sample(softmax(np.asarray(z) / temperature), rng)
        out.append(tok)
        cur.append(tok)
    return out


def counterfactual_label(draft, target, task: ToyTask, prefix, substituted: int,
                         target_token: int | None = None, k_rollouts: int = 4,
                         temperature: float = 0.8, seed: int = 0,
                         position: int = 0) -> MinedLabel:
    """Label one candidate substitution by k rollout pairs.

    A rollout continues generation with the target model from both
    prefix+substituted and prefix+target_token and is critical when the
    extracted answers differ; rollouts with a missing answer count as
    critical (conservative) and are tallied in no_answer_rollouts.
    """
    if k_rollouts < 1:
        raise ConfigError("need at least one rollout")
    prefix = [int(t) for t in prefix]
    if target_token is None:
        _, z_t = target.logits(prefix)
        target_token = int(np.argmax(z_t))
    root = RandomSource(seed).stream("mining-rollouts")
    steps = max(task.horizon - position - 1, 4)
    level = 0
    no_answer = 0
    for r in range(k_rollouts):
        stream_name = f"rollout-{r}"
        # common random numbers: both continuations replay the same stream
        roll_sub = _rollout(target, prefix + [substituted], steps, temperature,
                            root.stream(stream_name))
        roll_ref = _rollout(target, prefix + [target_token], steps, temperature,
                            root.stream(stream_name))
        ans_sub = task.extract_answer(prefix + [substituted] + roll_sub)
        ans_ref = task.extract_answer(prefix + [target_token] + roll_ref)
        if ans_sub is None or ans_ref is None:
            no_answer += 1
            level += 1
        elif ans_sub != ans_ref:
            level += 1
    return MinedLabel(prefix=prefix, position=position, draft_token=int(substituted),
                      target_token=int(target_token),
                      criticality_fraction=level / k_rollouts, consistency_level=level,
                      k_rollouts=k_rollouts, no_answer_rollouts=no_answer)


def mine_labels(draft, target, task: ToyTask, n_prompts: int, seed: int,
                k_rollouts: int = 4, temperature: float = 0.8,
                max_labels: int | None = None) -> list[MinedLabel]:
    """End-to-end mining: divergence points over a batch of prompts,
    each labeled counterfactually."""
    labels = []
    for p_idx, prompt in enumerate(task.prompts(seed, n_prompts)):
        for point in find_divergence_points(draft, target, prompt, task.horizon):
            labels.append(counterfactual_label(
                draft, target, task, point.prefix, point.draft_token,
                target_token=point.target_token, k_rollouts=k_rollouts,
                temperature=temperature, seed=seed * 1_000_003 + p_idx,
                position=point.position))
            if max_labels is not None and len(labels) >= max_labels:
                return labels
    return labels


def consistency_histogram(labels, k: int | None = None) -> list[int]:
    """Counts per consistency level 0..k."""
    labels = list(labels)
    if not labels:
        raise ConfigError("no labels to histogram")
    ks = {lab.k_rollouts for lab in labels}
    if len(ks) > 1:
        raise ConfigError(f"labels mix rollout counts {sorted(ks)}")
    k_used = ks.pop()
    if k is not None and k != k_used:
        raise ConfigError(f"labels were mined with k={k_used}, not {k}")
    counts = [0] * (k_used + 1)
    for lab in labels:
        counts[lab.consistency_level] += 1
    return counts


@dataclass
class JudgeDataset:
    """Rows of (x = [h_t; h_d], binary criticality label)."""

    features: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def class_balance(self) -> float:
        return float(self.labels.mean())


def build_judge_dataset(labels, draft, target, threshold_fraction: float = 0.5) -> JudgeDataset:
    """Binarize mined labels (critical iff fraction >= threshold) with
    features recomputed at each divergence prefix."""
    rows = []
    ys = []
    for lab in labels:
        h_t, _ = target.logits(lab.prefix)
        h_d, _ = draft.logits(lab.prefix)
        if h_t is None or h_d is None:
            raise FeatureUnavailableError("judge dataset needs feature-exposing models")
        rows.append(np.concatenate([h_t, h_d]))
        ys.append(1.0 if lab.criticality_fraction >= threshold_fraction else 0.0)
    if not rows:
        raise ConfigError("no labels supplied")
    X = np.stack(rows)
    if len({row.size for row in rows}) > 1:  # pragma: no cover
        raise DimensionMismatchError("inconsistent feature dimensions")
    return JudgeDataset(features=X, labels=np.asarray(ys))


def save_labels(labels, path) -> None:
    """JSON Lines, one object per mined label."""
    import json

    with open(path, "w", encoding="utf-8") as f:
        for lab in labels:
            f.write(json.dumps(lab.to_dict()) + "\n")
