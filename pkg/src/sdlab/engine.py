"""Draft-then-verify decoding loop with per-step reporting and the
mean-accepted-tokens metric.

One "target call" is one block verification. Every call appends at
least one token: the correction draw on rejection, or the bonus draw
(when enabled) on full acceptance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import RandomSource, residual_distribution, sample, softmax
from .errors import ConfigError, UndefinedMetricError
from .policies import ACCEPT_RELAXED, Decision, PolicyConfig, TokenContext, verify_token

GREEDY = "greedy"
SAMPLE = "sample"


@dataclass
class EngineConfig:
    policy: PolicyConfig
    max_new_tokens: int
    gamma: int = 16
    seed: int = 0
    bonus_token: bool = True
    # greedy/greedy is the deterministic default: drafting takes the draft
    # argmax, stage-1 verification accepts iff the drafted token is the
    # target argmax, and correction/bonus draws take the target argmax.
    # "sample" restores the stochastic counterpart of each piece.
    draft_mode: str = GREEDY
    target_mode: str = GREEDY

    def __post_init__(self):
        if self.gamma < 1 or self.max_new_tokens < 1:
            raise ConfigError("gamma and max_new_tokens must be >= 1")
        if self.draft_mode not in (GREEDY, SAMPLE) or self.target_mode not in (GREEDY, SAMPLE):
            raise ConfigError("draft_mode/target_mode must be 'greedy' or 'sample'")


@dataclass
class StepReport:
    proposed: int
    accepted_count: int
    relaxed_count: int
    reject_position: Optional[int]
    appended_tokens: int

    def to_dict(self) -> dict:
        return {
            "proposed": self.proposed,
            "accepted_count": self.accepted_count,
            "relaxed_count": self.relaxed_count,
            "reject_position": self.reject_position,
            "appended_tokens": self.appended_tokens,
        }


@dataclass
class RunMetrics:
    mat: float
    acceptance_rate: float
    relaxed_fraction: float
    total_target_calls: int
    output_len: int
    exact_match_vs_target_greedy: float


@dataclass
class RunResult:
    tokens: list[int]
    metrics: RunMetrics
    reports: list[StepReport]
    decisions: list[Decision] = field(repr=False, default_factory=list)


def _argmax(z) -> int:
    return int(np.argmax(z))


def greedy_reference(target, prompt, length: int) -> list[int]:
    """Target-only argmax decoding; the desk-scale quality yardstick."""
    cur = list(prompt)
    out = []
    for _ in range(length):
        _, z = target.logits(cur)
        tok = _argmax(z)
        out.append(tok)
        cur.append(tok)
    return out


def mat(reports) -> float:
    """Mean appended tokens per target call."""
    reports = list(reports)
    if not reports:
        raise UndefinedMetricError("MAT over an empty report list")
    return sum(r.appended_tokens for r in reports) / len(reports)


def generate(draft, target, prompt, cfg: EngineConfig) -> RunResult:
    """Run speculative decoding until max_new_tokens are produced.

    Per block: the draft proposes up to gamma tokens autoregressively,
    the target is evaluated at every drafted position (one call), the
    policy verifies left to right; the first rejection triggers a
    residual-correction draw and discards the rest of the block, and a
    fully accepted block earns a bonus token from the target's
    next-position distribution. Deterministic given the seed.
    """
    prompt = [int(t) for t in prompt]
    if not prompt:
        raise ConfigError("prompt must be non-empty")
    root = RandomSource(cfg.seed)
    draft_rng = root.stream("draft-sampling")
    verify_rng = root.stream("verification-uniforms")
    correction_rng = root.stream("target-sampling")

    prefix = list(prompt)
    reports: list[StepReport] = []
    decisions: list[Decision] = []

    while len(prefix) - len(prompt) < cfg.max_new_tokens:
        remaining = cfg.max_new_tokens - (len(prefix) - len(prompt))
        gamma_eff = min(cfg.gamma, remaining)

        drafted: list[int] = []
        draft_states = []
        cur = list(prefix)
        for _ in range(gamma_eff):
            h_d, z_d = draft.logits(cur)
            q = softmax(z_d)
            tok = _argmax(z_d) if cfg.draft_mode == GREEDY else sample(q, draft_rng)
            draft_states.append((h_d, z_d, q))
            drafted.append(tok)
            cur.append(tok)

        greedy_target = cfg.target_mode == GREEDY
        target_states = []
        for i in range(gamma_eff):
            h_t, z_t = target.logits(prefix + drafted[:i])
            target_states.append((h_t, z_t, softmax(z_t)))

        accepted = 0
        relaxed = 0
        reject_position = None
        appended: list[int] = []
        for i in range(gamma_eff):
            h_d, z_d, q = draft_states[i]
            h_t, z_t, p = target_states[i]
            ctx = TokenContext(drafted=drafted[i], p_t=p, q_t=q, z_t=z_t, z_d=z_d,
                               h_t=h_t, h_d=h_d, position=len(prefix) + i,
                               deterministic_stage1=greedy_target)
            dec = verify_token(cfg.policy, ctx, verify_rng)
            decisions.append(dec)
            if dec.accepted:
                accepted += 1
                relaxed += dec.verdict == ACCEPT_RELAXED
                appended.append(drafted[i])
            else:
                reject_position = i
                if greedy_target:
                    appended.append(_argmax(z_t))
                else:
                    appended.append(sample(residual_distribution(p, q), correction_rng))
                break

        if reject_position is None and cfg.bonus_token:
            _, z_next = target.logits(prefix + appended)
            appended.append(_argmax(z_next) if greedy_target
                            else sample(softmax(z_next), correction_rng))

        prefix.extend(appended)
        reports.append(StepReport(proposed=gamma_eff, accepted_count=accepted,
                                  relaxed_count=relaxed, reject_position=reject_position,
                                  appended_tokens=len(appended)))

    tokens = prefix[len(prompt):]
    proposed_total = sum(r.proposed for r in reports)
    accepted_total = sum(r.accepted_count for r in reports)
    relaxed_total = sum(r.relaxed_count for r in reports)
    reference = greedy_reference(target, prompt, len(tokens))
    matches = sum(a == b for a, b in zip(tokens, reference))
    metrics = RunMetrics(
        mat=mat(reports),
        acceptance_rate=accepted_total / proposed_total if proposed_total else 0.0,
        relaxed_fraction=relaxed_total / accepted_total if accepted_total else 0.0,
        total_target_calls=len(reports),
        output_len=len(tokens),
        exact_match_vs_target_greedy=matches / len(tokens) if tokens else 0.0,
    )
    return RunResult(tokens=tokens, metrics=metrics, reports=reports, decisions=decisions)
