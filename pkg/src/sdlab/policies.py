"""Per-token verification policies.

All variants share layered semantics: stage 1 runs the standard
stochastic accept test min(1, p_t(d)/q_t(d)); relaxed variants get a
second chance on stage-1 rejection, gated by the optional confidence
mask (no relaxation when max p_t exceeds mask_p).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .core import PROB_EPS, RandomSource
from .divergence import entropy, kl, topk_report
from .errors import ConfigError, FeatureUnavailableError
from .judge import JudgeModel, judge_score

ACCEPT_LOSSLESS = "accept_lossless"
ACCEPT_RELAXED = "accept_relaxed"
REJECT = "reject"


@dataclass(frozen=True)
class Lossless:
    name = "lossless"


@dataclass(frozen=True)
class TopK:
    k: int
    mask_p: Optional[float] = None
    name = "topk"

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("top-k needs k >= 1")
        _check_mask(self.mask_p)


@dataclass(frozen=True)
class TargetEntropy:
    tau: float
    mask_p: Optional[float] = None
    name = "target_entropy"

    def __post_init__(self):
        _check_mask(self.mask_p)


@dataclass(frozen=True)
class DraftEntropy:
    tau: float
    mask_p: Optional[float] = None
    name = "draft_entropy"

    def __post_init__(self):
        _check_mask(self.mask_p)


@dataclass(frozen=True)
class KlThreshold:
    tau: float
    mask_p: Optional[float] = 0.9   # confidence mask on by default
    name = "kl"

    def __post_init__(self):
        if self.tau < 0:
            raise ConfigError("KL threshold must be >= 0")
        _check_mask(self.mask_p)


@dataclass(frozen=True)
class Judge:
    judge: JudgeModel
    tau: float
    mask_p: Optional[float] = None   # mask off by default for the judge
    # Accept when the criticality score is <= tau. Set invert=True for
    # the validity-score convention (accept when score > tau).
    invert: bool = False
    name = "judge"

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError("judge threshold must be in [0, 1]")
        _check_mask(self.mask_p)


PolicyConfig = Union[Lossless, TopK, TargetEntropy, DraftEntropy, KlThreshold, Judge]


def _check_mask(mask_p):
    if mask_p is not None and not 0.0 < mask_p <= 1.0:
        raise ConfigError("mask_p must be in (0, 1]")


@dataclass
class TokenContext:
    """One drafted token with its paired model state.

    `deterministic_stage1` selects the temperature-0 limit of the
    stochastic accept test: accept iff the drafted token is the target
    argmax. The distributions stay true softmax either way, so masks
    and stage-2 statistics are unaffected by the mode.
    """

    drafted: int
    p_t: np.ndarray
    q_t: np.ndarray
    z_t: np.ndarray
    z_d: np.ndarray
    h_t: Optional[np.ndarray] = None
    h_d: Optional[np.ndarray] = None
    position: int = 0
    deterministic_stage1: bool = False


@dataclass
class Decision:
    verdict: str
    uniform: float
    ratio: float
    mask_triggered: bool = False
    kl_value: Optional[float] = None
    entropy_t: Optional[float] = None
    entropy_d: Optional[float] = None
    judge_value: Optional[float] = None

    @property
    def accepted(self) -> bool:
        return self.verdict != REJECT


def verify_token(cfg: PolicyConfig, ctx: TokenContext, rng: RandomSource) -> Decision:
    """Two-stage decision: stochastic lossless test, then the variant's
    relaxation rule on rejection. Pure given the rng draw."""
    d = ctx.drafted
    if ctx.deterministic_stage1:
        ratio = 1.0 if d == int(np.argmax(ctx.z_t)) else 0.0
    else:
        ratio = min(1.0, float(ctx.p_t[d]) / max(float(ctx.q_t[d]), PROB_EPS))
    u = rng.uniform()   # in [0, 1): ratio 1 always accepts, ratio 0 never does
    if u < ratio:
        return Decision(verdict=ACCEPT_LOSSLESS, uniform=u, ratio=ratio)
    if isinstance(cfg, Lossless):
        return Decision(verdict=REJECT, uniform=u, ratio=ratio)

    mask_p = cfg.mask_p
    if mask_p is not None and float(ctx.p_t.max()) > mask_p:
        return Decision(verdict=REJECT, uniform=u, ratio=ratio, mask_triggered=True)

    dec = Decision(verdict=REJECT, uniform=u, ratio=ratio)
    if isinstance(cfg, TopK):
        k = min(cfg.k, ctx.z_t.size - 1)
        ok = d in topk_report(ctx.z_t, k).indices
    elif isinstance(cfg, TargetEntropy):
        dec.entropy_t = entropy(ctx.p_t)
        ok = dec.entropy_t >= cfg.tau
    elif isinstance(cfg, DraftEntropy):
        dec.entropy_d = entropy(ctx.q_t)
        ok = dec.entropy_d >= cfg.tau
    elif isinstance(cfg, KlThreshold):
        dec.kl_value = kl(ctx.p_t, ctx.q_t)
        ok = dec.kl_value <= cfg.tau
    elif isinstance(cfg, Judge):
        if ctx.h_t is None or ctx.h_d is None:
            raise FeatureUnavailableError("judge policy needs h_t and h_d in the context")
        dec.judge_value = judge_score(cfg.judge, np.concatenate([ctx.h_t, ctx.h_d]))
        ok = dec.judge_value > cfg.tau if cfg.invert else dec.judge_value <= cfg.tau
    else:  # pragma: no cover
        raise ConfigError(f"unknown policy {cfg!r}")
    if ok:
        dec.verdict = ACCEPT_RELAXED
    return dec


def policy_tau(cfg: PolicyConfig) -> Optional[float]:
    """Threshold column for reports: tau where defined, k for top-k."""
    if isinstance(cfg, TopK):
        return float(cfg.k)
    return getattr(cfg, "tau", None)


def format_policy(cfg: PolicyConfig) -> str:
    """Canonical textual form, e.g. kl:tau=0.5,mask=0.9."""
    if isinstance(cfg, Lossless):
        return "lossless"
    if isinstance(cfg, TopK):
        s = f"topk:k={cfg.k}"
    elif isinstance(cfg, TargetEntropy):
        s = f"target-entropy:tau={cfg.tau:g}"
    elif isinstance(cfg, DraftEntropy):
        s = f"draft-entropy:tau={cfg.tau:g}"
    elif isinstance(cfg, KlThreshold):
        s = f"kl:tau={cfg.tau:g}"
    elif isinstance(cfg, Judge):
        s = f"judge:tau={cfg.tau:g}"
        if cfg.invert:
            s += ",invert=1"
    else:  # pragma: no cover
        raise ConfigError(f"unknown policy {cfg!r}")
    if cfg.mask_p is not None:
        s += f",mask={cfg.mask_p:g}"
    return s


def parse_policy(text: str, judge_loader=JudgeModel.load) -> PolicyConfig:
    """Parse the canonical textual form (see format_policy); the judge
    variant takes path=... pointing at a serialized JudgeModel."""
    head, _, rest = text.strip().partition(":")
    kv = {}
    if rest:
        for part in rest.split(","):
            key, _, val = part.partition("=")
            if not val:
                raise ConfigError(f"malformed policy parameter {part!r} in {text!r}")
            kv[key.strip()] = val.strip()
    mask = float(kv["mask"]) if "mask" in kv else None
    try:
        if head == "lossless":
            return Lossless()
        if head == "topk":
            return TopK(k=int(kv["k"]), mask_p=mask)
        if head == "target-entropy":
            return TargetEntropy(tau=float(kv["tau"]), mask_p=mask)
        if head == "draft-entropy":
            return DraftEntropy(tau=float(kv["tau"]), mask_p=mask)
        if head == "kl":
            return KlThreshold(tau=float(kv["tau"]),
                               mask_p=mask if "mask" in kv else 0.9)
        if head == "judge":
            return Judge(judge=judge_loader(kv["path"]), tau=float(kv["tau"]),
                         mask_p=mask, invert=bool(int(kv.get("invert", "0"))))
    except KeyError as e:
        raise ConfigError(f"policy {text!r} missing parameter {e}") from None
    raise ConfigError(f"unknown policy kind {head!r}")
