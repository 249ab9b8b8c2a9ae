"""Speculative-decoding verification lab.

Draft-then-verify decoding with pluggable acceptance policies
(lossless, top-k, entropy, KL threshold with confidence mask, trained
linear judge), counterfactual label mining and judge training at toy
scale, and a numerical suite covering the KL/Fisher/primitive
identities that connect KL thresholding to linear judges.
"""

from .core import RandomSource, log_sum_exp, residual_distribution, sample, softmax
from .divergence import (
    boundary_crossing_pair,
    entropy,
    fisher_quadratic,
    kl,
    kl_bregman,
    kl_lower_bound,
    pairwise_quadratic,
    primitive,
    topk_report,
)
from .engine import EngineConfig, RunMetrics, StepReport, generate, greedy_reference, mat
from .judge import JudgeModel, TrainConfig, correlation_report, judge_score, train_linear_judge
from .models import (
    LinearHeadModel,
    ModelPairSpec,
    NgramModel,
    TraceReplayModel,
    ngram_pair,
    ngram_train,
    synthetic_pair,
)
from .policies import (
    DraftEntropy,
    Judge,
    KlThreshold,
    Lossless,
    TargetEntropy,
    TokenContext,
    TopK,
    format_policy,
    parse_policy,
    verify_token,
)

__version__ = "0.1.0"
