import numpy as np
import pytest

from sdlab.core import RandomSource, softmax
from sdlab.errors import ConfigError, FeatureUnavailableError
from sdlab.judge import JudgeModel
from sdlab.policies import (
    ACCEPT_LOSSLESS,
    ACCEPT_RELAXED,
    REJECT,
    DraftEntropy,
    Judge,
    KlThreshold,
    Lossless,
    TargetEntropy,
    TokenContext,
    TopK,
    format_policy,
    parse_policy,
    policy_tau,
    verify_token,
)

RNG = lambda: RandomSource(0).stream("test-uniforms")  # noqa: E731


def make_ctx(drafted, z_t, z_d, deterministic=False, h=None):
    z_t = np.asarray(z_t, dtype=np.float64)
    z_d = np.asarray(z_d, dtype=np.float64)
    return TokenContext(drafted=drafted, p_t=softmax(z_t), q_t=softmax(z_d),
                        z_t=z_t, z_d=z_d, h_t=h, h_d=h,
                        deterministic_stage1=deterministic)


def test_stage1_ratio_one_always_accepts():
    # p_t(d) >= q_t(d) -> ratio 1 -> accepted for every uniform in [0,1)
    ctx = make_ctx(0, [2.0, 0.0], [0.0, 2.0])
    for _ in range(20):
        dec = verify_token(Lossless(), ctx, RNG())
        assert dec.verdict == ACCEPT_LOSSLESS
        assert dec.ratio == 1.0


def test_stage1_ratio_zero_never_accepts():
    ctx = make_ctx(1, [30.0, -30.0], [0.0, 0.0])
    rng = RNG()
    outcomes = {verify_token(Lossless(), ctx, rng).verdict for _ in range(50)}
    assert outcomes == {REJECT}


def test_stage1_acceptance_rate_matches_ratio():
    # accept probability must equal min(1, p/q); drafted token has
    # p = 0.25, q = 0.5 -> ratio 0.5
    ctx = make_ctx(0, np.log([0.25, 0.75]), np.log([0.5, 0.5]))
    rng = RNG()
    n = 20000
    hits = sum(verify_token(Lossless(), ctx, rng).accepted for _ in range(n))
    assert hits / n == pytest.approx(0.5, abs=0.02)


def test_deterministic_stage1_uses_argmax():
    ctx = make_ctx(1, [0.0, 1.0], [5.0, 0.0], deterministic=True)
    assert verify_token(Lossless(), ctx, RNG()).verdict == ACCEPT_LOSSLESS
    ctx2 = make_ctx(0, [0.0, 1.0], [5.0, 0.0], deterministic=True)
    assert verify_token(Lossless(), ctx2, RNG()).verdict == REJECT


def test_confidence_mask_blocks_relaxation():
    # target top-1 prob > 0.9 -> no relaxation even though KL is tiny
    z_t = np.array([5.0, 0.0, 0.0])
    z_d = z_t + 1e-4
    ctx = make_ctx(1, z_t, z_d, deterministic=True)
    dec = verify_token(KlThreshold(tau=10.0), ctx, RNG())
    assert dec.verdict == REJECT
    assert dec.mask_triggered


def test_kl_threshold_relaxed_accept_and_reject():
    z_t = np.array([1.0, 0.9, 0.0])
    z_d = np.array([0.9, 1.0, 0.0])
    ctx = make_ctx(1, z_t, z_d, deterministic=True)
    accept = verify_token(KlThreshold(tau=10.0), ctx, RNG())
    assert accept.verdict == ACCEPT_RELAXED
    assert accept.kl_value is not None and accept.kl_value < 10.0
    reject = verify_token(KlThreshold(tau=1e-9), ctx, RNG())
    assert reject.verdict == REJECT
    assert not reject.mask_triggered


def test_topk_membership():
    z_t = np.array([3.0, 2.0, 1.0, 0.0])
    z_d = np.array([0.0, 3.0, 0.0, 0.0])
    ctx = make_ctx(1, z_t, z_d, deterministic=True)
    assert verify_token(TopK(k=2), ctx, RNG()).verdict == ACCEPT_RELAXED
    ctx3 = make_ctx(3, z_t, z_d, deterministic=True)
    assert verify_token(TopK(k=2), ctx3, RNG()).verdict == REJECT


def test_topk_k_clamped_to_vocab():
    z_t = np.array([3.0, 2.0, 1.0])
    ctx = make_ctx(2, z_t, np.array([0.0, 0.0, 3.0]), deterministic=True)
    # k=99 clamps to V-1=2: token 2 is not among the top 2
    assert verify_token(TopK(k=99), ctx, RNG()).verdict == REJECT


def test_entropy_policies():
    flat_t = np.zeros(4)
    peaked_d = np.array([8.0, 0.0, 0.0, 0.0])
    ctx = make_ctx(1, flat_t, peaked_d, deterministic=True)
    # target entropy ln 4 ~ 1.386
    assert verify_token(TargetEntropy(tau=1.0), ctx, RNG()).verdict == ACCEPT_RELAXED
    assert verify_token(TargetEntropy(tau=1.5), ctx, RNG()).verdict == REJECT
    ctx_d = make_ctx(0, np.array([0.0, 1.5, 0.0, 0.0]), flat_t, deterministic=True)
    assert verify_token(DraftEntropy(tau=1.0), ctx_d, RNG()).verdict == ACCEPT_RELAXED


def test_judge_policy_accepts_low_criticality():
    judge = JudgeModel(w=np.zeros(8), b=0.0, feature_dim=4)  # score 0.5 always
    h = np.ones(4)
    z_t = np.array([0.0, 1.0])
    ctx = TokenContext(drafted=0, p_t=softmax(z_t), q_t=softmax(z_t), z_t=z_t, z_d=z_t,
                       h_t=h, h_d=h, deterministic_stage1=True)
    assert verify_token(Judge(judge=judge, tau=0.6), ctx, RNG()).verdict == ACCEPT_RELAXED
    assert verify_token(Judge(judge=judge, tau=0.4), ctx, RNG()).verdict == REJECT
    # invert flips the accept direction
    assert verify_token(Judge(judge=judge, tau=0.4, invert=True), ctx, RNG()).verdict == ACCEPT_RELAXED


def test_judge_policy_requires_features():
    judge = JudgeModel(w=np.zeros(8), b=0.0, feature_dim=4)
    z_t = np.array([0.0, 1.0])
    ctx = make_ctx(0, z_t, z_t, deterministic=True)
    with pytest.raises(FeatureUnavailableError):
        verify_token(Judge(judge=judge, tau=0.5), ctx, RNG())


def test_policy_validation():
    with pytest.raises(ConfigError):
        TopK(k=0)
    with pytest.raises(ConfigError):
        KlThreshold(tau=-1.0)
    with pytest.raises(ConfigError):
        KlThreshold(tau=0.5, mask_p=1.5)


def test_policy_tau():
    assert policy_tau(Lossless()) is None
    assert policy_tau(TopK(k=3)) == 3.0
    assert policy_tau(KlThreshold(tau=0.4)) == 0.4


@pytest.mark.parametrize("cfg", [
    Lossless(),
    TopK(k=4),
    TopK(k=4, mask_p=0.95),
    TargetEntropy(tau=1.25, mask_p=0.9),
    DraftEntropy(tau=0.5),
    KlThreshold(tau=0.3),
    KlThreshold(tau=0.3, mask_p=0.8),
])
def test_format_parse_round_trip(cfg):
    assert parse_policy(format_policy(cfg)) == cfg


def test_parse_kl_defaults_mask():
    cfg = parse_policy("kl:tau=0.3")
    assert cfg == KlThreshold(tau=0.3, mask_p=0.9)


def test_parse_errors():
    with pytest.raises(ConfigError):
        parse_policy("nonsense:tau=1")
    with pytest.raises(ConfigError):
        parse_policy("kl:tau")
    with pytest.raises(ConfigError):
        parse_policy("topk:mask=0.9")  # missing k
