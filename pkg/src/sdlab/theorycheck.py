"""Numerical witnesses for the divergence-layer identities and bounds,
runnable as one command. Each check is deterministic given its seed and
emits a machine-readable report.

Random logits are i.i.d. normal with configurable scale and delta is
taken as z_t - z_d, covering the generic position; the constructed
adversarial cases live in the test suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import RandomSource, softmax
from .divergence import (
    boundary_crossing_pair,
    fisher_quadratic,
    kl,
    kl_bregman,
    kl_lower_bound,
    pairwise_quadratic,
    topk_report,
)
from .divergence import primitive
from .judge import JudgeModel, affine_primitive_components, basis_score, judge_score, primitive_basis_fit


@dataclass
class CheckReport:
    name: str
    trials: int
    passed: bool
    seed: int
    max_error: float | None = None
    violation_count: int | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "trials": int(self.trials),
            "passed": bool(self.passed),
            "seed": self.seed,
            "max_error": None if self.max_error is None else float(self.max_error),
            "violation_count": None if self.violation_count is None else int(self.violation_count),
            "details": {k: _json_scalar(v) for k, v in self.details.items()},
        }


def _json_scalar(v):
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


def _random_logits(rng: RandomSource, v: int, scale: float = 2.0) -> np.ndarray:
    return rng.normal(v) * scale


def check_bregman(v_list=(2, 8, 64), trials: int = 1000, tol: float = 1e-9,
                  seed: int = 0) -> CheckReport:
    """|kl - kl_bregman| on random logit pairs, plus the z_t == z_d case."""
    rng = RandomSource(seed).stream("check-bregman")
    max_err = 0.0
    total = 0
    for v in v_list:
        for _ in range(trials):
            z_t = _random_logits(rng, v)
            z_d = _random_logits(rng, v)
            err = abs(kl(softmax(z_t), softmax(z_d)) - kl_bregman(z_t, z_d))
            max_err = max(max_err, err)
            total += 1
        max_err = max(max_err, abs(kl_bregman(z_t, z_t)))
    return CheckReport(name="bregman_identity", trials=total, passed=max_err < tol,
                       seed=seed, max_error=max_err, details={"tol": tol})


def check_pairwise_identity(v_list=(2, 8, 64), trials: int = 1000, rel_tol: float = 1e-9,
                            seed: int = 0) -> CheckReport:
    """Relative gap between the two-moment and double-sum quadratic forms."""
    rng = RandomSource(seed).stream("check-pairwise")
    max_err = 0.0
    total = 0
    for v in v_list:
        for _ in range(trials):
            p = softmax(_random_logits(rng, v, scale=3.0))
            delta = rng.normal(v)
            a = fisher_quadratic(p, delta)
            b = pairwise_quadratic(p, delta)
            max_err = max(max_err, abs(a - b) / max(1.0, abs(a)))
            total += 1
    return CheckReport(name="pairwise_decomposition", trials=total, passed=max_err < rel_tol,
                       seed=seed, max_error=max_err, details={"rel_tol": rel_tol})


def check_second_order_rate(v: int = 16, base_scale: float = 0.5, halvings: int = 3,
                            trials: int = 200, ratio_cap: float = 0.1875,
                            min_pass_rate: float = 0.95, seed: int = 0) -> CheckReport:
    """Cubic-remainder decay: err(s) = |KL(softmax(z_d + s*delta), softmax(z_d))
    - quad(p_d, s*delta)| should shrink by ~1/8 per halving of s."""
    rng = RandomSource(seed).stream("check-rate")
    ok = 0
    ratio_log = []
    for _ in range(trials):
        z_d = _random_logits(rng, v)
        delta = rng.normal(v)
        # unit perturbation has 2-norm 1/4: large enough that err(s) stays
        # far above float noise, small enough that the base scale already
        # sits in the cubic regime (otherwise quartic sign cancellation at
        # the first halving inflates the ratio)
        delta = delta / max(4.0 * np.linalg.norm(delta), 1e-12)
        p_d = softmax(z_d)

        def err(s):
            return abs(kl(softmax(z_d + s * delta), p_d) - fisher_quadratic(p_d, s * delta))

        s = base_scale
        ratios = []
        good = True
        for _ in range(halvings):
            e0, e1 = err(s), err(s / 2)
            if e0 <= 1e-300:
                break
            r = e1 / e0
            ratios.append(r)
            good = good and r <= ratio_cap
            s /= 2
        ok += good
        if ratios:
            ratio_log.append(max(ratios))
    rate = ok / trials
    return CheckReport(name="second_order_rate", trials=trials, passed=rate >= min_pass_rate,
                       seed=seed, max_error=max(ratio_log) if ratio_log else 0.0,
                       details={"pass_rate": rate, "ratio_cap": ratio_cap})


def check_topk_bound(v: int = 32, k_list=(1, 2, 4), trials: int = 10_000,
                     seed: int = 0) -> CheckReport:
    """Boundary-crossing primitives must dominate the summed margins."""
    rng = RandomSource(seed).stream("check-topk")
    violations = 0
    checked = 0
    for _ in range(trials):
        z_t = _random_logits(rng, v)
        z_d = _random_logits(rng, v)
        for k in k_list:
            hit = boundary_crossing_pair(z_t, z_d, k)
            if hit is None:
                continue
            checked += 1
            bound = topk_report(z_t, k).margin + topk_report(z_d, k).margin
            if hit.delta < bound - 1e-12:
                violations += 1
    return CheckReport(name="topk_boundary_crossing", trials=checked, passed=violations == 0,
                       seed=seed, violation_count=violations)


def check_kl_lower_bound(v: int = 16, trials: int = 10_000, delta_cap: float = 0.1,
                         slack: float = 0.9, min_pass_rate: float = 0.99, k: int = 2,
                         seed: int = 0) -> CheckReport:
    """(a) exact chain on the quadratic form: pairwise >= alpha*Delta^2 >=
    alpha*(margin sum)^2, zero violations; (b) exact KL >= slack * bound
    in the small-delta regime, pass rate reported."""
    rng = RandomSource(seed).stream("check-klbound")
    chain_violations = 0
    small_ok = 0
    small_total = 0
    for _ in range(trials):
        z_d = _random_logits(rng, v, scale=0.05)
        delta = (rng.uniforms(v) * 2.0 - 1.0) * delta_cap
        z_t = z_d + delta
        hit = boundary_crossing_pair(z_t, z_d, k)
        if hit is None:
            continue
        p_d = softmax(z_d)
        g_t = topk_report(z_t, k).margin
        g_d = topk_report(z_d, k).margin
        alpha = 0.25 * p_d[hit.i] * p_d[hit.j]
        quad = pairwise_quadratic(p_d, delta)
        bound = kl_lower_bound(p_d, hit.i, hit.j, g_t, g_d)
        mid = alpha * hit.delta ** 2
        if quad < mid - 1e-12 or mid < bound - 1e-12:
            chain_violations += 1
        small_total += 1
        if kl(softmax(z_t), p_d) >= slack * bound - 1e-15:
            small_ok += 1
    rate = small_ok / small_total if small_total else 1.0
    return CheckReport(name="kl_lower_bound_chain", trials=small_total,
                       passed=chain_violations == 0 and rate >= min_pass_rate,
                       seed=seed, violation_count=chain_violations,
                       details={"small_delta_pass_rate": rate, "slack": slack})


def check_affine_primitive(d: int = 32, v: int = 66, trials: int = 1000, tol: float = 1e-9,
                           seed: int = 0) -> CheckReport:
    """a_ij . x + kappa_ij must reproduce the primitive exactly."""
    rng = RandomSource(seed).stream("check-affine")
    w_t, b_t = rng.normal((v, d)), rng.normal(v)
    w_d, b_d = rng.normal((v, d)), rng.normal(v)
    max_err = 0.0
    for _ in range(trials):
        h_t, h_d = rng.normal(d), rng.normal(d)
        x = np.concatenate([h_t, h_d])
        z_t = w_t @ h_t + b_t
        z_d = w_d @ h_d + b_d
        i = int(rng.integers(0, v))
        j = int(rng.integers(0, v - 1))
        j += j >= i
        a, kappa = affine_primitive_components(w_t, b_t, w_d, b_d, i, j)
        max_err = max(max_err, abs(np.dot(a, x) + kappa - primitive(z_t, z_d, i, j)))
    return CheckReport(name="affine_primitive", trials=trials, passed=max_err < tol,
                       seed=seed, max_error=max_err, details={"tol": tol})


def check_primitive_basis(d: int = 32, v: int = 66, trials: int = 1000,
                          residual_tol: float = 1e-6, score_tol: float = 1e-6,
                          seed: int = 0) -> CheckReport:
    """Least-squares representation of a random judge in the primitive
    frame, plus the decision-boundary equivalence on random features.
    Rank-deficient frames are reported, not failed."""
    rng = RandomSource(seed).stream("check-basis")
    w_t, b_t = rng.normal((v, d)), rng.normal(v)
    w_d, b_d = rng.normal((v, d)), rng.normal(v)
    judge = JudgeModel(w=rng.normal(2 * d), b=float(rng.normal(1)[0]), feature_dim=d)
    report = primitive_basis_fit(judge, w_t, w_d, b_t, b_d, seed=seed)
    if report.frame_rank < 2 * d:
        return CheckReport(name="primitive_basis", trials=0, passed=True, seed=seed,
                           details={"frame_rank": report.frame_rank, "rank_deficient": True,
                                    "residual_ratio": report.residual_norm_ratio})
    max_gap = 0.0
    for _ in range(trials):
        h_t, h_d = rng.normal(d), rng.normal(d)
        x = np.concatenate([h_t, h_d])
        z_t = w_t @ h_t + b_t
        z_d = w_d @ h_d + b_d
        max_gap = max(max_gap, abs(basis_score(report, z_t, z_d) - judge_score(judge, x)))
    passed = report.residual_norm_ratio < residual_tol and max_gap < score_tol
    return CheckReport(name="primitive_basis", trials=trials, passed=passed, seed=seed,
                       max_error=max_gap,
                       details={"residual_ratio": report.residual_norm_ratio,
                                "frame_rank": report.frame_rank})


ALL_CHECKS = (
    check_bregman,
    check_pairwise_identity,
    check_second_order_rate,
    check_topk_bound,
    check_kl_lower_bound,
    check_affine_primitive,
    check_primitive_basis,
)


def run_all(seed: int = 0) -> list[CheckReport]:
    return [fn(seed=seed) for fn in ALL_CHECKS]


def reports_to_json(reports, path=None) -> str:
    payload = json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(payload + "\n")
    return payload
