"""Sweep runner and report emission.

A sweep evaluates a grid of policies over shared seeds on one model
pair and aggregates the per-seed run metrics; rows serialize to CSV
with a fixed header or to JSON. All outputs are deterministic given
(spec, seeds).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import softmax
from .divergence import entropy, kl
from .engine import EngineConfig, RunMetrics, generate
from .errors import ConfigError
from .judge import CorrelationReport, JudgeModel, correlation_report, judge_score
from .policies import PolicyConfig, format_policy, policy_tau

CSV_HEADER = ["policy", "tau", "seed_count", "mat_mean", "mat_std",
              "match_mean", "match_std", "relaxed_frac"]


@dataclass
class SweepSpec:
    policies: list[PolicyConfig]
    seeds: list[int]
    gamma: int = 16
    max_new_tokens: int = 256
    prompt: list[int] = field(default_factory=lambda: [0])
    draft_mode: str = "greedy"

    def __post_init__(self):
        if not self.policies or not self.seeds:
            raise ConfigError("sweep needs a non-empty policy grid and seed list")


@dataclass
class SweepRow:
    policy: str
    tau: float | None
    per_seed: list[RunMetrics]

    @property
    def mat_mean(self) -> float:
        return float(np.mean([m.mat for m in self.per_seed]))

    @property
    def mat_std(self) -> float:
        return float(np.std([m.mat for m in self.per_seed]))

    @property
    def match_mean(self) -> float:
        return float(np.mean([m.exact_match_vs_target_greedy for m in self.per_seed]))

    @property
    def match_std(self) -> float:
        return float(np.std([m.exact_match_vs_target_greedy for m in self.per_seed]))

    @property
    def relaxed_frac(self) -> float:
        return float(np.mean([m.relaxed_fraction for m in self.per_seed]))

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "tau": self.tau,
            "seed_count": len(self.per_seed),
            "mat_mean": self.mat_mean,
            "mat_std": self.mat_std,
            "match_mean": self.match_mean,
            "match_std": self.match_std,
            "relaxed_frac": self.relaxed_frac,
            "per_seed_mat": [m.mat for m in self.per_seed],
            "per_seed_match": [m.exact_match_vs_target_greedy for m in self.per_seed],
        }


def run_sweep(draft, target, spec: SweepSpec) -> list[SweepRow]:
    rows = []
    for policy in spec.policies:
        per_seed = []
        for seed in spec.seeds:
            cfg = EngineConfig(policy=policy, max_new_tokens=spec.max_new_tokens,
                               gamma=spec.gamma, seed=seed, draft_mode=spec.draft_mode)
            per_seed.append(generate(draft, target, spec.prompt, cfg).metrics)
        rows.append(SweepRow(policy=format_policy(policy), tau=policy_tau(policy),
                             per_seed=per_seed))
    return rows


def emit_report(rows, fmt: str, path) -> None:
    """Write sweep rows as csv (fixed header) or json."""
    if fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(CSV_HEADER)
            for row in rows:
                d = row.to_dict()
                writer.writerow([d["policy"],
                                 "" if d["tau"] is None else f"{d['tau']:g}",
                                 d["seed_count"],
                                 _fmt(d["mat_mean"]), _fmt(d["mat_std"]),
                                 _fmt(d["match_mean"]), _fmt(d["match_std"]),
                                 _fmt(d["relaxed_frac"])])
    elif fmt == "json":
        with open(path, "w", encoding="utf-8") as f:
            json.dump([row.to_dict() for row in rows], f, indent=2, sort_keys=True)
            f.write("\n")
    else:
        raise ConfigError(f"unknown report format {fmt!r}")


def load_report(path) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _fmt(v: float) -> str:
    if v != v or math.isinf(v):  # pragma: no cover
        return "nan"
    return f"{v:.6f}"


def correlation_figure_data(draft, target, judge: JudgeModel, prefixes,
                            n_bins: int = 10) -> CorrelationReport:
    """Score every prefix with the judge, pair it with the exact KL, and
    bin; per-bin mean entropies of both models ride along for the
    entropy-vs-criticality comparison."""
    scores, kls, ent_t, ent_d = [], [], [], []
    for prefix in prefixes:
        h_t, z_t = target.logits(prefix)
        h_d, z_d = draft.logits(prefix)
        p, q = softmax(z_t), softmax(z_d)
        scores.append(judge_score(judge, np.concatenate([h_t, h_d])))
        kls.append(kl(p, q))
        ent_t.append(entropy(p))
        ent_d.append(entropy(q))
    return correlation_report(scores, kls, n_bins=n_bins,
                              extras={"entropy_target": ent_t, "entropy_draft": ent_d})


def figure_data_to_json(report: CorrelationReport, path=None) -> str:
    payload = json.dumps({
        "bin_edges": list(report.bin_edges),
        "mean_kl": report.mean_kl,
        "counts": report.counts,
        "rank_correlation": report.rank_correlation,
        "extra_means": report.extra_means,
    }, indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(payload + "\n")
    return payload
