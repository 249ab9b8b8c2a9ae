"""Command-line surface.

Subcommands: generate, sweep, theory-check, mine, train-judge,
correlate, trace-replay. Exit codes: 0 success, 1 validation error,
2 check failure. SDLAB_OUT_DIR sets the default output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import harness, mining, theorycheck
from .engine import EngineConfig, generate
from .errors import SdlabError
from .judge import JudgeModel, TrainConfig, train_linear_judge
from .mining import JudgeDataset, ToyTask
from .models import (
    ModelPairSpec,
    TraceReplayModel,
    markov_corpus,
    ngram_pair,
    synthetic_pair,
)
from .policies import Lossless, parse_policy
from .trace import load_trace


def _out_path(name: str) -> str:
    base = os.environ.get("SDLAB_OUT_DIR", ".")
    return os.path.join(base, name)


def _build_pair(args):
    if args.pair == "linear":
        spec = ModelPairSpec(kind="linear_head", coupling=args.coupling, seed=args.seed,
                             vocab_size=args.vocab)
        return synthetic_pair(spec)
    if args.pair == "ngram":
        corpus = markov_corpus(args.vocab, args.corpus_len, seed=args.seed)
        return ngram_pair(corpus, n=args.ngram_order, alpha=0.1, vocab_size=args.vocab,
                          coupling=args.coupling, seed=args.seed)
    raise SdlabError(f"unknown pair kind {args.pair!r}")


def _add_pair_args(p):
    p.add_argument("--pair", choices=["linear", "ngram"], default="ngram")
    p.add_argument("--coupling", type=float, default=0.9)
    p.add_argument("--corpus-len", type=int, default=20000)
    p.add_argument("--ngram-order", type=int, default=2)


def _parse_prompt(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


def cmd_generate(args) -> int:
    draft, target = _build_pair(args)
    policy = parse_policy(args.policy)
    cfg = EngineConfig(policy=policy, max_new_tokens=args.max_new_tokens, gamma=args.gamma,
                       seed=args.seed, draft_mode=args.draft_mode,
                       bonus_token=not args.no_bonus)
    result = generate(draft, target, _parse_prompt(args.prompt), cfg)
    if args.report_path:
        with open(args.report_path, "w", encoding="utf-8") as f:
            for rep in result.reports:
                f.write(json.dumps(rep.to_dict()) + "\n")
    print(json.dumps({"tokens": result.tokens, "metrics": vars(result.metrics)},
                     sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    draft, target = _build_pair(args)
    policies = [parse_policy(p) for p in args.policies.split(";") if p.strip()]
    seeds = [int(s) for s in args.seeds.split(",")]
    spec = harness.SweepSpec(policies=policies, seeds=seeds, gamma=args.gamma,
                             max_new_tokens=args.max_new_tokens,
                             prompt=_parse_prompt(args.prompt))
    rows = harness.run_sweep(draft, target, spec)
    if args.csv:
        harness.emit_report(rows, "csv", args.csv)
    if args.json:
        harness.emit_report(rows, "json", args.json)
    if not args.csv and not args.json:
        harness.emit_report(rows, "csv", _out_path("sweep.csv"))
    return 0


def cmd_theory_check(args) -> int:
    reports = theorycheck.run_all(seed=args.seed)
    for rep in reports:
        status = "PASS" if rep.passed else "FAIL"
        err = "" if rep.max_error is None else f" max_error={rep.max_error:.3g}"
        vio = "" if rep.violation_count is None else f" violations={rep.violation_count}"
        print(f"[{status}] {rep.name} trials={rep.trials}{err}{vio}")
    if args.json:
        theorycheck.reports_to_json(reports, args.json)
    return 0 if all(r.passed for r in reports) else 2


def cmd_mine(args) -> int:
    draft, target = _build_pair(args)
    task = ToyTask(vocab_size=args.vocab, horizon=args.horizon)
    labels = mining.mine_labels(draft, target, task, n_prompts=args.prompts,
                                seed=args.seed, k_rollouts=args.rollouts,
                                temperature=args.temperature, max_labels=args.max_labels)
    dataset = mining.build_judge_dataset(labels, draft, target,
                                         threshold_fraction=args.threshold)
    out = args.out or _out_path("mined.jsonl")
    with open(out, "w", encoding="utf-8") as f:
        for lab, x, y in zip(labels, dataset.features, dataset.labels):
            row = lab.to_dict()
            row["x"] = [float(v) for v in x]
            row["label"] = int(y)
            f.write(json.dumps(row) + "\n")
    hist = mining.consistency_histogram(labels)
    print(json.dumps({"labels": len(labels), "consistency_histogram": hist,
                      "class_balance": dataset.class_balance}, sort_keys=True))
    return 0


def cmd_train_judge(args) -> int:
    xs, ys = [], []
    with open(args.data, encoding="utf-8") as f:
        for line in f:
            row = json.loads(line)
            xs.append(row["x"])
            ys.append(row["label"])
    dataset = JudgeDataset(features=np.asarray(xs), labels=np.asarray(ys, dtype=float))
    cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                      l2_penalty=args.l2, seed=args.seed)
    judge = train_linear_judge(dataset, cfg)
    out = args.out or _out_path("judge.json")
    judge.save(out)
    print(json.dumps({"judge": out, "dim": judge.feature_dim}))
    return 0


def cmd_correlate(args) -> int:
    draft, target = _build_pair(args)
    judge = JudgeModel.load(args.judge)
    task = ToyTask(vocab_size=args.vocab, horizon=args.horizon)
    prefixes = []
    for prompt in task.prompts(args.seed + 1, args.prompts):
        cur = list(prompt)
        for _ in range(task.horizon):
            prefixes.append(list(cur))
            _, z = target.logits(cur)
            cur.append(int(np.argmax(z)))
    report = harness.correlation_figure_data(draft, target, judge, prefixes,
                                             n_bins=args.bins)
    out = args.out or _out_path("correlation.json")
    harness.figure_data_to_json(report, out)
    print(json.dumps({"rank_correlation": report.rank_correlation, "out": out}))
    return 0


def cmd_trace_replay(args) -> int:
    header, records = load_trace(args.trace)
    if not records:
        raise SdlabError("trace contains no records")
    vocab = header.vocab_size if header else len(records[0].draft_logits)
    draft = TraceReplayModel(records, "draft", vocab)
    target = TraceReplayModel(records, "target", vocab)
    prompt = [0] * records[0].prefix_len
    policy = parse_policy(args.policy) if args.policy else Lossless()
    cfg = EngineConfig(policy=policy, max_new_tokens=len(records), gamma=args.gamma,
                       seed=args.seed, bonus_token=False, target_mode="greedy")
    result = generate(draft, target, prompt, cfg)
    recorded = [rec.sampled_token for rec in sorted(records, key=lambda r: r.prefix_len)]
    print(json.dumps({"tokens": result.tokens, "recorded": recorded,
                      "match": result.tokens == recorded,
                      "metrics": vars(result.metrics)}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sdlab",
                                 description="speculative-decoding verification lab")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--vocab", type=int, default=64)
    ap.add_argument("--gamma", type=int, default=16)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="run one draft-then-verify generation")
    _add_pair_args(p)
    p.add_argument("--policy", default="lossless")
    p.add_argument("--prompt", default="0")
    p.add_argument("--max-new-tokens", type=int, default=256)
    p.add_argument("--draft-mode", choices=["greedy", "sample"], default="greedy")
    p.add_argument("--no-bonus", action="store_true")
    p.add_argument("--report-path")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("sweep", help="policy-grid sweep with per-seed metrics")
    _add_pair_args(p)
    p.add_argument("--policies", required=True, help="semicolon-separated policy specs")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--prompt", default="0")
    p.add_argument("--max-new-tokens", type=int, default=256)
    p.add_argument("--csv")
    p.add_argument("--json")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("theory-check", help="numerical checks of the identity suite")
    p.add_argument("--json")
    p.set_defaults(fn=cmd_theory_check)

    p = sub.add_parser("mine", help="mine counterfactual labels on a toy task")
    _add_pair_args(p)
    p.add_argument("--prompts", type=int, default=50)
    p.add_argument("--rollouts", type=int, default=4)
    p.add_argument("--temperature", type=float, default=0.8)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--horizon", type=int, default=24)
    p.add_argument("--max-labels", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_mine)

    p = sub.add_parser("train-judge", help="fit the linear judge on mined rows")
    p.add_argument("--data", required=True)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--l2", type=float, default=1e-3)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_train_judge)

    p = sub.add_parser("correlate", help="judge-score vs KL binned figure data")
    _add_pair_args(p)
    p.add_argument("--judge", required=True)
    p.add_argument("--prompts", type=int, default=50)
    p.add_argument("--horizon", type=int, default=24)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_correlate)

    p = sub.add_parser("trace-replay", help="replay a recorded trace through the engine")
    p.add_argument("--trace", required=True)
    p.add_argument("--policy")
    p.set_defaults(fn=cmd_trace_replay)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SdlabError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
