"""Recording session: greedy target stepping over prompts, sparse
top-M trace emission.

Output is JSON Lines: a header object {schema_version, V, top_M,
feature_dim, projection_seed} followed by one record per decoding
step. Draft and target share a single merged support (the union of
both models' top-M token ids, sorted); per-side raw logits are stored
on the support together with tail_logmass, the log of the probability
mass outside the support, computed from the full softmax at record
time. Sparse values are written with 9 significant digits. Features
are the runner's hidden state projected to feature_dim by a fixed
matrix drawn from projection_seed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import RecorderError, RunnerError, TokenizerMismatchError
from .runner import get_runner

SCHEMA_VERSION = 1
TAIL_LOGMASS_FLOOR = -700.0

log = logging.getLogger("sdrecorder")


@dataclass
class RecorderConfig:
    draft_model: str
    target_model: str
    prompts_path: str
    out_path: str
    top_m: int = 64
    max_steps: int = 32
    feature_dim: int = 32
    projection_seed: int = 0
    device: Optional[str] = None     # hint for external runners; unused by the toy one

    def __post_init__(self):
        if self.top_m < 2:
            raise RecorderError(f"top_m must be >= 2, got {self.top_m}")
        if self.max_steps < 1:
            raise RecorderError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.feature_dim < 1:
            raise RecorderError(f"feature_dim must be >= 1, got {self.feature_dim}")


def _sig9(v: float) -> float:
    return float(f"{v:.9g}")


def _log_probs(z: np.ndarray) -> np.ndarray:
    m = float(z.max())
    return z - (m + np.log(np.exp(z - m).sum()))


def _tail_logmass(logp: np.ndarray, support: np.ndarray) -> float:
    mass = float(np.exp(logp[support]).sum())
    if mass >= 1.0:
        return TAIL_LOGMASS_FLOOR
    return max(float(np.log1p(-mass)), TAIL_LOGMASS_FLOOR)


def load_prompts(path) -> list[list[int]]:
    prompts = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            try:
                prompts.append([int(t) for t in line.split()])
            except ValueError:
                raise RecorderError(f"prompt line is not token ids: {line!r}") from None
    if not prompts:
        raise RecorderError(f"no prompts in {path}")
    return prompts


def _projection(rng_seed: int, hidden_dim: int, feature_dim: int) -> np.ndarray:
    rng = np.random.default_rng(rng_seed)
    return rng.normal(size=(hidden_dim, feature_dim)) / np.sqrt(hidden_dim)


def record(cfg: RecorderConfig, draft_runner=None, target_runner=None) -> dict:
    """Run the session and write the trace file; returns a summary with
    prompt/step/skip counts. Runners may be injected for testing."""
    draft = draft_runner if draft_runner is not None else get_runner(cfg.draft_model)
    target = target_runner if target_runner is not None else get_runner(cfg.target_model)
    if draft.vocab_size != target.vocab_size:
        raise TokenizerMismatchError(
            f"draft vocab {draft.vocab_size} != target vocab {target.vocab_size}")
    v = target.vocab_size
    prompts = load_prompts(cfg.prompts_path)
    proj_d = _projection(cfg.projection_seed, draft.hidden_dim, cfg.feature_dim)
    proj_t = _projection(cfg.projection_seed, target.hidden_dim, cfg.feature_dim)

    header = {"schema_version": SCHEMA_VERSION, "V": v, "top_M": cfg.top_m,
              "feature_dim": cfg.feature_dim, "projection_seed": cfg.projection_seed}
    n_steps = 0
    skipped = 0
    step_idx = 0
    with open(cfg.out_path, "w", encoding="utf-8") as f:
        f.write(json.dumps(header) + "\n")
        for p_idx, prompt in enumerate(prompts):
            try:
                lines, step_idx = _record_prompt(cfg, draft, target, proj_d, proj_t,
                                                 prompt, step_idx)
            except RunnerError as e:
                log.warning("skipping prompt %d: %s", p_idx, e)
                skipped += 1
                continue
            for line in lines:
                f.write(line + "\n")
            n_steps += len(lines)
    return {"prompts": len(prompts), "skipped": skipped, "steps": n_steps,
            "out": cfg.out_path}


def _record_prompt(cfg, draft, target, proj_d, proj_t, prompt, step_idx):
    prefix = list(prompt)
    lines = []
    m = min(cfg.top_m, draft.vocab_size)
    for _ in range(cfg.max_steps):
        h_d, z_d = draft.step(prefix)
        h_t, z_t = target.step(prefix)
        top_d = np.argpartition(z_d, -m)[-m:]
        top_t = np.argpartition(z_t, -m)[-m:]
        support = np.array(sorted(set(top_d.tolist()) | set(top_t.tolist())))
        logp_d, logp_t = _log_probs(z_d), _log_probs(z_t)
        sampled = int(np.argmax(z_t))
        rec = {
            "step": step_idx,
            "prefix_len": len(prefix),
            "sampled_token": sampled,
            "support": support.tolist(),
            "draft_logits": [_sig9(float(z_d[i])) for i in support],
            "target_logits": [_sig9(float(z_t[i])) for i in support],
            "draft_tail_logmass": _sig9(_tail_logmass(logp_d, support)),
            "target_tail_logmass": _sig9(_tail_logmass(logp_t, support)),
            "draft_features": [float(x) for x in h_d @ proj_d],
            "target_features": [float(x) for x in h_t @ proj_t],
        }
        lines.append(json.dumps(rec))
        prefix.append(sampled)
        step_idx += 1
    return lines, step_idx
