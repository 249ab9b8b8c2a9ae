"""Trace file I/O: JSON Lines, one record per decoding step.

Full encoding stores both logit vectors at length V. The sparse
encoding stores a single merged support (sorted token ids shared by
draft and target) with raw logits per side plus one tail_logmass per
side, log of the probability mass outside the support. Sparse values
are written with 9 significant digits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import log_sum_exp
from .errors import TraceParseError

SCHEMA_VERSION = 1


@dataclass
class TraceHeader:
    schema_version: int
    vocab_size: int
    top_m: Optional[int] = None
    feature_dim: Optional[int] = None
    projection_seed: Optional[int] = None

    def to_dict(self) -> dict:
        out = {"schema_version": self.schema_version, "V": self.vocab_size}
        if self.top_m is not None:
            out["top_M"] = self.top_m
        if self.feature_dim is not None:
            out["feature_dim"] = self.feature_dim
        if self.projection_seed is not None:
            out["projection_seed"] = self.projection_seed
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TraceHeader":
        return cls(schema_version=int(d["schema_version"]), vocab_size=int(d["V"]),
                   top_m=d.get("top_M"), feature_dim=d.get("feature_dim"),
                   projection_seed=d.get("projection_seed"))


@dataclass
class TraceRecord:
    step: int
    prefix_len: int
    sampled_token: int
    draft_logits: list[float]
    target_logits: list[float]
    support: Optional[list[int]] = None           # sparse encoding when set
    draft_tail_logmass: Optional[float] = None
    target_tail_logmass: Optional[float] = None
    draft_features: Optional[list[float]] = None
    target_features: Optional[list[float]] = None

    @property
    def is_sparse(self) -> bool:
        return self.support is not None

    def validate(self) -> None:
        if self.is_sparse:
            n = len(self.support)
            if len(self.draft_logits) != n or len(self.target_logits) != n:
                raise TraceParseError("sparse logits must match the support length")
            if sorted(set(self.support)) != list(self.support):
                raise TraceParseError("support must be sorted and duplicate-free")
            if self.draft_tail_logmass is None or self.target_tail_logmass is None:
                raise TraceParseError("sparse records need tail_logmass for both sides")
        else:
            if len(self.draft_logits) != len(self.target_logits):
                raise TraceParseError("draft and target logits must share length")

    def dense_logits(self, side: str, vocab_size: int) -> np.ndarray:
        """Length-V logit reconstruction.

        Sparse tails are spread uniformly over the off-support tokens:
        the stored logits determine the potential A via the recorded
        tail mass, and every off-support token gets log-probability
        tail_logmass - log(V - M). The result is exact on the support.
        """
        vals = self.draft_logits if side == "draft" else self.target_logits
        if not self.is_sparse:
            z = np.asarray(vals, dtype=np.float64)
            if z.size != vocab_size:
                raise TraceParseError(f"full record has V={z.size}, expected {vocab_size}")
            return z
        tail = self.draft_tail_logmass if side == "draft" else self.target_tail_logmass
        z_sup = np.asarray(vals, dtype=np.float64)
        mass_sup = -math.expm1(tail)                  # 1 - e^tail
        a_z = log_sum_exp(z_sup) - math.log(mass_sup)
        n_out = vocab_size - z_sup.size
        z = np.full(vocab_size, -np.inf)
        z[np.asarray(self.support)] = z_sup - a_z
        if n_out > 0:
            # clamp so a zero-mass tail still yields finite logits
            fill = max(tail - math.log(n_out), -700.0)
            z[z == -np.inf] = fill
        return z

    def to_dict(self) -> dict:
        out = {
            "step": self.step,
            "prefix_len": self.prefix_len,
            "sampled_token": self.sampled_token,
        }
        if self.is_sparse:
            out["support"] = list(self.support)
            out["draft_logits"] = [_sig9(v) for v in self.draft_logits]
            out["target_logits"] = [_sig9(v) for v in self.target_logits]
            out["draft_tail_logmass"] = _sig9(self.draft_tail_logmass)
            out["target_tail_logmass"] = _sig9(self.target_tail_logmass)
        else:
            out["draft_logits"] = list(map(float, self.draft_logits))
            out["target_logits"] = list(map(float, self.target_logits))
        if self.draft_features is not None:
            out["draft_features"] = list(map(float, self.draft_features))
        if self.target_features is not None:
            out["target_features"] = list(map(float, self.target_features))
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TraceRecord":
        rec = cls(step=int(d["step"]), prefix_len=int(d["prefix_len"]),
                  sampled_token=int(d["sampled_token"]),
                  draft_logits=list(d["draft_logits"]), target_logits=list(d["target_logits"]),
                  support=d.get("support"),
                  draft_tail_logmass=d.get("draft_tail_logmass"),
                  target_tail_logmass=d.get("target_tail_logmass"),
                  draft_features=d.get("draft_features"),
                  target_features=d.get("target_features"))
        rec.validate()
        return rec


def _sig9(v: float) -> float:
    return float(f"{v:.9g}")


def save_trace(records, path, header: TraceHeader | None = None) -> None:
    with open(path, "w", encoding="utf-8") as f:
        if header is not None:
            f.write(json.dumps(header.to_dict()) + "\n")
        for rec in records:
            rec.validate()
            f.write(json.dumps(rec.to_dict()) + "\n")


def load_trace(path) -> tuple[TraceHeader | None, list[TraceRecord]]:
    """Parse a trace file; malformed lines raise TraceParseError with
    the 1-based line number. Mixed sparse/full encodings are rejected."""
    header = None
    records: list[TraceRecord] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise TraceParseError(f"invalid JSON: {e.msg}", line=lineno) from None
            if lineno == 1 and "schema_version" in obj:
                header = TraceHeader.from_dict(obj)
                continue
            try:
                records.append(TraceRecord.from_dict(obj))
            except TraceParseError as e:
                raise TraceParseError(str(e), line=lineno) from None
            except (KeyError, TypeError, ValueError) as e:
                raise TraceParseError(f"bad record: {e}", line=lineno) from None
    kinds = {rec.is_sparse for rec in records}
    if len(kinds) > 1:
        raise TraceParseError("trace mixes sparse and full encodings")
    return header, records
