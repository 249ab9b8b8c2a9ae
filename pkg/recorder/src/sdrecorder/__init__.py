"""Trace recorder: runs a draft/target model pair greedily over prompts
and writes sparse top-M logit traces (JSONL) for offline replay."""

from .errors import RecorderError, RunnerError, TokenizerMismatchError
from .record import RecorderConfig, record
from .runner import ToyRunner, get_runner

__all__ = [
    "RecorderConfig",
    "RecorderError",
    "RunnerError",
    "TokenizerMismatchError",
    "ToyRunner",
    "get_runner",
    "record",
]
