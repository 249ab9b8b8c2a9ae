"""Model runners.

A runner exposes `vocab_size`, `hidden_dim`, and `step(prefix) ->
(hidden, logits)` for a token-id prefix. Real checkpoints are out of
scope; the built-in toy runner is a seeded linear head over a short
recency-weighted embedding average, enough to produce deterministic,
non-trivial logit pairs for recording.
"""

from __future__ import annotations

import numpy as np

from .errors import RecorderError, RunnerError


class ToyRunner:
    """Deterministic stand-in model addressed as ``toy:<vocab>:<seed>``."""

    def __init__(self, vocab_size: int, seed: int, hidden_dim: int = 16):
        if vocab_size < 2:
            raise RecorderError(f"vocab_size must be >= 2, got {vocab_size}")
        self.vocab_size = vocab_size
        self.hidden_dim = hidden_dim
        rng = np.random.default_rng(seed)
        self._embed = rng.normal(size=(vocab_size, hidden_dim))
        self._head = rng.normal(size=(vocab_size, hidden_dim)) / np.sqrt(hidden_dim)

    def step(self, prefix) -> tuple[np.ndarray, np.ndarray]:
        if not len(prefix):
            raise RunnerError("empty prefix")
        window = list(prefix)[-4:]
        if any(not 0 <= t < self.vocab_size for t in window):
            raise RunnerError(f"token out of range for vocab {self.vocab_size}")
        weights = 0.5 ** np.arange(len(window))[::-1]
        h = np.tanh(weights @ self._embed[window] / weights.sum())
        return h, self._head @ h


def get_runner(identifier: str):
    """Resolve a model identifier; only ``toy:<vocab>:<seed>`` is bundled."""
    parts = identifier.split(":")
    if len(parts) == 3 and parts[0] == "toy":
        try:
            return ToyRunner(int(parts[1]), int(parts[2]))
        except ValueError:
            raise RecorderError(f"bad toy runner identifier {identifier!r}") from None
    raise RecorderError(
        f"no runner available for {identifier!r}; expected toy:<vocab>:<seed>")
