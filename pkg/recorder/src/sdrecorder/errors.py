class RecorderError(Exception):
    """Base class for recorder failures."""


class TokenizerMismatchError(RecorderError):
    """Draft and target runners disagree on the shared vocabulary."""


class RunnerError(RecorderError):
    """A model runner failed; the current prompt is skipped."""
