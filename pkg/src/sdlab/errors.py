"""Exception hierarchy shared across the package."""


class SdlabError(Exception):
    """Base class for all sdlab errors."""


class InvalidLogitsError(SdlabError):
    """Logit vector contains NaN/inf or is empty."""


class InvalidDistributionError(SdlabError):
    """Probability vector is negative, unnormalized, or degenerate."""


class DimensionMismatchError(SdlabError):
    """Array shapes disagree."""


class InvalidPairError(SdlabError):
    """Token pair (i, j) with i == j or index out of range."""


class ConfigError(SdlabError):
    """Invalid configuration value."""


class TrainingError(SdlabError):
    """Model training cannot proceed (empty corpus, single-class data, ...)."""


class ReplayExhaustedError(SdlabError):
    """Trace replay was asked for a step past the recorded horizon."""


class UndefinedResidualError(SdlabError):
    """Residual distribution requested for p == q."""


class UndefinedMetricError(SdlabError):
    """Metric requested over an empty report list."""


class TraceParseError(SdlabError):
    """Malformed trace file; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FeatureUnavailableError(SdlabError):
    """A policy or dataset builder needs model features the model does not expose."""
