"""Exception hierarchy.

Everything raised on purpose by the package derives from ``BreathLinkError``.
``ConfigError`` marks bad inputs or configuration (the CLI maps it to exit
code 2); any other ``BreathLinkError`` is a runtime failure (exit code 1).
"""


class BreathLinkError(Exception):
    pass


class ConfigError(BreathLinkError, ValueError):
    """Invalid parameter, precondition, or configuration."""


class InvalidTimeError(ConfigError):
    """Evaluation time at or before the release instant."""


class OutOfPlumeError(ConfigError):
    """Plume evaluated at or upwind of the source."""


class ModelInapplicableError(ConfigError):
    """Closed form undefined for these parameters (e.g. plume with no wind)."""


class StabilityError(ConfigError):
    """Explicit grid scheme would be unstable or lose positivity."""


class HypothesesError(ConfigError):
    """Signal-present mean does not exceed the background mean."""


class CoverageError(ConfigError):
    """Requested window or emission lies outside the available data."""


class ResourceError(BreathLinkError):
    """Requested computation exceeds a configured size cap."""
