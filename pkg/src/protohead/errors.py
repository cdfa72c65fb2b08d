"""Exception taxonomy shared by every module.

The CLI maps these onto exit codes: config/validation problems exit 1,
file-format and I/O problems exit 2.
"""


class ProtoheadError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ProtoheadError):
    """Tensor shapes or lengths do not line up."""


class NumericError(ProtoheadError):
    """Non-finite values where finite ones are required."""


class ConfigError(ProtoheadError):
    """Invalid hyperparameter combination or config file."""


class ValidationError(ProtoheadError):
    """Well-formed input whose content violates an invariant (e.g. label range)."""


class FormatError(ProtoheadError):
    """Corrupt, truncated, or wrong-version on-disk payload."""


class ConsistencyError(ProtoheadError):
    """A trace or cached structure no longer matches the parameters it came from."""


class ProjectionError(ProtoheadError):
    """Prototype projection cannot be carried out (e.g. a class has no samples)."""


class DiagnosticError(ProtoheadError):
    """A diagnostic quantity is undefined for this input (e.g. zero normalizer)."""
