"""Exception hierarchy shared across the package."""


class NxflowError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(NxflowError, ValueError):
    """Invalid or inconsistent configuration values."""


class PyramidError(NxflowError, ValueError):
    """A field is too small (or otherwise unfit) for the requested pyramid."""


class MetricError(NxflowError, ValueError):
    """A metric is undefined for the given inputs (e.g. empty scope)."""


class FlowIOError(NxflowError, IOError):
    """Base class for file-format failures."""


class FormatError(FlowIOError):
    """Magic number, bit depth, or header field does not match the format."""


class CorruptFileError(FlowIOError):
    """Header parsed but the payload is truncated or inconsistent."""


class ConvergenceError(NxflowError, RuntimeError):
    """The solver failed to reach the requested tolerance."""
